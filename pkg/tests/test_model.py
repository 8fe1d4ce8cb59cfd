import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from purcellsim import TWO_PI, DeviceParams, DriveSpec, bundled_device
from purcellsim.errors import (
    ConfigError,
    CouplingIsZero,
    InconsistentTimes,
    NegativeRadicand,
    ParameterWarning,
)
from purcellsim.model import (
    coupled_mode_matrix,
    critical_photon_number,
    detunings,
    effective_linewidth,
    hybridized_modes,
    pure_dephasing_time,
    qubit_resonator_coupling,
)

from conftest import ghz, mhz


def test_bundled_device_matches_tables(device):
    hz = device.to_hz_dict()
    assert hz["qubit_freq_hz"] == pytest.approx(8.4969e9)
    assert hz["resonator_freq_hz"] == pytest.approx(9.7927e9)
    assert hz["chi_qc_hz"] == pytest.approx(-11.8e6)
    assert hz["g_cf_hz"] == pytest.approx(88e6)
    assert hz["kappa_f_hz"] == pytest.approx(0.31e9)
    assert hz["qubit_t1_s"] == 17e-6


def test_json_roundtrip(tmp_path, device):
    p = tmp_path / "dev.json"
    p.write_text(json.dumps(device.to_hz_dict()))
    assert DeviceParams.from_json(p) == device


def test_json_missing_key():
    with pytest.raises(ConfigError):
        DeviceParams.from_hz_dict({"qubit_freq_hz": 1e9})


@pytest.mark.parametrize("field,value", [("kappa_f", 0.0), ("g_cf", -1.0), ("qubit_t1", 0.0),
                                         ("filter_freq", -1.0), ("filter_anharm", 1.0)])
def test_device_invariants(device, field, value):
    with pytest.raises(ConfigError):
        device.replace(**{field: value})


def test_overcoupled_warning(device):
    with pytest.warns(ParameterWarning):
        device.replace(chi_qc=-2 * device.kappa_f)


def test_drive_amp_nonnegative():
    with pytest.raises(ConfigError):
        DriveSpec(1.0, -1.0)
    with pytest.raises(ConfigError):
        DriveSpec(1.0, 0.0, "x")


# --- detunings ---

def test_detunings_table_values(device):
    dc, df, dcp = detunings(device, DriveSpec(ghz(9.8), 0.0, "g"))
    assert dc / TWO_PI == pytest.approx(-7.3e6, abs=1e3)
    assert dcp == dc
    assert df / TWO_PI == pytest.approx(9.791e9 - 9.8e9)
    _, _, dcp_e = detunings(device, DriveSpec(ghz(9.8), 0.0, "e"))
    assert dcp_e / TWO_PI == pytest.approx(-7.3e6 - 11.8e6, abs=1e3)


def test_detunings_on_resonance(device):
    dc, _, _ = detunings(device, DriveSpec(device.resonator_freq))
    assert dc == 0.0


# --- g_qc and n_crit ---

def test_g_qc_table_value(device):
    # hand arithmetic in Hz: D = -1.2958e9, D + a = -1.6423e9
    d, a, chi = -1.2958e9, -346.5e6, -11.8e6
    oracle = math.sqrt(d * (d + a) * chi / (2 * a))
    assert oracle == pytest.approx(190.36e6, rel=1e-4)
    assert qubit_resonator_coupling(device) / TWO_PI == pytest.approx(oracle, rel=1e-9)


def test_g_qc_zero_chi(device):
    assert qubit_resonator_coupling(device.replace(chi_qc=0.0)) == 0.0


def test_g_qc_inversion(device):
    g, a = mhz(70), ghz(-0.3)
    wc = device.resonator_freq
    wq = wc - ghz(1.0)
    dq = wq - wc
    chi = 2 * a * g * g / (dq * (dq + a))
    dev = device.replace(qubit_freq=wq, qubit_anharm=a, chi_qc=chi)
    assert qubit_resonator_coupling(dev) == pytest.approx(g, rel=1e-12)


def test_g_qc_negative_radicand(device):
    with pytest.raises(NegativeRadicand):
        qubit_resonator_coupling(device.replace(chi_qc=-device.chi_qc))


def test_n_crit_table_value(device):
    n = critical_photon_number(device)
    assert n == pytest.approx(11.58, abs=0.01)
    assert abs(n - 12) <= 1


def test_n_crit_scaling(device):
    def with_detuning(dq, g):
        a = device.qubit_anharm
        chi = 2 * a * g * g / (dq * (dq + a))
        return device.replace(qubit_freq=device.resonator_freq + dq, chi_qc=chi)

    g = mhz(150)
    n1 = critical_photon_number(with_detuning(ghz(-1.0), g))
    n2 = critical_photon_number(with_detuning(ghz(-2.0), g))
    assert n2 / n1 == pytest.approx(4.0, rel=1e-10)


def test_n_crit_zero_coupling(device):
    with pytest.raises(CouplingIsZero):
        critical_photon_number(device.replace(chi_qc=0.0))


@given(st.floats(-3.0, -0.5), st.floats(-0.4, -0.1), st.floats(10, 300))
def test_n_crit_matches_direct_formula(dq_ghz, a_ghz, g_mhz):
    d = bundled_device()
    dq, a, g = ghz(dq_ghz), ghz(a_ghz), mhz(g_mhz)
    chi = 2 * a * g * g / (dq * (dq + a))
    dev = d.replace(qubit_freq=d.resonator_freq + dq, qubit_anharm=a, chi_qc=chi)
    gq = qubit_resonator_coupling(dev)
    assert critical_photon_number(dev) == pytest.approx(dq * dq / (4 * gq * gq), rel=1e-12)


# --- hybridised modes ---

def test_hybrid_linewidths_resonant(device):
    dev = device.replace(filter_freq=device.resonator_freq)
    m = hybridized_modes(dev)
    assert m.kappa_plus == dev.kappa_f / 2
    assert m.kappa_minus == dev.kappa_f / 2
    assert m.kappa_plus / TWO_PI == pytest.approx(155e6)


def test_hybrid_uncoupled(device):
    m = hybridized_modes(device.replace(g_cf=0.0, filter_freq=device.resonator_freq))
    pairs = sorted([(m.omega_plus, m.kappa_plus), (m.omega_minus, m.kappa_minus)], key=lambda p: p[1])
    assert pairs[0] == pytest.approx((device.resonator_freq, 0.0), abs=1e-3)
    assert pairs[1] == pytest.approx((device.resonator_freq, device.kappa_f))


def test_hybrid_weak_coupling_overdamped(device):
    dev = device.replace(g_cf=mhz(10), filter_freq=device.resonator_freq)
    m = hybridized_modes(dev)
    assert m.omega_plus == pytest.approx(dev.resonator_freq, rel=1e-15)
    assert m.omega_minus == pytest.approx(dev.resonator_freq, rel=1e-15)
    assert abs(m.kappa_plus - m.kappa_minus) > 0.5 * dev.kappa_f


@given(st.floats(0, 300), st.floats(10, 800), st.floats(-1.0, 1.0))
def test_hybrid_modes_match_eigenvalues(g_mhz, k_mhz, det_ghz):
    d = bundled_device()
    dev = d.replace(g_cf=mhz(g_mhz), kappa_f=mhz(k_mhz), filter_freq=d.resonator_freq + ghz(det_ghz),
                    chi_qc=-mhz(1.0))
    m = hybridized_modes(dev)
    lam = np.linalg.eigvals(coupled_mode_matrix(dev))
    # eigenvalues of [[wc, g], [g, wf - ik/2]] are w - i k_mode/2
    got = [complex(m.omega_plus, -m.kappa_plus / 2), complex(m.omega_minus, -m.kappa_minus / 2)]
    scale = dev.kappa_f + dev.g_cf + abs(dev.filter_freq - dev.resonator_freq)
    for a in got:
        assert np.min(np.abs(lam - a)) < 1e-6 * scale
    assert abs(sum(got) - lam.sum()) < 1e-6 * scale
    assert m.kappa_plus + m.kappa_minus == pytest.approx(dev.kappa_f, rel=1e-9)
    assert m.omega_plus + m.omega_minus == pytest.approx(dev.resonator_freq + dev.filter_freq, rel=1e-12)


# --- effective linewidth ---

def test_effective_linewidth_resonant(device):
    dev = device.replace(filter_freq=device.resonator_freq)
    k, _ = effective_linewidth(dev)
    assert k == pytest.approx(dev.kappa_f / 2, rel=1e-9)


def test_effective_linewidth_detuned(device):
    dev = device.replace(filter_freq=device.resonator_freq - ghz(0.42))
    k, _ = effective_linewidth(dev)
    assert k / TWO_PI == pytest.approx(12e6, abs=1.5e6)
    assert k / TWO_PI == pytest.approx(abs(device.chi_qc) / TWO_PI, rel=0.1)


def test_effective_linewidth_uncoupled(device):
    k, w = effective_linewidth(device.replace(g_cf=0.0))
    assert k == 0.0
    assert w == device.resonator_freq


def test_effective_linewidth_continuity_at_exceptional_point(device):
    dev = device.replace(g_cf=device.kappa_f / 4)
    base = dev.resonator_freq
    ks = [effective_linewidth(dev.replace(filter_freq=base + TWO_PI * 1e3 * i))[0] for i in range(-5, 6)]
    assert np.max(np.abs(np.diff(ks))) / TWO_PI < 1e6


def test_model_functions_are_pure(device):
    a = effective_linewidth(device), hybridized_modes(device), critical_photon_number(device)
    b = effective_linewidth(device), hybridized_modes(device), critical_photon_number(device)
    assert a == b


# --- pure dephasing ---

def test_pure_dephasing_table_value():
    # 1/29 - 1/34 per microsecond
    oracle = 1.0 / (1.0 / 29e-6 - 1.0 / 34e-6)
    assert pure_dephasing_time(29e-6, 17e-6) == pytest.approx(oracle)
    assert oracle == pytest.approx(197.2e-6, rel=1e-3)


def test_pure_dephasing_limits():
    assert pure_dephasing_time(34e-6, 17e-6) == math.inf
    assert pure_dephasing_time(10e-6, 10e-6) == pytest.approx(20e-6)
    with pytest.raises(InconsistentTimes):
        pure_dephasing_time(40e-6, 17e-6)


@given(st.floats(1e-6, 1e-3), st.floats(0.01, 0.999))
def test_pure_dephasing_at_least_t2(t1, frac):
    t2 = 2 * t1 * frac
    assert pure_dephasing_time(t2, t1) >= t2
