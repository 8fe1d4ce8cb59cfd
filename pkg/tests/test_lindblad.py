import math

import numpy as np
import pytest
from scipy import sparse

from purcellsim import TWO_PI, DriveSpec, bundled_device
from purcellsim.errors import (
    ConfigError,
    DimensionGuard,
    FitUnstable,
    NonUniqueSteadyState,
    ParameterWarning,
    StepTooLarge,
    TruncationWarning,
)
from purcellsim import lindblad
from purcellsim.lindblad import (
    FockConfig,
    LindbladSystem,
    build_hamiltonian,
    evolve,
    extract_meas_dephasing,
    lindblad_rhs,
    product_state,
    steady_state,
)
from purcellsim.meanfield import follow_branch, io_transform, measurement_rate, mf_integrate, mf_steady_branches
from purcellsim.model import detunings

from conftest import ghz, mhz

SMALL = FockConfig(4, 3)


def random_density(dim, rng):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def linear_device(device):
    return device.replace(filter_anharm=0.0)


# --- configuration and Hamiltonian ---

def test_fock_guards():
    with pytest.raises(ConfigError):
        FockConfig(1, 3)
    with pytest.raises(DimensionGuard):
        FockConfig(64, 33)
    assert FockConfig(64, 32).dim == 4096


def test_hamiltonian_hermitian(device):
    h = build_hamiltonian(device, DriveSpec(ghz(9.8), mhz(50), "g"), SMALL)
    assert abs(h - h.getH()).max() < 1e-6  # entries are ~1e10 rad/s


def test_hamiltonian_uncoupled_diagonal(device):
    dev = device.replace(g_cf=0.0, filter_anharm=0.0)
    drive = DriveSpec(ghz(9.8), 0.0)
    h = build_hamiltonian(dev, drive, SMALL).toarray()
    dc, df, _ = detunings(dev, drive)
    assert np.count_nonzero(h - np.diag(np.diag(h))) == 0
    for q in range(2):
        for m in range(SMALL.n_c):
            for k in range(SMALL.n_f):
                i = (q * SMALL.n_c + m) * SMALL.n_f + k
                assert h[i, i] == pytest.approx((dc + q * dev.chi_qc) * m + df * k, rel=1e-14, abs=1e-3)


def test_hamiltonian_kerr_and_drive(device):
    dev = device.replace(g_cf=0.0)
    drive = DriveSpec(dev.filter_freq, mhz(40))
    cfg = FockConfig(2, 5)
    h = build_hamiltonian(dev, drive, cfg).toarray()
    for k in range(cfg.n_f):
        assert h[k, k].real == pytest.approx(0.5 * dev.filter_anharm * k * (k - 1), abs=1e-3)
    for k in range(cfg.n_f - 1):
        assert h[k + 1, k] == pytest.approx(0.5 * drive.drive_amp * math.sqrt(k + 1), rel=1e-14)


# --- generator ---

@pytest.fixture(scope="module")
def system(device):
    return LindbladSystem(device, DriveSpec(ghz(9.8), mhz(80), "g"), SMALL)


def test_tensor_rhs_matches_sparse_reference(system):
    rng = np.random.default_rng(0)
    for _ in range(5):
        rho = random_density(SMALL.dim, rng)
        ref = system.rhs_sparse(rho)
        scale = np.max(np.abs(ref))
        assert np.max(np.abs(system.rhs(rho) - ref)) < 1e-12 * scale
        assert np.max(np.abs(system.rhs_hermitian(rho) - ref)) < 1e-12 * scale
    # the general path must also handle non-Hermitian input
    x = rng.normal(size=(SMALL.dim,) * 2) + 1j * rng.normal(size=(SMALL.dim,) * 2)
    assert np.max(np.abs(system.rhs(x) - system.rhs_sparse(x))) < 1e-12 * np.max(np.abs(system.rhs_sparse(x)))


def test_liouvillian_matches_rhs(system):
    rho = random_density(SMALL.dim, np.random.default_rng(1))
    v = system.liouvillian() @ rho.reshape(-1, order="F")
    ref = system.rhs(rho)
    assert np.max(np.abs(v.reshape(SMALL.dim, SMALL.dim, order="F") - ref)) < 1e-12 * np.max(np.abs(ref))


def test_generator_trace_preserving(system):
    rng = np.random.default_rng(2)
    for _ in range(5):
        rho = random_density(SMALL.dim, rng)
        out = system.rhs(rho)
        assert abs(np.trace(out)) < 1e-12 * np.max(np.abs(out))


def test_dark_state(device):
    rho = product_state(SMALL)
    out = lindblad_rhs(rho, device, DriveSpec(ghz(9.8), 0.0), SMALL)
    assert np.max(np.abs(out)) == 0.0


def test_qubit_decay_rate(device):
    rho = product_state(SMALL, qubit=(0.0, 1.0))
    out = lindblad_rhs(rho, device, DriveSpec(ghz(9.8), 0.0), SMALL)
    d = SMALL.n_c * SMALL.n_f
    assert np.trace(out[d:, d:]).real == pytest.approx(-1 / device.qubit_t1, rel=1e-12)


def test_filter_photon_decay_rate(device):
    dev = device.replace(g_cf=0.0)
    rho = product_state(SMALL, k=1)
    sysm = LindbladSystem(dev, DriveSpec(ghz(9.8), 0.0), SMALL)
    assert sysm.n_f(sysm.rhs(rho)) == pytest.approx(-dev.kappa_f, rel=1e-12)
    ev = evolve(rho, dev, DriveSpec(ghz(9.8), 0.0), SMALL, 3 / dev.kappa_f, stride=20, system=sysm)
    assert np.allclose(ev.n_f, np.exp(-dev.kappa_f * ev.t), rtol=1e-7)


# --- evolution ---

def test_step_guard(system, device):
    with pytest.raises(StepTooLarge):
        evolve(product_state(SMALL), device, system.drive, SMALL, 1e-9, dt=2 * system.max_step(), system=system)


def test_non_hermitian_initial_state(system, device):
    rho = product_state(SMALL)
    rho[0, 1] = 0.1
    with pytest.raises(ConfigError):
        evolve(rho, device, system.drive, SMALL, 1e-10, system=system)


def test_single_photon_ringdown(device):
    # one excitation: the Kerr term is inactive, so the mean field is exact
    dev = device.replace(filter_freq=device.resonator_freq, filter_anharm=0.0)
    cfg = FockConfig(2, 2)
    drive = DriveSpec(dev.resonator_freq, 0.0)
    sysm = LindbladSystem(dev, drive, cfg)
    dt = sysm.max_step()
    n = int(math.ceil(11e-9 / dt / 10)) * 10
    ev = evolve(product_state(cfg, k=1), dev, drive, cfg, n * dt, dt=dt, stride=10, system=sysm)
    mf = mf_integrate((0, 1), dev, drive, n * dt, dt, stride=10)
    assert np.max(np.abs(ev.n_c + ev.n_f - mf.excitation)) < 1e-6
    assert ev.n_c[-1] + ev.n_f[-1] <= 1e-4
    assert np.max(np.abs(ev.trace_err)) < 1e-9


def test_ehrenfest_linear_limit(device):
    dev = device.replace(filter_anharm=0.0, qubit_t1=math.inf)
    cfg = FockConfig(6, 4)
    drive = DriveSpec(dev.resonator_freq + 0.5 * dev.chi_qc, mhz(20), "g")
    sysm = LindbladSystem(dev, drive, cfg)
    dt, stride = sysm.max_step(), 20
    n = 100 * stride
    ev = evolve(product_state(cfg), dev, drive, cfg, n * dt, dt=dt, stride=stride, system=sysm)
    mf = mf_integrate((0, 0), dev, drive, n * dt, dt, stride=stride)
    assert np.array_equal(ev.t, mf.t)
    assert np.max(np.abs(ev.c_mean - mf.c)) < 1e-4
    assert np.max(np.abs(ev.f_mean - mf.f)) < 1e-4
    assert ev.max_herm_drift < 1e-10
    assert np.max(ev.trace_err) < 1e-9
    assert np.min(ev.min_eig) > -1e-8


# --- steady state ---

def test_steady_state_vacuum(device):
    rho = steady_state(device, DriveSpec(ghz(9.8), 0.0), FockConfig(3, 2))
    assert np.allclose(rho, product_state(FockConfig(3, 2)), atol=1e-9)


def test_steady_state_matches_mean_field(device):
    dev = linear_device(device)
    drive = DriveSpec(ghz(9.8), mhz(30), "g")
    (b,) = mf_steady_branches(dev, drive)
    cfg = FockConfig(8, 4)
    rho = steady_state(dev, drive, cfg)
    sysm = LindbladSystem(dev, drive, cfg)
    assert sysm.n_c(rho) == pytest.approx(b.n_c, rel=1e-6)
    assert sysm.n_f(rho) == pytest.approx(b.n_f, rel=1e-6)
    assert np.max(np.abs(sysm.rhs(rho))) < 1e-9 * sysm.spectral_radius_bound()


def test_steady_state_dense_and_sparse_paths_agree(device, monkeypatch):
    dev = linear_device(device)
    drive = DriveSpec(ghz(9.8), mhz(30), "g")
    cfg = FockConfig(4, 3)
    dense = steady_state(dev, drive, cfg)
    monkeypatch.setattr(lindblad, "DENSE_NULLSPACE_DIM", 0)
    sparse_rho = steady_state(dev, drive, cfg)
    assert np.max(np.abs(dense - sparse_rho)) < 1e-9


def test_steady_state_non_unique(device):
    # with no qubit relaxation the qubit populations are conserved
    dev = device.replace(qubit_t1=math.inf)
    with pytest.raises(NonUniqueSteadyState):
        steady_state(dev, DriveSpec(ghz(9.8), mhz(30)), FockConfig(3, 2))


def test_truncation_warning(device):
    dev = linear_device(device)
    with pytest.warns(TruncationWarning):
        steady_state(dev, DriveSpec(ghz(9.8), mhz(300), "g"), FockConfig(4, 3))


def test_truncation_convergence(device):
    dev = linear_device(device)
    drive = DriveSpec(ghz(9.8), mhz(30), "g")
    vals = []
    for cfg in (FockConfig(5, 3), FockConfig(10, 6)):
        sysm = LindbladSystem(dev, drive, cfg)
        rho = steady_state(dev, drive, cfg)
        vals.append((sysm.n_c(rho), sysm.n_f(rho)))
    assert vals[1] == pytest.approx(vals[0], rel=0.01)


# --- dephasing extraction ---

def test_dephasing_zero_without_drive_or_decay(device):
    dev = device.replace(qubit_t1=math.inf)
    fit = extract_meas_dephasing(dev, DriveSpec(ghz(9.8), 0.0), FockConfig(2, 2), t_window=2e-9)
    assert abs(fit.gamma_phi) < 1.0  # 1/s, against MHz-scale rates elsewhere


def test_dephasing_baseline_subtracted(device):
    dev = linear_device(device).replace(chi_qc=0.0)
    drive = DriveSpec(dev.resonator_freq + mhz(1), mhz(20), "g")
    fit = extract_meas_dephasing(dev, drive, FockConfig(4, 3), t_window=3e-9)
    assert fit.gamma_total == pytest.approx(0.5 / dev.qubit_t1, rel=1e-3)
    assert fit.gamma_phi < 1e-3 / dev.qubit_t1


def test_dephasing_unstable_fit(device):
    dev = linear_device(device)
    with pytest.raises(FitUnstable):
        extract_meas_dephasing(dev, DriveSpec(ghz(9.8), mhz(20), "g"), FockConfig(3, 2), t_window=1e-9,
                               min_r2=1.0 + 1e-9)


def test_dephasing_resonant_filter_matches_semiclassical(device):
    # strongly hybridised, resonant filter: the exact linear-system rate is
    # |b_out^e - b_out^g|^2 / 2 of the two coherent steady states
    dev = device.replace(filter_freq=device.resonator_freq, filter_anharm=0.0)
    w = dev.resonator_freq + 0.5 * dev.chi_qc
    br, _ = follow_branch(dev, DriveSpec(w, 1.0, "g"))
    amp = math.sqrt(0.5 / br.n_c)
    drive = DriveSpec(w, amp, "g")
    fit = extract_meas_dephasing(dev, drive, FockConfig(6, 5), t_window=6e-9)
    ref = measurement_rate(dev, w, amp).gamma_meas
    assert fit.gamma_phi == pytest.approx(ref, rel=0.1)
    assert fit.r_squared > 0.99
