"""Linear-response theory: reflection spectra, dephasing rates, Purcell rates.

Rates are returned in 1/s; frequencies are angular (rad/s) throughout.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import QuadratureNonConvergence
from .model import (
    HBAR,
    TWO_PI,
    DeviceParams,
    QubitState,
    coupled_mode_matrix,
    dressed_resonator_freq,
    qubit_resonator_coupling,
)

QUAD_RTOL = 1e-8
TAIL_RTOL = 1e-9
WINDOW_LINEWIDTHS = 20.0


@dataclass(frozen=True)
class ReflectionPoint:
    freq: float
    s11: complex


@dataclass(frozen=True)
class DephasingRates:
    gamma_noise: float
    gamma_meas: float
    dynamic_range: float


@dataclass
class NoiseSensitivityCurve:
    filter_detuning: np.ndarray
    sensitivity: np.ndarray
    argmin: float = math.nan
    argmax: float = math.nan
    argmax_mirror: float = math.nan
    ratio: float = math.nan
    local_maxima: list = field(default_factory=list)


@dataclass(frozen=True)
class PurcellReport:
    gamma_ex_filtered: float
    gamma_ex_bare: float
    t1_limit_filtered: float
    t1_limit_bare: float
    suppression_factor: float


# --- reflection coefficients -------------------------------------------------

def s11_linear(device: DeviceParams, omega, state: QubitState = "g"):
    """Low-power reflection coefficient of the resonator-filter pair.

    ``S11 = 1 - i k_f (w - w_c') / ((w - w_c')(w - w_f + i k_f/2) - g_cf^2)``.
    Accepts scalars or arrays.
    """
    x = np.asarray(omega, dtype=float) - dressed_resonator_freq(device, state)
    y = np.asarray(omega, dtype=float) - device.filter_freq + 0.5j * device.kappa_f
    out = 1.0 - 1j * device.kappa_f * x / (x * y - device.g_cf ** 2)
    return out if out.ndim else complex(out)


def s11_single_mode(omega, resonator_freq: float, kappa: float):
    """Reflection off a single overcoupled resonator, ``1 - i k / (w - w_c + i k/2)``."""
    out = 1.0 - 1j * kappa / (np.asarray(omega, dtype=float) - resonator_freq + 0.5j * kappa)
    return out if out.ndim else complex(out)


def _s11_scalar(w, wcp, wf, kf, g2):
    x = w - wcp
    return 1.0 - 1j * kf * x / (x * complex(w - wf, 0.5 * kf) - g2)


# --- closed forms ----------------------------------------------------------------

def gamma_noise_closed(kappa_eff: float, chi_qc: float, n_noise: float) -> float:
    """Photon-noise dephasing of a single resonator, ``k chi^2 / (k^2 + chi^2) * n``."""
    chi2 = chi_qc * chi_qc
    if chi2 == 0.0:
        return 0.0
    return kappa_eff * chi2 / (kappa_eff * kappa_eff + chi2) * n_noise


def gamma_meas_closed(kappa_eff: float, chi_qc: float, n_meas: float) -> float:
    """Measurement-induced dephasing; exactly twice the noise form at equal photon number."""
    return 2.0 * gamma_noise_closed(kappa_eff, chi_qc, n_meas)


def dephasing_rates(kappa_eff: float, chi_qc: float, n_meas: float, n_noise: float) -> DephasingRates:
    g_noise = gamma_noise_closed(kappa_eff, chi_qc, n_noise)
    g_meas = gamma_meas_closed(kappa_eff, chi_qc, n_meas)
    # the ratio is taken from the photon numbers so it stays exact
    dyn = 2.0 * n_meas / n_noise if n_noise > 0 else math.inf
    return DephasingRates(g_noise, g_meas, dyn)


# --- spectral integrals ----------------------------------------------------------

def _quad(fn, a, b, points=None):
    pts = None
    if points is not None:
        pts = [p for p in points if a < p < b] or None
    val, err = integrate.quad(fn, a, b, points=pts, limit=400,
                              epsabs=0.0, epsrel=QUAD_RTOL * 0.1)
    return val, err


def spectral_integral(fn, centres, widths, window=WINDOW_LINEWIDTHS, max_octaves=60):
    """Integrate ``fn(w)`` over the real line.

    The core window spans ``window`` linewidths around every pole; tails are
    added octave by octave until the last one contributes less than
    ``TAIL_RTOL`` of the running total.
    """
    centres = np.asarray(centres, dtype=float)
    widths = np.abs(np.asarray(widths, dtype=float))
    span = max(float(np.max(widths)), 1e-12 * float(np.max(np.abs(centres))), 1e-300)
    lo = float(np.min(centres - window * np.maximum(widths, span * 1e-6)))
    hi = float(np.max(centres + window * np.maximum(widths, span * 1e-6)))
    total, err = _quad(fn, lo, hi, points=sorted(set(centres.tolist())))
    step = hi - lo
    for sign in (-1.0, 1.0):
        edge, width = (lo, step) if sign < 0 else (hi, step)
        for _ in range(max_octaves):
            a, b = (edge - width, edge) if sign < 0 else (edge, edge + width)
            piece, perr = _quad(fn, a, b)
            total += piece
            err += perr
            edge = a if sign < 0 else b
            width *= 2.0
            if abs(piece) <= TAIL_RTOL * abs(total):
                break
        else:
            raise QuadratureNonConvergence("spectral tail did not converge")
    if total != 0.0 and err > QUAD_RTOL * abs(total):
        raise QuadratureNonConvergence(
            f"quadrature error {err:.3g} exceeds {QUAD_RTOL:g} x {abs(total):.3g}")
    return total


def _mode_poles(device: DeviceParams):
    centres, widths = [], []
    for state in ("g", "e"):
        for lam in np.linalg.eigvals(coupled_mode_matrix(device, state)):
            centres.append(lam.real)
            widths.append(-2.0 * lam.imag)
    return centres, widths


def gamma_noise_integral(device: DeviceParams, n_noise: float = 1.0) -> float:
    """Photon-noise dephasing for flat input noise through the two-mode system.

    ``Gamma = 1/2 n_noise int |S11^e - S11^g|^2 dw / 2pi``.
    """
    if n_noise == 0 or device.chi_qc == 0:
        return 0.0
    wc_g = device.resonator_freq
    wc_e = device.resonator_freq + device.chi_qc
    wf, kf, g2 = device.filter_freq, device.kappa_f, device.g_cf ** 2

    def integrand(w):
        d = _s11_scalar(w, wc_e, wf, kf, g2) - _s11_scalar(w, wc_g, wf, kf, g2)
        return (d.real * d.real + d.imag * d.imag) / TWO_PI

    centres, widths = _mode_poles(device)
    return 0.5 * n_noise * spectral_integral(integrand, centres, widths)


def gamma_noise_integral_single(kappa_eff: float, chi_qc: float, n_noise: float = 1.0,
                                resonator_freq: float = 0.0) -> float:
    """Same integral for a bare overcoupled resonator (no filter)."""
    if n_noise == 0 or chi_qc == 0:
        return 0.0
    wg, we, k = resonator_freq, resonator_freq + chi_qc, kappa_eff

    def integrand(w):
        d = 1j * k / complex(w - wg, 0.5 * k) - 1j * k / complex(w - we, 0.5 * k)
        return (d.real * d.real + d.imag * d.imag) / TWO_PI

    return 0.5 * n_noise * spectral_integral(integrand, [wg, we], [k, k])


def noise_photon_check(kappa_eff: float, half_window: float = 40.0) -> float:
    """Photon number per unit noise PSD, ``int k / (x^2 + k^2/4) dx / 2pi`` over ``+-half_window * k``.

    The untruncated value is 1; the finite window drops ``1 - (2/pi) atan(2 N)``.
    """
    k = kappa_eff

    def lorentz(x):
        return k / (x * x + 0.25 * k * k) / TWO_PI

    edges = np.linspace(-half_window * k, half_window * k, 9)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        total += _quad(lorentz, a, b, points=[0.0])[0]
    return total


def meas_dephasing_model(device: DeviceParams, omega_meas, p_meas):
    """``Gamma = 1/2 |S11^e - S11^g|^2 P / (hbar w)`` evaluated at the tone frequency."""
    omega_meas = np.asarray(omega_meas, dtype=float)
    diff = s11_linear(device, omega_meas, "e") - s11_linear(device, omega_meas, "g")
    out = 0.5 * np.abs(diff) ** 2 * np.asarray(p_meas, dtype=float) / (HBAR * omega_meas)
    return out if np.ndim(out) else float(out)


def _local_maxima(y):
    idx = [i for i in range(1, len(y) - 1) if y[i] >= y[i - 1] and y[i] > y[i + 1]]
    if len(y) > 1 and y[0] > y[1]:
        idx.insert(0, 0)
    if len(y) > 1 and y[-1] > y[-2]:
        idx.append(len(y) - 1)
    return idx


def noise_sensitivity_sweep(device: DeviceParams, filter_detuning=None, threads: int = 1,
                            tie_rtol: float = 1e-3) -> NoiseSensitivityCurve:
    """Noise sensitivity ``Gamma_noise / n_noise`` versus filter detuning ``w_f - w_c``.

    The curve is mirror-symmetric about the mean dressed resonator frequency,
    so its global maximum is two-fold degenerate. ``argmax`` reports the
    maximum on the lower-frequency side: the leftmost local maximum within
    ``tie_rtol`` of the global maximum. ``argmax_mirror`` is its partner.
    """
    if filter_detuning is None:
        filter_detuning = np.linspace(-0.6e9, 0.6e9, 201) * TWO_PI
    det = np.asarray(filter_detuning, dtype=float)
    if det.size == 0:
        raise ValueError("detuning grid is empty")

    def point(d):
        return gamma_noise_integral(device.replace(filter_freq=device.resonator_freq + d), 1.0)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            sens = np.array(list(pool.map(point, det)))
    else:
        sens = np.array([point(d) for d in det])

    curve = NoiseSensitivityCurve(det, sens)
    top = float(sens.max())
    curve.argmin = float(det[int(np.argmin(sens))])
    maxima = _local_maxima(sens) or [int(np.argmax(sens))]
    curve.local_maxima = [float(det[i]) for i in maxima]
    near_top = [i for i in maxima if sens[i] >= top * (1.0 - tie_rtol)]
    curve.argmax = float(det[near_top[0]])
    curve.argmax_mirror = float(det[near_top[-1]])
    curve.ratio = top / float(sens.min()) if sens.min() > 0 else math.inf
    return curve


# --- Purcell ---------------------------------------------------------------------

def resonator_noise_psd(device: DeviceParams, omega):
    """Vacuum noise spectral density of the resonator field seen through the filter."""
    x = np.asarray(omega, dtype=float) - device.resonator_freq
    y = np.asarray(omega, dtype=float) - device.filter_freq + 0.5j * device.kappa_f
    out = np.abs(device.g_cf * math.sqrt(device.kappa_f) / (x * y - device.g_cf ** 2)) ** 2
    return out if out.ndim else float(out)


def purcell_filtered(device: DeviceParams) -> float:
    """Qubit decay rate into the waveguide through resonator and filter (golden rule)."""
    g_qc = qubit_resonator_coupling(device)
    dq = device.qubit_freq - device.resonator_freq
    den = dq * complex(device.qubit_freq - device.filter_freq, 0.5 * device.kappa_f) - device.g_cf ** 2
    return g_qc ** 2 * device.g_cf ** 2 * device.kappa_f / abs(den) ** 2


def purcell_bare(device: DeviceParams) -> float:
    """Decay rate with no filter and a resonator linewidth of ``kappa_f / 2``."""
    g_qc = qubit_resonator_coupling(device)
    dq = device.qubit_freq - device.resonator_freq
    return (g_qc / dq) ** 2 * device.kappa_f / 2.0


def purcell_report(device: DeviceParams) -> PurcellReport:
    filt = purcell_filtered(device)
    bare = purcell_bare(device)
    return PurcellReport(
        gamma_ex_filtered=filt,
        gamma_ex_bare=bare,
        t1_limit_filtered=1.0 / filt if filt > 0 else math.inf,
        t1_limit_bare=1.0 / bare if bare > 0 else math.inf,
        suppression_factor=bare / filt if filt > 0 else math.inf,
    )
