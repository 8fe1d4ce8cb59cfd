"""Shared-parameter least-squares fit of measurement-induced dephasing spectra.

Each dataset is one coil setting: a list of tone frequencies and powers with
measured dephasing rates. The resonator frequency, dispersive shift, coupling
and filter linewidth are shared; the filter frequency is fitted per dataset.
Parameter vector layout: ``[w_c, chi_qc, g_cf, kappa_f, w_f(0), w_f(1), ...]``,
all in rad/s.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, PurcellSimError, SingularNormalMatrix
from .linear import meas_dephasing_model
from .meanfield import s11_nonlinear_sweep
from .model import TWO_PI, DeviceParams

log = logging.getLogger(__name__)

SHARED_NAMES = ("resonator_freq", "chi_qc", "g_cf", "kappa_f")
FD_REL_STEP = 1e-6
CORR_FLAG = 0.9


@dataclass(frozen=True)
class FitDataset:
    """One coil setting: tone frequencies (rad/s), powers (W), rates and errors (1/s)."""

    group_tag: str
    omega: np.ndarray
    p_meas: np.ndarray
    gamma: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(getattr(self, k), dtype=float) for k in ("omega", "p_meas", "gamma", "sigma")]
        if len({a.shape for a in arrs}) != 1 or arrs[0].ndim != 1:
            raise ConfigError(f"group {self.group_tag}: columns must be 1-D and equally long")
        if arrs[0].size < 4:
            raise ConfigError(f"group {self.group_tag}: need at least 4 points")
        if np.any(arrs[3] <= 0):
            raise ConfigError(f"group {self.group_tag}: sigma must be > 0")
        for k, a in zip(("omega", "p_meas", "gamma", "sigma"), arrs):
            object.__setattr__(self, k, a)

    def __len__(self):
        return self.omega.size


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    jac: np.ndarray
    residuals: np.ndarray
    n_iter: int
    converged: bool


@dataclass
class FitResult:
    params: np.ndarray
    covariance: np.ndarray
    residuals: np.ndarray
    chi2: float
    chi2_reduced: float
    converged: bool
    n_iter: int
    group_tags: list = field(default_factory=list)

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None))

    @property
    def correlation(self) -> np.ndarray:
        s = self.stderr
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.covariance / np.outer(s, s)

    @property
    def shared(self) -> dict:
        return dict(zip(SHARED_NAMES, self.params[:4]))

    @property
    def filter_freqs(self) -> np.ndarray:
        return self.params[4:]

    def strong_correlations(self, threshold: float = CORR_FLAG) -> list[tuple[int, int, float]]:
        c = self.correlation
        n = c.shape[0]
        return [(i, j, float(c[i, j])) for i in range(n) for j in range(i + 1, n)
                if abs(c[i, j]) > threshold]

    def to_dict(self) -> dict:
        """JSON-ready summary; frequencies in Hz, covariance in Hz^2."""
        names = list(SHARED_NAMES) + [f"filter_freq[{t}]" for t in self.group_tags]
        return {
            "parameters_hz": dict(zip(names, (self.params / TWO_PI).tolist())),
            "stderr_hz": dict(zip(names, (self.stderr / TWO_PI).tolist())),
            "covariance_hz2": (self.covariance / TWO_PI ** 2).tolist(),
            "parameter_order": names,
            "chi2": self.chi2,
            "chi2_reduced": self.chi2_reduced,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "strong_correlations": [[names[i], names[j], c] for i, j, c in self.strong_correlations()],
        }


# --- generic damped Gauss-Newton --------------------------------------------------

def fd_jacobian(fun, x, r0=None, scale=None, threads: int = 1) -> np.ndarray:
    """Forward-difference Jacobian with relative step ``FD_REL_STEP``."""
    x = np.asarray(x, dtype=float)
    r0 = fun(x) if r0 is None else r0
    scale = np.ones_like(x) if scale is None else np.asarray(scale, dtype=float)

    def column(i):
        h = FD_REL_STEP * max(abs(x[i]), scale[i])
        xp = x.copy()
        xp[i] += h
        return (fun(xp) - r0) / ((x[i] + h) - x[i])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cols = list(pool.map(column, range(x.size)))
    else:
        cols = [column(i) for i in range(x.size)]
    return np.column_stack(cols)


def _safe_cost(fun, x):
    try:
        r = fun(x)
    except PurcellSimError:
        return None, math.inf
    if not np.all(np.isfinite(r)):
        return None, math.inf
    return r, 0.5 * float(r @ r)


def levenberg_marquardt(fun, x0, lam0: float = 1e-3, max_iter: int = 200, rtol: float = 1e-10,
                        scale=None, threads: int = 1) -> LMResult:
    """Minimise ``1/2 |fun(x)|^2`` with Marquardt-scaled damping.

    Damping goes up by 10 after a rejected step and down by 3 after an
    accepted one. Iteration stops when an accepted step changes the cost by
    less than ``rtol`` relative, or after ``max_iter`` iterations (flagged
    non-converged, best point returned).
    """
    x = np.asarray(x0, dtype=float).copy()
    r, cost = _safe_cost(fun, x)
    if r is None:
        raise ConfigError("residuals are not finite at the initial point")
    lam = lam0
    converged = False
    J = fd_jacobian(fun, x, r, scale, threads)
    it = 0
    while it < max_iter:
        it += 1
        A = J.T @ J
        grad = J.T @ r
        d = np.diag(A).copy()
        if np.any(d <= 0) or not np.all(np.isfinite(A)):
            raise SingularNormalMatrix("a parameter has no influence on the residuals")
        try:
            step = np.linalg.solve(A + lam * np.diag(d), -grad)
        except np.linalg.LinAlgError as exc:
            raise SingularNormalMatrix(str(exc)) from exc
        r_new, cost_new = _safe_cost(fun, x + step)
        if cost_new < cost:
            rel = (cost - cost_new) / max(cost, 1e-300)
            x, r, cost = x + step, r_new, cost_new
            lam /= 3.0
            if rel < rtol or cost == 0.0:
                converged = True
                break
            J = fd_jacobian(fun, x, r, scale, threads)
        else:
            lam *= 10.0
            if lam > 1e16:
                # no descent direction left at this resolution: a stationary point
                converged = True
                break
    if not converged:
        log.warning("Levenberg-Marquardt hit %d iterations without converging", max_iter)
    return LMResult(x, cost, J, r, it, converged)


def covariance_from_jacobian(J: np.ndarray) -> np.ndarray:
    A = J.T @ J
    if np.linalg.cond(A) > 1e15:
        raise SingularNormalMatrix(f"normal matrix condition number {np.linalg.cond(A):.3g}")
    cov = np.linalg.inv(A)
    return 0.5 * (cov + cov.T)


# --- dephasing-spectrum fit ---------------------------------------------------------

def _group_device(base: DeviceParams, params, k: int) -> DeviceParams:
    wc, chi, g, kf = params[:4]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return base.replace(resonator_freq=wc, chi_qc=chi, g_cf=abs(g), kappa_f=kf,
                            filter_freq=params[4 + k])


def fit_residuals(params, datasets, base: DeviceParams) -> np.ndarray:
    """``(model - measured) / sigma`` for every point, datasets concatenated in order."""
    params = np.asarray(params, dtype=float)
    if params.size != 4 + len(datasets):
        raise ConfigError(f"expected {4 + len(datasets)} parameters, got {params.size}")
    out = []
    for k, ds in enumerate(datasets):
        dev = _group_device(base, params, k)
        model = meas_dephasing_model(dev, ds.omega, ds.p_meas)
        out.append((model - ds.gamma) / ds.sigma)
    return np.concatenate(out)


def fit_lm(datasets, init, base: DeviceParams, max_iter: int = 200, threads: int = 1) -> FitResult:
    """Weighted damped least-squares fit; covariance is ``(J^T J)^-1`` of the weighted residuals."""
    init = np.asarray(init, dtype=float)
    if init[3] <= 0 or init[2] <= 0:
        raise ConfigError("initial kappa_f and g_cf must be > 0")
    fun = lambda p: fit_residuals(p, datasets, base)  # noqa: E731
    res = levenberg_marquardt(fun, init, max_iter=max_iter, threads=threads)
    params = res.x.copy()
    params[2] = abs(params[2])
    cov = covariance_from_jacobian(res.jac)
    chi2 = float(res.residuals @ res.residuals)
    dof = max(res.residuals.size - params.size, 1)
    out = FitResult(params, cov, res.residuals, chi2, chi2 / dof, res.converged, res.n_iter,
                    [ds.group_tag for ds in datasets])
    for i, j, c in out.strong_correlations():
        log.warning("parameters %d and %d strongly correlated (%.3f)", i, j, c)
    return out


def default_grid(device: DeviceParams, n: int = 61, half_span: float = TWO_PI * 150e6) -> np.ndarray:
    centre = device.resonator_freq + 0.5 * device.chi_qc
    return centre + np.linspace(-half_span, half_span, n)


def synth_dataset(device: DeviceParams, filter_freqs, grid=None, p_meas: float = 1e-16,
                  noise_frac: float = 0.03, seed: int = 0) -> list[FitDataset]:
    """Synthetic spectra with multiplicative Gaussian noise.

    ``sigma`` is ``noise_frac`` times the true rate (1% when ``noise_frac`` is
    zero, so the weights stay defined).
    """
    if noise_frac < 0:
        raise ConfigError("noise_frac must be >= 0")
    grid = default_grid(device) if grid is None else np.asarray(grid, dtype=float)
    rng = np.random.default_rng(seed)
    out = []
    for k, wf in enumerate(filter_freqs):
        dev = device.replace(filter_freq=float(wf))
        truth = meas_dephasing_model(dev, grid, p_meas)
        noisy = truth * (1.0 + noise_frac * rng.standard_normal(grid.size)) if noise_frac else truth
        sigma = (noise_frac if noise_frac else 0.01) * truth
        out.append(FitDataset(f"f{k}", grid.copy(), np.full(grid.size, p_meas), noisy, sigma))
    return out


SQ_LORENTZ_FWHM = math.sqrt(math.sqrt(2.0) - 1.0)  # FWHM of a squared Lorentzian, in linewidths


def _peak_fwhm(omega, y):
    """Width of the contiguous region above half maximum around the tallest point."""
    i = int(np.argmax(y))
    half = 0.5 * y[i]
    lo = i
    while lo > 0 and y[lo - 1] >= half:
        lo -= 1
    hi = i
    while hi < y.size - 1 and y[hi + 1] >= half:
        hi += 1
    step = float(np.median(np.diff(omega)))
    return max(float(omega[hi] - omega[lo]), step)


def _peaks(y, rel=0.2):
    return [i for i in range(1, y.size - 1)
            if y[i] > y[i - 1] and y[i] >= y[i + 1] and y[i] > rel * y.max()]


def initial_guess(datasets, base: DeviceParams, scan_span: float = TWO_PI * 1.0e9,
                  n_scan: int = 401) -> np.ndarray:
    """Starting point built from the spectra themselves.

    The widest spectrum is taken as the fully hybridised setting, where each
    normal mode has width ``kappa_f/2`` and the dephasing peak is close to a
    squared Lorentzian, so ``kappa_f = 2 FWHM / 0.644``. ``g_cf`` is half
    the separation of two peaks further apart than ``3|chi|`` when some
    spectrum shows them, else 2pi x 100 MHz. The resonator frequency is the
    mean peak position of the remaining spectra (filter pulls of opposite
    sign cancel), shifted back by half the nominal ``chi``. Each filter
    frequency is then the best point of a 1-D scan with the shared values
    held fixed.
    """
    chi0 = base.chi_qc
    widths = [_peak_fwhm(ds.omega, ds.gamma) for ds in datasets]
    peaks = [float(ds.omega[np.argmax(ds.gamma)]) for ds in datasets]
    widest = int(np.argmax(widths))
    kf0 = 2.0 * widths[widest] / SQ_LORENTZ_FWHM
    g0 = TWO_PI * 100e6
    for ds in datasets:
        pk = sorted(_peaks(ds.gamma), key=lambda i: -ds.gamma[i])[:2]
        if len(pk) == 2:
            sep = abs(float(ds.omega[pk[0]] - ds.omega[pk[1]]))
            if sep > 3 * abs(chi0):
                g0 = 0.5 * sep
    others = [w for i, w in enumerate(peaks) if i != widest] or peaks
    wc0 = float(np.mean(others)) - 0.5 * chi0
    shared = np.array([wc0, chi0, g0, kf0])
    scan = wc0 + np.linspace(-scan_span, scan_span, n_scan)
    wfs = []
    for ds in datasets:
        costs = [_safe_cost(lambda p: fit_residuals(p, [ds], base), np.r_[shared, wf])[1] for wf in scan]
        wfs.append(float(scan[int(np.argmin(costs))]))
    return np.r_[shared, wfs]


def params_from_device(device: DeviceParams, filter_freqs) -> np.ndarray:
    return np.r_[device.resonator_freq, device.chi_qc, device.g_cf, device.kappa_f,
                 np.asarray(filter_freqs, dtype=float)]


# --- filter Kerr coefficient from nonlinear reflection phases -----------------------

@dataclass
class KerrFit:
    filter_anharm: float
    stderr: float
    chi2_reduced: float
    converged: bool
    n_iter: int


def _wrap(phi):
    return (phi + np.pi) % (2 * np.pi) - np.pi


def fit_kerr(device: DeviceParams, amp: float, freqs, phases, sigma, alpha0: float,
             state: str = "g", steps: int = 100, max_iter: int = 200) -> KerrFit:
    """Fit ``filter_anharm`` alone to reflection phases measured at drive amplitude ``amp``."""
    freqs = np.asarray(freqs, dtype=float)
    phases = np.asarray(phases, dtype=float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), phases.shape)
    if np.any(sigma <= 0):
        raise ConfigError("sigma must be > 0")
    if alpha0 > 0:
        raise ConfigError("alpha0 must be <= 0")

    def fun(x):
        if x[0] > 0:
            return np.full(phases.shape, np.inf)
        dev = device.replace(filter_anharm=float(x[0]))
        spec = s11_nonlinear_sweep(dev, amp, freqs, state, steps)
        model = np.angle([p.s11 for p in spec.points])
        return _wrap(model - phases) / sigma

    scale = [abs(alpha0) if alpha0 else TWO_PI * 1e6]
    res = levenberg_marquardt(fun, [alpha0], max_iter=max_iter, scale=scale)
    cov = covariance_from_jacobian(res.jac)
    dof = max(phases.size - 1, 1)
    chi2 = float(res.residuals @ res.residuals)
    return KerrFit(float(res.x[0]), float(math.sqrt(cov[0, 0])), chi2 / dof, res.converged, res.n_iter)
