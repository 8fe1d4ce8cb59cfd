"""Truncated-Fock-space master equation for qubit (x) resonator (x) filter.

Basis ordering is qubit (g=0, e=1), then resonator level, then filter level:
``index = q * n_c * n_f + m * n_f + k``. The Hamiltonian is in units of
rad/s in the frame rotating at the drive frequency.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import (
    ConfigError,
    DimensionGuard,
    FitUnstable,
    NonUniqueSteadyState,
    NumericalError,
    ParameterWarning,
    PositivityLoss,
    StepTooLarge,
    TruncationWarning,
)
from .model import DeviceParams, DriveSpec, coupled_mode_matrix, critical_photon_number, detunings

log = logging.getLogger(__name__)

MAX_DIM = 4096
DENSE_NULLSPACE_DIM = 24
DRIFT_TOL = 1e-7
POSITIVITY_TOL = 1e-5


@dataclass(frozen=True)
class FockConfig:
    n_c: int = 12
    n_f: int = 6

    def __post_init__(self):
        if self.n_c < 2 or self.n_f < 2:
            raise ConfigError("need at least 2 levels per mode")
        if self.dim > MAX_DIM:
            raise DimensionGuard(f"Hilbert-space dimension {self.dim} exceeds {MAX_DIM}")

    @property
    def dim(self) -> int:
        return 2 * self.n_c * self.n_f


def _destroy(n):
    return sparse.diags(np.sqrt(np.arange(1, n)), 1, shape=(n, n), format="csr", dtype=complex)


def _eye(n):
    return sparse.identity(n, dtype=complex, format="csr")


def _kron3(a, b, c):
    return sparse.kron(sparse.kron(a, b), c, format="csr")


@dataclass
class Operators:
    c: sparse.csr_matrix
    f: sparse.csr_matrix
    proj_e: sparse.csr_matrix
    sigma_minus: sparse.csr_matrix


def ladder_operators(cfg: FockConfig) -> Operators:
    i2, ic, i_f = _eye(2), _eye(cfg.n_c), _eye(cfg.n_f)
    pe = sparse.csr_matrix(np.array([[0, 0], [0, 1]], dtype=complex))
    sm = sparse.csr_matrix(np.array([[0, 1], [0, 0]], dtype=complex))
    return Operators(
        c=_kron3(i2, _destroy(cfg.n_c), i_f),
        f=_kron3(i2, ic, _destroy(cfg.n_f)),
        proj_e=_kron3(pe, ic, i_f),
        sigma_minus=_kron3(sm, ic, i_f),
    )


def build_hamiltonian(device: DeviceParams, drive: DriveSpec, cfg: FockConfig) -> sparse.csr_matrix:
    """``H/hbar`` as a sparse Hermitian matrix (rad/s)."""
    ops = ladder_operators(cfg)
    delta_c, delta_f, _ = detunings(device, drive)
    c, f = ops.c, ops.f
    cd, fd = c.getH(), f.getH()
    nc = cd @ c
    h = (delta_c * nc + device.chi_qc * (ops.proj_e @ nc)
         + delta_f * (fd @ f)
         + 0.5 * device.filter_anharm * (fd @ fd @ f @ f)
         + device.g_cf * (cd @ f + c @ fd)
         + 0.5 * drive.drive_amp * (f + fd))
    return sparse.csr_matrix(h)


class LindbladSystem:
    """Precomputed generator ``L rho = -i[H, rho] + sum_k D[L_k] rho``."""

    def __init__(self, device: DeviceParams, drive: DriveSpec, cfg: FockConfig):
        self.device, self.drive, self.cfg = device, drive, cfg
        self.ops = ladder_operators(cfg)
        self.H = build_hamiltonian(device, drive, cfg)
        self.jumps = [math.sqrt(device.kappa_f) * self.ops.f]
        if math.isfinite(device.qubit_t1):
            self.jumps.append(math.sqrt(1.0 / device.qubit_t1) * self.ops.sigma_minus)
        decay = sum((L.getH() @ L for L in self.jumps), sparse.csr_matrix(self.H.shape, dtype=complex))
        self.H_eff = sparse.csr_matrix(self.H - 0.5j * decay)
        self._n_c_diag = np.real((self.ops.c.getH() @ self.ops.c).diagonal())
        self._n_f_diag = np.real((self.ops.f.getH() @ self.ops.f).diagonal())
        self._prepare_tensor_terms()

    def _prepare_tensor_terms(self):
        d, dev, cfg = self.drive, self.device, self.cfg
        delta_c, delta_f, _ = detunings(dev, d)
        q = np.arange(2)[:, None, None]
        m = np.arange(cfg.n_c)[None, :, None]
        k = np.arange(cfg.n_f)[None, None, :]
        gamma1 = 1.0 / dev.qubit_t1 if math.isfinite(dev.qubit_t1) else 0.0
        diag = ((delta_c + dev.chi_qc * q) * m + delta_f * k
                + 0.5 * dev.filter_anharm * k * (k - 1)
                - 0.5j * (dev.kappa_f * k + gamma1 * q))
        self._diag = diag.astype(complex)[..., None]
        sm = np.sqrt(np.arange(1, cfg.n_c))  # sqrt(m+1), m = 0..n_c-2
        sk = np.sqrt(np.arange(1, cfg.n_f))
        # c^dag f: out[m, k] = sqrt(m) sqrt(k+1) R[m-1, k+1];  c f^dag is its mirror
        self._hop = dev.g_cf * np.outer(sm, sk)[None, :, :, None]
        self._drv = 0.5 * d.drive_amp * sk[None, None, :, None]
        self._kf_pair = dev.kappa_f * (sk[:, None, None, None] * sk[None, None, None, :])
        self._gamma1 = gamma1
        self._shape = (2, cfg.n_c, cfg.n_f) * 2
        self._ket_shape = (2, cfg.n_c, cfg.n_f, cfg.dim)

    def _left(self, rho):
        # H_eff applied on the ket indices; rho viewed as (q, m, k, column)
        R = rho.reshape(self._ket_shape)
        out = self._diag * R
        out[:, 1:, :-1] += self._hop * R[:, :-1, 1:]
        out[:, :-1, 1:] += self._hop * R[:, 1:, :-1]
        out[:, :, :-1] += self._drv * R[:, :, 1:]
        out[:, :, 1:] += self._drv * R[:, :, :-1]
        return out.reshape(self._shape)

    def rhs(self, rho: np.ndarray) -> np.ndarray:
        R = rho.reshape(self._shape)
        out = -1j * self._left(rho) + 1j * self._left(rho.conj().T).conj().transpose(3, 4, 5, 0, 1, 2)
        out[:, :, :-1, :, :, :-1] += self._kf_pair * R[:, :, 1:, :, :, 1:]
        if self._gamma1:
            out[0, :, :, 0, :, :] += self._gamma1 * R[1, :, :, 1, :, :]
        return out.reshape(rho.shape)

    def rhs_hermitian(self, rho: np.ndarray) -> np.ndarray:
        """Same as :meth:`rhs` for Hermitian ``rho``, at roughly half the cost.

        Uses ``L rho = X + X^dagger`` with ``X = -i H_eff rho + (1/2) sum L rho L^dagger``.
        """
        R = rho.reshape(self._shape)
        x = self._left(rho)
        x *= -1j
        x[:, :, :-1, :, :, :-1] += (0.5 * self._kf_pair) * R[:, :, 1:, :, :, 1:]
        if self._gamma1:
            x[0, :, :, 0, :, :] += (0.5 * self._gamma1) * R[1, :, :, 1, :, :]
        x = x.reshape(rho.shape)
        return x + x.conj().T

    def rhs_sparse(self, rho: np.ndarray) -> np.ndarray:
        """Reference implementation with explicit sparse operators."""
        x = self.H_eff @ rho
        y = (self.H_eff @ rho.conj().T).conj().T
        out = -1j * (x - y)
        for L in self.jumps:
            out += (L @ (L @ rho).conj().T).conj().T
        return out

    def spectral_radius_estimate(self) -> float:
        """Largest ``|lambda|`` of the generator (Arnoldi, 10% margin); falls back to the bound."""
        try:
            val = spla.eigs(self.liouvillian(), k=1, which="LM", tol=1e-4,
                            return_eigenvectors=False, v0=np.ones(self.cfg.dim ** 2, complex))
            return 1.1 * float(abs(val[0]))
        except (spla.ArpackNoConvergence, spla.ArpackError):
            return self.spectral_radius_bound()

    def spectral_radius_bound(self) -> float:
        """Upper bound on ``|lambda|`` of the generator: ``2||H|| + sum 2||L||^2``."""
        if self.cfg.dim <= 512:
            h_norm = float(np.max(np.abs(np.linalg.eigvalsh(self.H.toarray()))))
        else:
            h_norm = float(abs(spla.eigsh(self.H, k=1, which="LM", return_eigenvectors=False)[0]))
        jump = sum(2.0 * spla.norm(L.getH() @ L, ord=np.inf) for L in self.jumps)
        return 2.0 * h_norm + jump

    def max_step(self) -> float:
        return 0.02 / self.spectral_radius_estimate()

    def liouvillian(self) -> sparse.csr_matrix:
        """Superoperator acting on column-stacked ``vec(rho)``."""
        n = self.cfg.dim
        eye = _eye(n)
        # vec(A rho B) = (B^T kron A) vec(rho)
        out = -1j * (sparse.kron(eye, self.H_eff) - sparse.kron(self.H_eff.conj(), eye))
        for L in self.jumps:
            out = out + sparse.kron(L.conj(), L)
        return sparse.csr_matrix(out)

    # observables
    def n_c(self, rho):
        return float(np.dot(self._n_c_diag, np.real(np.diagonal(rho))))

    def n_f(self, rho):
        return float(np.dot(self._n_f_diag, np.real(np.diagonal(rho))))

    def expect(self, op, rho) -> complex:
        return complex(op.multiply(rho.T).sum())

    def coherence(self, rho) -> complex:
        """``<g| Tr_cf rho |e>``."""
        d = self.cfg.n_c * self.cfg.n_f
        return complex(np.trace(rho[:d, d:]))


def lindblad_rhs(rho, device: DeviceParams, drive: DriveSpec, cfg: FockConfig) -> np.ndarray:
    return LindbladSystem(device, drive, cfg).rhs(np.asarray(rho, dtype=complex))


def product_state(cfg: FockConfig, qubit=(1.0, 0.0), m: int = 0, k: int = 0) -> np.ndarray:
    """Density matrix of ``qubit (x) |m>_c (x) |k>_f``; ``qubit`` is a (g, e) amplitude pair."""
    q = np.asarray(qubit, dtype=complex)
    q = q / np.linalg.norm(q)
    vc = np.zeros(cfg.n_c, complex)
    vc[m] = 1
    vf = np.zeros(cfg.n_f, complex)
    vf[k] = 1
    psi = np.kron(np.kron(q, vc), vf)
    return np.outer(psi, psi.conj())


@dataclass
class Evolution:
    t: np.ndarray
    n_c: np.ndarray
    n_f: np.ndarray
    c_mean: np.ndarray
    f_mean: np.ndarray
    coherence: np.ndarray
    trace_err: np.ndarray
    herm_err: np.ndarray
    min_eig: np.ndarray
    max_trace_drift: float = 0.0
    max_herm_drift: float = 0.0
    states: list = field(default_factory=list)
    dt: float = 0.0


def evolve(rho0, device: DeviceParams, drive: DriveSpec, cfg: FockConfig, t_final: float,
           dt: float | None = None, stride: int = 100, keep_states: bool = False,
           system: LindbladSystem | None = None) -> Evolution:
    """RK4 integration of the master equation.

    After every step the state is re-Hermitised and trace-renormalised; the
    correction size is tracked and must stay below ``DRIFT_TOL``.
    """
    sysm = system or LindbladSystem(device, drive, cfg)
    limit = sysm.max_step()
    if dt is None:
        n_steps = max(1, math.ceil(t_final / limit))
        dt = t_final / n_steps
    else:
        if dt > limit * (1 + 1e-12):
            raise StepTooLarge(f"dt={dt:.3g} s exceeds 0.02/spectral radius = {limit:.3g} s")
        n_steps = int(round(t_final / dt))
    rho = np.array(rho0, dtype=complex)
    if np.max(np.abs(rho - rho.conj().T)) > DRIFT_TOL:
        raise ConfigError("initial density matrix is not Hermitian")
    rec = {k: [] for k in ("t", "n_c", "n_f", "c", "f", "coh", "tr", "herm", "eig")}
    states = []
    max_tr = max_herm = 0.0

    def record(t, tr_err, herm_err):
        rec["t"].append(t)
        rec["n_c"].append(sysm.n_c(rho))
        rec["n_f"].append(sysm.n_f(rho))
        rec["c"].append(sysm.expect(sysm.ops.c, rho))
        rec["f"].append(sysm.expect(sysm.ops.f, rho))
        rec["coh"].append(sysm.coherence(rho))
        rec["tr"].append(tr_err)
        rec["herm"].append(herm_err)
        w = np.linalg.eigvalsh(rho)[0]
        rec["eig"].append(w)
        if w < -POSITIVITY_TOL:
            raise PositivityLoss(f"min eigenvalue {w:.3g} at t={t:.3g} s")
        if keep_states:
            states.append(rho.copy())

    record(0.0, abs(np.trace(rho).real - 1.0), float(np.max(np.abs(rho - rho.conj().T))))
    h2, h6 = 0.5 * dt, dt / 6.0
    f = sysm.rhs_hermitian
    for i in range(n_steps):
        k1 = f(rho)
        k2 = f(rho + h2 * k1)
        k3 = f(rho + h2 * k2)
        k4 = f(rho + dt * k3)
        rho = rho + h6 * (k1 + 2 * k2 + 2 * k3 + k4)
        herm = float(np.max(np.abs(rho - rho.conj().T)))
        rho = 0.5 * (rho + rho.conj().T)
        tr = np.trace(rho).real
        tr_err = abs(tr - 1.0)
        rho /= tr
        max_tr, max_herm = max(max_tr, tr_err), max(max_herm, herm)
        if tr_err > DRIFT_TOL or herm > DRIFT_TOL:
            raise NumericalError(f"per-step drift too large at step {i}: trace {tr_err:.3g}, "
                                 f"hermiticity {herm:.3g}")
        if (i + 1) % stride == 0 or i == n_steps - 1:
            record((i + 1) * dt, tr_err, herm)
    log.debug("evolve: %d steps, dt=%.3g, max trace drift %.3g", n_steps, dt, max_tr)
    arr = {k: np.array(v) for k, v in rec.items()}
    return Evolution(arr["t"], arr["n_c"], arr["n_f"], arr["c"], arr["f"], arr["coh"],
                     arr["tr"], arr["herm"], arr["eig"], max_tr, max_herm, states, dt)


def _check_truncation(rho, cfg: FockConfig, tol: float = 1e-4):
    p = np.real(np.diagonal(rho)).reshape(2, cfg.n_c, cfg.n_f)
    top_c = float(p[:, -1, :].sum())
    top_f = float(p[:, :, -1].sum())
    if top_c > tol or top_f > tol:
        warnings.warn(f"population at truncation edge: resonator {top_c:.2e}, filter {top_f:.2e}",
                      TruncationWarning, stacklevel=3)
    return top_c, top_f


def steady_state(device: DeviceParams, drive: DriveSpec, cfg: FockConfig,
                 null_tol: float = 1e-9) -> np.ndarray:
    """Unique fixed point of the generator, normalised to unit trace.

    Small systems use a dense SVD null space (which also certifies uniqueness);
    larger ones a sparse LU solve with one equation replaced by the trace
    condition, uniqueness checked by shift-invert on the two eigenvalues
    nearest zero.
    """
    sysm = LindbladSystem(device, drive, cfg)
    L = sysm.liouvillian()
    n = cfg.dim
    scale = sysm.spectral_radius_bound()
    if n <= DENSE_NULLSPACE_DIM:
        _, s, vh = np.linalg.svd(L.toarray())
        null = int(np.sum(s <= null_tol * scale))
        if null > 1:
            raise NonUniqueSteadyState(f"null space dimension {null}")
        x = vh[-1].conj()
    else:
        trace_row = sparse.csr_matrix(np.eye(n, dtype=complex).reshape(1, -1, order="F"))
        A = sparse.vstack([trace_row, L[1:]], format="csc")
        b = np.zeros(n * n, complex)
        b[0] = 1.0
        x = spla.spsolve(A, b)
        try:
            vals = spla.eigs(L.tocsc(), k=2, sigma=0, which="LM", return_eigenvectors=False)
            if np.sort(np.abs(vals))[1] <= null_tol * scale:
                raise NonUniqueSteadyState("second eigenvalue of the generator is zero")
        except spla.ArpackNoConvergence:
            log.warning("uniqueness check did not converge")
    rho = x.reshape(n, n, order="F")
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    resid = np.max(np.abs(sysm.rhs(rho)))
    if resid > null_tol * scale:
        raise NumericalError(f"steady-state residual {resid:.3g} > {null_tol:g} x generator scale")
    _check_truncation(rho, cfg)
    return rho


@dataclass(frozen=True)
class DephasingFit:
    gamma_phi: float
    gamma_total: float
    r_squared: float
    residual_rms: float
    n_c_mean: float
    t_start: float
    evolution: Evolution | None = None


def _slow_linewidth(device: DeviceParams) -> float:
    rates = [-2.0 * lam.imag for s in ("g", "e") for lam in np.linalg.eigvals(coupled_mode_matrix(device, s))]
    return max(min(rates), 1e-12 * device.kappa_f)


def extract_meas_dephasing(device: DeviceParams, drive: DriveSpec, cfg: FockConfig,
                           t_window: float | None = None, transient: float | None = None,
                           dt: float | None = None, stride: int = 50,
                           min_r2: float = 0.99) -> DephasingFit:
    """Measurement-induced dephasing from the decay of the qubit coherence.

    The qubit starts in ``(|g> + |e>)/sqrt 2`` with both modes in vacuum; after
    the ring-up transient, ``log |<g|Tr_cf rho|e>|`` is fitted to a line and the
    ``1/(2 T1)`` relaxation contribution is removed from its slope.
    """
    try:
        ncrit = critical_photon_number(device)
    except ArithmeticError:
        ncrit = math.inf
    k_slow = _slow_linewidth(device)
    if transient is None:
        # field amplitudes relax at half the energy linewidth: five amplitude e-folds
        transient = 10.0 / min(device.kappa_f, k_slow)
    if t_window is None:
        t_window = 3.0 / k_slow
    sysm = LindbladSystem(device, drive, cfg)
    rho0 = product_state(cfg, qubit=(1.0, 1.0))
    ev = evolve(rho0, device, drive, cfg, transient + t_window, dt=dt, stride=stride, system=sysm)
    sel = ev.t >= transient
    t, coh = ev.t[sel], np.abs(ev.coherence[sel])
    n_c_mean = float(np.mean(ev.n_c[sel]))
    if n_c_mean > ncrit / 10:
        warnings.warn(f"<n_c> = {n_c_mean:.3g} is not weak compared with n_crit = {ncrit:.3g}",
                      ParameterWarning, stacklevel=2)
    if coh.min() <= 0:
        raise FitUnstable("coherence vanished inside the fit window")
    y = np.log(coh)
    slope, icpt = np.polyfit(t, y, 1)
    resid = y - (slope * t + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 1e-24 else 1.0
    if r2 < min_r2:
        raise FitUnstable(f"log-coherence is not linear after the transient (R^2={r2:.4f})")
    gamma_total = -slope
    gamma_t1 = 0.5 / device.qubit_t1 if math.isfinite(device.qubit_t1) else 0.0
    return DephasingFit(max(gamma_total - gamma_t1, 0.0), gamma_total, r2,
                        float(np.sqrt(np.mean(resid ** 2))), n_c_mean, transient, ev)
