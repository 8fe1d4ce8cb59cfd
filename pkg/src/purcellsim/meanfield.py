"""Classical mean-field model of the driven resonator + Kerr filter.

    dc/dt = -i d_c' c - i g f
    df/dt = [-i (d_f + a_f |f|^2) - k_f / 2] f - i g c - i W / 2

Steady states come from the cubic in ``n = |f|^2`` obtained by eliminating
``c = -g f / d_c'``; branch stability from the 4x4 real Jacobian.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .errors import NoStableBranch, NumericalError, ResonantDrive, StepTooLarge
from .linear import ReflectionPoint, s11_linear
from .model import DeviceParams, DriveSpec, detunings

MERGE_RTOL = 1e-9


@dataclass(frozen=True)
class MeanFieldState:
    c: complex
    f: complex


@dataclass(frozen=True)
class SteadyBranch:
    n_f: float
    state: MeanFieldState
    stable: bool
    jacobian_eigs: np.ndarray
    residual: float = 0.0
    degenerate: bool = False

    @property
    def n_c(self) -> float:
        return abs(self.state.c) ** 2


@dataclass(frozen=True)
class InputOutput:
    b_in: complex
    b_out: complex


@dataclass
class Trajectory:
    t: np.ndarray
    c: np.ndarray
    f: np.ndarray

    @property
    def excitation(self) -> np.ndarray:
        return np.abs(self.c) ** 2 + np.abs(self.f) ** 2


@dataclass(frozen=True)
class MeasurementRate:
    gamma_meas: float
    b_out_g: complex
    b_out_e: complex


@dataclass
class NonlinearSpectrum:
    state: str
    points: list
    multistable: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))

    @property
    def freq(self) -> np.ndarray:
        return np.array([p.freq for p in self.points])

    @property
    def s11(self) -> np.ndarray:
        return np.array([p.s11 for p in self.points])


def _as_cf(state):
    if isinstance(state, MeanFieldState):
        return complex(state.c), complex(state.f)
    c, f = state
    return complex(c), complex(f)


def _rhs_factory(device: DeviceParams, drive: DriveSpec):
    _, delta_f, delta_cp = detunings(device, drive)
    g, a, half_k = device.g_cf, device.filter_anharm, 0.5 * device.kappa_f

    def rhs(c, f, amp):
        dc = -1j * delta_cp * c - 1j * g * f
        df = complex(-half_k, -(delta_f + a * (f.real * f.real + f.imag * f.imag))) * f \
            - 1j * g * c - 0.5j * amp
        return dc, df

    return rhs


def mf_rhs(state, device: DeviceParams, drive: DriveSpec) -> MeanFieldState:
    c, f = _as_cf(state)
    dc, df = _rhs_factory(device, drive)(c, f, drive.drive_amp)
    return MeanFieldState(dc, df)


def mf_jacobian(state, device: DeviceParams, drive: DriveSpec) -> np.ndarray:
    """Real Jacobian of ``mf_rhs`` in the coordinates (Re c, Im c, Re f, Im f)."""
    c, f = _as_cf(state)
    _, delta_f, delta_cp = detunings(device, drive)
    g, a = device.g_cf, device.filter_anharm
    # z' = A z + B conj(z) linearisation
    A = np.array([[-1j * delta_cp, -1j * g],
                  [-1j * g, -1j * (delta_f + 2 * a * abs(f) ** 2) - 0.5 * device.kappa_f]])
    B = np.array([[0, 0], [0, -1j * a * f * f]], dtype=complex)
    J = np.empty((4, 4))
    for j in range(2):
        for k in range(2):
            s, d = A[j, k] + B[j, k], A[j, k] - B[j, k]
            J[2 * j:2 * j + 2, 2 * k:2 * k + 2] = [[s.real, -d.imag], [s.imag, d.real]]
    return J


def _integrator_guard(device, drive):
    _, delta_f, delta_cp = detunings(device, drive)
    return 0.05 / max(device.kappa_f, abs(delta_cp), abs(delta_f), device.g_cf, drive.drive_amp)


def mf_integrate(state0, device: DeviceParams, drive: DriveSpec, t_final: float, dt: float,
                 stride: int = 1, ramp_time: float = 0.0) -> Trajectory:
    """Fixed-step RK4 integration of the mean-field equations.

    With ``ramp_time > 0`` the drive amplitude rises linearly from zero over
    that interval and is then held.
    """
    limit = _integrator_guard(device, drive)
    if dt > limit * (1 + 1e-12):
        raise StepTooLarge(f"dt={dt:.3g} s exceeds stability guard {limit:.3g} s")
    rhs = _rhs_factory(device, drive)
    amp0 = drive.drive_amp

    def amp(t):
        if ramp_time > 0 and t < ramp_time:
            return amp0 * t / ramp_time
        return amp0

    n_steps = int(round(t_final / dt))
    c, f = _as_cf(state0)
    ts, cs, fs = [0.0], [c], [f]
    check_decay = amp0 == 0
    energy = abs(c) ** 2 + abs(f) ** 2
    h2, h6 = 0.5 * dt, dt / 6.0
    for i in range(n_steps):
        t = i * dt
        am, ah = amp(t), amp(t + h2)
        k1c, k1f = rhs(c, f, am)
        k2c, k2f = rhs(c + h2 * k1c, f + h2 * k1f, ah)
        k3c, k3f = rhs(c + h2 * k2c, f + h2 * k2f, ah)
        k4c, k4f = rhs(c + dt * k3c, f + dt * k3f, amp(t + dt))
        c = c + h6 * (k1c + 2 * k2c + 2 * k3c + k4c)
        f = f + h6 * (k1f + 2 * k2f + 2 * k3f + k4f)
        if check_decay:
            e = abs(c) ** 2 + abs(f) ** 2
            if e > energy * (1 + 1e-9) + 1e-300:
                raise NumericalError(f"undriven excitation grew at step {i}")
            energy = e
        if (i + 1) % stride == 0:
            ts.append((i + 1) * dt)
            cs.append(c)
            fs.append(f)
    return Trajectory(np.array(ts), np.array(cs), np.array(fs))


# --- steady states ----------------------------------------------------------------

def _cubic_real_roots(a: float, b: float, c: float) -> list[float]:
    """Real roots of the monic cubic ``n^3 + a n^2 + b n + c``."""
    disc = math.fsum([18 * a * b * c, -4 * a ** 3 * c, a * a * b * b, -4 * b ** 3, -27 * c * c])
    p = b - a * a / 3.0
    q = 2 * a ** 3 / 27.0 - a * b / 3.0 + c
    shift = -a / 3.0
    if disc > 0 and p < 0:
        r = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * q / (p * r)
        theta = math.acos(max(-1.0, min(1.0, arg))) / 3.0
        roots = [r * math.cos(theta - 2 * math.pi * k / 3) + shift for k in range(3)]
    else:
        s = math.sqrt(max(q * q / 4.0 + p ** 3 / 27.0, 0.0))
        big = -math.copysign(1.0, q) * np.cbrt(abs(q) / 2.0 + s)
        t = big - p / (3.0 * big) if big != 0 else 0.0
        roots = [t + shift]
    polished = []
    for n in roots:
        dp = 3 * n * n + 2 * a * n + b
        if dp != 0:
            n = n - (((n + a) * n + b) * n + c) / dp
        polished.append(n)
    return sorted(polished)


def kerr_photon_roots(device: DeviceParams, drive: DriveSpec) -> tuple[list[float], bool]:
    """Roots ``n = |f|^2`` of ``n [(d_eff + a_f n)^2 + k_f^2/4] = W^2/4``.

    Returns (roots, degenerate) with nearly-coincident roots merged.
    """
    _, delta_f, delta_cp = detunings(device, drive)
    k = device.kappa_f
    if abs(delta_cp) < 1e-6 * k:
        raise ResonantDrive("drive is resonant with the dressed resonator; c is undetermined")
    if drive.drive_amp == 0:
        return [0.0], False
    x = (delta_f - device.g_cf ** 2 / delta_cp) / k
    u = device.filter_anharm / k
    w = drive.drive_amp / k
    if u == 0:
        return [w * w / 4.0 / (x * x + 0.25)], False
    roots = _cubic_real_roots(2 * x / u, (x * x + 0.25) / (u * u), -w * w / (4 * u * u))
    merged: list[float] = []
    degenerate = False
    for n in roots:
        if merged and abs(n - merged[-1]) <= MERGE_RTOL * max(abs(n), 1e-300):
            degenerate = True
            continue
        merged.append(n)
    return [max(n, 0.0) for n in merged], degenerate


def mf_steady_branches(device: DeviceParams, drive: DriveSpec) -> list[SteadyBranch]:
    """All steady states, sorted by filter photon number."""
    roots, degenerate = kerr_photon_roots(device, drive)
    _, delta_f, delta_cp = detunings(device, drive)
    delta_eff = delta_f - device.g_cf ** 2 / delta_cp
    scale = max(drive.drive_amp, device.kappa_f)
    out = []
    for n in roots:
        f = -0.5j * drive.drive_amp / complex(0.5 * device.kappa_f, delta_eff + device.filter_anharm * n)
        c = -device.g_cf * f / delta_cp
        st = MeanFieldState(c, f)
        r = mf_rhs(st, device, drive)
        residual = math.hypot(abs(r.c), abs(r.f))
        if residual > 1e-10 * scale:
            raise NumericalError(f"steady-state residual {residual:.3g} too large")
        eigs = np.linalg.eigvals(mf_jacobian(st, device, drive))
        out.append(SteadyBranch(n, st, bool(np.all(eigs.real < 0)), eigs, residual, degenerate))
    return out


def io_transform(state, drive: DriveSpec, device: DeviceParams) -> InputOutput:
    """Waveguide amplitudes in photon-flux normalisation (``|b|^2`` = photons/s)."""
    _, f = _as_cf(state)
    sk = math.sqrt(device.kappa_f)
    b_in = drive.drive_amp / (2.0 * sk)
    return InputOutput(complex(b_in), b_in - 1j * sk * f)


def follow_branch(device: DeviceParams, drive: DriveSpec, steps: int = 100) -> tuple[SteadyBranch, int]:
    """Stable branch reached by ramping the amplitude up from vacuum in ``steps`` steps.

    Returns the branch and the number of stable branches at the target.
    """
    prev = (0j, 0j)
    chosen, n_stable = None, 0
    for k in range(1, steps + 1):
        d = DriveSpec(drive.drive_freq, drive.drive_amp * k / steps, drive.qubit_state)
        stable = [b for b in mf_steady_branches(device, d) if b.stable]
        if not stable:
            raise NoStableBranch(f"no stable branch at amplitude step {k}/{steps}")
        chosen = min(stable, key=lambda b: abs(b.state.c - prev[0]) ** 2 + abs(b.state.f - prev[1]) ** 2)
        prev = (chosen.state.c, chosen.state.f)
        n_stable = len(stable)
    return chosen, n_stable


def measurement_rate(device: DeviceParams, omega: float, amp: float, steps: int = 100) -> MeasurementRate:
    """Semiclassical measurement rate ``|b_out^e - b_out^g|^2 / 2``."""
    outs = {}
    for s in ("g", "e"):
        drive = DriveSpec(omega, amp, s)
        if amp == 0:
            outs[s] = 0j
            continue
        br, _ = follow_branch(device, drive, steps)
        outs[s] = io_transform(br.state, drive, device).b_out
    return MeasurementRate(0.5 * abs(outs["e"] - outs["g"]) ** 2, outs["g"], outs["e"])


def linear_meas_slope(device: DeviceParams, omega: float) -> float:
    """Small-amplitude limit of ``Gamma_meas / W^2`` from the linear reflection contrast."""
    diff = s11_linear(device, omega, "e") - s11_linear(device, omega, "g")
    return abs(diff) ** 2 / (8.0 * device.kappa_f)


def fitted_meas_slope(device: DeviceParams, omega: float, rel_amp: float = 1e-4) -> float:
    """``Gamma_meas / W^2`` measured with the nonlinear model at a tiny amplitude."""
    amp = rel_amp * device.kappa_f
    return measurement_rate(device, omega, amp).gamma_meas / amp ** 2


def s11_nonlinear_sweep(device: DeviceParams, amp: float, freqs, state: str = "g",
                        steps: int = 100, threads: int = 1, unstable: str = "raise") -> NonlinearSpectrum:
    """Reflection ``b_out / b_in`` on the continuation-selected branch at each frequency.

    Where the continuation finds no stable steady state the field oscillates
    and has no single reflection coefficient. ``unstable="raise"`` propagates
    :class:`NoStableBranch`; ``unstable="nan"`` stores NaN for that point.
    """
    freqs = np.asarray(freqs, dtype=float)
    if freqs.size == 0:
        raise ValueError("frequency grid is empty")
    if unstable not in ("raise", "nan"):
        raise ValueError("unstable must be 'raise' or 'nan'")

    def point(w):
        if amp == 0:
            return ReflectionPoint(float(w), s11_linear(device, w, state)), False
        drive = DriveSpec(float(w), amp, state)
        try:
            br, n_stable = follow_branch(device, drive, steps)
        except ResonantDrive:
            # exactly on the dressed resonator: the steady state has f = 0, full reflection
            return ReflectionPoint(float(w), 1.0 + 0j), False
        except NoStableBranch:
            if unstable == "raise":
                raise
            return ReflectionPoint(float(w), complex(math.nan, math.nan)), False
        io = io_transform(br.state, drive, device)
        return ReflectionPoint(float(w), io.b_out / io.b_in), n_stable > 1

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            res = list(pool.map(point, freqs))
    else:
        res = [point(w) for w in freqs]
    return NonlinearSpectrum(state, [r[0] for r in res], np.array([r[1] for r in res]))


def separation_error(gamma_meas: float, tau: float, eta: float = 1.0) -> float:
    """Gaussian-overlap error ``1/2 erfc(sqrt(eta Gamma tau / 2))``."""
    if tau <= 0 or not 0 < eta <= 1:
        raise ValueError("need tau > 0 and 0 < eta <= 1")
    return 0.5 * float(erfc(math.sqrt(eta * gamma_meas * tau / 2.0)))
