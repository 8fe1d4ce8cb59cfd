"""Semiclassical time-domain check of photon-noise dephasing.

Band-limited white noise is synthesised directly in the frequency domain in
a frame demodulated to the band centre, pushed through the linear two-mode
reflection for each qubit state, and the dephasing rate is read off as half
the mean squared difference of the two output fields.

Field amplitudes use photon-flux normalisation: ``|b(t)|^2`` is in quanta/s
and a flat PSD of ``n_noise`` quanta gives ``<|b|^2> = n_noise * B / 2pi``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InsufficientDuration
from .linear import s11_linear
from .model import DeviceParams, QubitState, TWO_PI, dressed_resonator_freq, effective_linewidth

MIN_BLOCKS = 20
TRIM_LINEWIDTHS = 10.0


@dataclass(frozen=True)
class NoiseSpec:
    """Flat-PSD noise in ``[band_lo, band_hi]`` (rad/s), sampled every ``sample_dt`` for ``duration``."""

    n_noise: float
    band_lo: float
    band_hi: float
    sample_dt: float
    duration: float
    seed: int = 0

    def __post_init__(self):
        if self.n_noise < 0:
            raise ConfigError("n_noise must be >= 0")
        if not self.band_lo < self.band_hi:
            raise ConfigError("band_lo must be below band_hi")
        if not 0 < self.sample_dt < math.pi / (self.band_hi - self.band_lo):
            raise ConfigError(f"sample_dt={self.sample_dt:.3g} s violates the Nyquist guard "
                              f"pi/bandwidth = {math.pi / (self.band_hi - self.band_lo):.3g} s")
        if self.duration < 2 * self.sample_dt:
            raise ConfigError("duration must cover at least two samples")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must fit in 64 bits")

    @property
    def center(self) -> float:
        return 0.5 * (self.band_lo + self.band_hi)

    @property
    def bandwidth(self) -> float:
        return self.band_hi - self.band_lo

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.sample_dt))

    @classmethod
    def default(cls, n_noise: float = 1.0, duration: float = 40e-6, seed: int = 0) -> "NoiseSpec":
        """The +-0.5 GHz band around 9.925 GHz with 0.2 ns sampling."""
        return cls(n_noise, TWO_PI * 9.425e9, TWO_PI * 10.425e9, 0.2e-9, duration, seed)


@dataclass(frozen=True)
class SignalTrace:
    """Complex envelope in the frame rotating at ``center`` (rad/s)."""

    t: np.ndarray
    amp: np.ndarray
    center: float

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.amp) ** 2))


def baseband_freqs(n: int, dt: float) -> np.ndarray:
    return TWO_PI * np.fft.fftfreq(n, dt)


def gen_band_white_noise(spec: NoiseSpec) -> SignalTrace:
    """Circular complex Gaussian noise, flat inside the band and exactly zero outside."""
    n, dt = spec.n_samples, spec.sample_dt
    t = dt * np.arange(n)
    if spec.n_noise == 0:
        return SignalTrace(t, np.zeros(n, complex), spec.center)
    rng = np.random.default_rng(spec.seed)
    nu = baseband_freqs(n, dt)
    inband = np.abs(nu) <= 0.5 * spec.bandwidth
    # per-bin variance n/(N dt) makes the mean power n * (in-band bins)/(N dt) ~ n B/2pi
    sigma = math.sqrt(spec.n_noise / (n * dt) / 2.0)
    spec_bins = np.zeros(n, complex)
    m = int(inband.sum())
    spec_bins[inband] = sigma * (rng.standard_normal(m) + 1j * rng.standard_normal(m))
    return SignalTrace(t, np.fft.ifft(spec_bins) * n, spec.center)


def _trim_count(device: DeviceParams, dt: float) -> int:
    k = min(effective_linewidth(device, s)[0] for s in ("g", "e"))
    return int(math.ceil(TRIM_LINEWIDTHS / k / dt))


def _apply_transfer(b_in: SignalTrace, transfer, trim: int) -> SignalTrace:
    n = b_in.amp.size
    if 2 * trim >= n:
        raise InsufficientDuration(f"trace of {n} samples is shorter than the {2 * trim} trimmed edges")
    omega = b_in.center + baseband_freqs(n, b_in.dt)
    out = np.fft.ifft(np.fft.fft(b_in.amp) * transfer(omega))
    sl = slice(trim, n - trim if trim else None)
    return SignalTrace(b_in.t[sl], out[sl], b_in.center)


def linear_response_filter(b_in: SignalTrace, device: DeviceParams, state: QubitState = "g",
                           trim: bool = True) -> SignalTrace:
    """Reflected field: multiply the input spectrum by ``s11_linear``; edges of 10/kappa_eff are dropped."""
    k = _trim_count(device, b_in.dt) if trim else 0
    return _apply_transfer(b_in, lambda w: s11_linear(device, w, state), k)


def resonator_response(b_in: SignalTrace, device: DeviceParams, state: QubitState = "g",
                       trim: bool = True) -> SignalTrace:
    """Intra-resonator field driven through the filter port (photon-number normalised)."""
    wc = dressed_resonator_freq(device, state)

    def transfer(w):
        den = (w - wc) * (w - device.filter_freq + 0.5j * device.kappa_f) - device.g_cf ** 2
        return device.g_cf * math.sqrt(device.kappa_f) / den

    k = _trim_count(device, b_in.dt) if trim else 0
    return _apply_transfer(b_in, transfer, k)


@dataclass(frozen=True)
class NoiseMCResult:
    gamma: float
    stderr: float
    n_c_mean: float
    seed: int
    n_blocks: int


def block_bootstrap_stderr(x: np.ndarray, n_blocks: int, n_resample: int = 2000,
                           seed: int = 0) -> float:
    """Standard error of ``mean(x)`` from resampling contiguous blocks with replacement."""
    if n_blocks < MIN_BLOCKS:
        raise ConfigError(f"need at least {MIN_BLOCKS} blocks, got {n_blocks}")
    size = x.size // n_blocks
    if size < 1:
        raise InsufficientDuration("fewer samples than bootstrap blocks")
    means = x[: size * n_blocks].reshape(n_blocks, size).mean(axis=1)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n_blocks, size=(n_resample, n_blocks))
    return float(np.std(means[idx].mean(axis=1), ddof=1))


def noise_dephasing_mc(spec: NoiseSpec, device: DeviceParams, n_blocks: int = 40,
                       max_rel_stderr: float | None = 0.05) -> NoiseMCResult:
    """Monte Carlo estimate of ``Gamma = 1/2 <|b_out^e - b_out^g|^2>`` with bootstrap error.

    Raises :class:`InsufficientDuration` when the relative standard error
    exceeds ``max_rel_stderr`` (pass ``None`` to skip the check).
    """
    b_in = gen_band_white_noise(spec)
    if spec.n_noise == 0:
        return NoiseMCResult(0.0, 0.0, 0.0, spec.seed, n_blocks)
    out_g = linear_response_filter(b_in, device, "g")
    out_e = linear_response_filter(b_in, device, "e")
    s2 = 0.5 * np.abs(out_e.amp - out_g.amp) ** 2
    gamma = float(np.mean(s2))
    boot_seed = np.random.SeedSequence([int(spec.seed), 1]).generate_state(1)[0]
    err = block_bootstrap_stderr(s2, n_blocks, seed=int(boot_seed))
    n_c = float(np.mean(np.abs(resonator_response(b_in, device, "g").amp) ** 2))
    if max_rel_stderr is not None and gamma > 0 and err / gamma > max_rel_stderr:
        raise InsufficientDuration(f"relative stderr {err / gamma:.3f} exceeds {max_rel_stderr}; "
                                   "increase the duration")
    return NoiseMCResult(gamma, err, n_c, spec.seed, n_blocks)


def noise_mc_seeds(spec: NoiseSpec, device: DeviceParams, seeds, threads: int = 1,
                   **kw) -> list[NoiseMCResult]:
    """Run :func:`noise_dephasing_mc` for several seeds; results keep the order of ``seeds``."""
    from dataclasses import replace

    def one(seed):
        return noise_dephasing_mc(replace(spec, seed=int(seed)), device, **kw)

    seeds = list(seeds)
    if threads <= 1:
        return [one(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, seeds))
