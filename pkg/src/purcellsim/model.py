"""Device parameters and derived static quantities.

Everything is stored as angular frequency (rad/s) and seconds. JSON files
and the CLI use ordinary frequencies in Hz; conversion happens only in
:func:`DeviceParams.from_hz_dict` / :meth:`DeviceParams.to_hz_dict`.
"""
from __future__ import annotations

import dataclasses
import json
import math
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Literal

import numpy as np
from scipy import constants

from .errors import (
    ConfigError,
    CouplingIsZero,
    InconsistentTimes,
    NegativeRadicand,
    ParameterWarning,
)

TWO_PI = 2.0 * math.pi
HBAR = constants.hbar  # J s, CODATA

QubitState = Literal["g", "e"]

# JSON key -> (attribute, is_frequency)
_JSON_KEYS = {
    "qubit_freq_hz": ("qubit_freq", True),
    "qubit_anharm_hz": ("qubit_anharm", True),
    "qubit_t1_s": ("qubit_t1", False),
    "resonator_freq_hz": ("resonator_freq", True),
    "chi_qc_hz": ("chi_qc", True),
    "filter_freq_hz": ("filter_freq", True),
    "filter_anharm_hz": ("filter_anharm", True),
    "g_cf_hz": ("g_cf", True),
    "kappa_f_hz": ("kappa_f", True),
}


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = HBAR


@dataclass(frozen=True)
class DeviceParams:
    """Static device parameters, all angular frequencies in rad/s.

    ``chi_qc`` is the full dispersive shift with its sign (negative for the
    bundled device); ``resonator_freq`` is the ground-state-dressed value.
    """

    qubit_freq: float
    qubit_anharm: float
    qubit_t1: float
    resonator_freq: float
    chi_qc: float
    filter_freq: float
    filter_anharm: float
    g_cf: float
    kappa_f: float

    def __post_init__(self):
        if not self.kappa_f > 0:
            raise ConfigError(f"kappa_f must be > 0, got {self.kappa_f}")
        if self.g_cf < 0:
            raise ConfigError(f"g_cf must be >= 0, got {self.g_cf}")
        if not self.qubit_t1 > 0:
            raise ConfigError(f"qubit_t1 must be > 0, got {self.qubit_t1}")
        for name in ("qubit_freq", "resonator_freq", "filter_freq"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.filter_anharm > 0:
            raise ConfigError("filter_anharm must be <= 0")
        if abs(self.chi_qc) >= self.kappa_f:
            warnings.warn("|chi_qc| >= kappa_f: outside the overcoupled regime",
                          ParameterWarning, stacklevel=3)

    def replace(self, **changes) -> "DeviceParams":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_hz_dict(cls, d: dict) -> "DeviceParams":
        missing = set(_JSON_KEYS) - set(d)
        if missing:
            raise ConfigError(f"device file missing keys: {sorted(missing)}")
        kw = {}
        for key, (attr, is_freq) in _JSON_KEYS.items():
            v = float(d[key])
            kw[attr] = TWO_PI * v if is_freq else v
        return cls(**kw)

    def to_hz_dict(self) -> dict:
        out = {}
        for key, (attr, is_freq) in _JSON_KEYS.items():
            v = getattr(self, attr)
            out[key] = v / TWO_PI if is_freq else v
        return out

    @classmethod
    def from_json(cls, path) -> "DeviceParams":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read device file {path}: {exc}") from exc
        return cls.from_hz_dict(d)


def bundled_device() -> DeviceParams:
    """Parameters of the measured device (qubit, resonator and filter tables)."""
    text = resources.files("purcellsim.data").joinpath("device_tables.json").read_text()
    return DeviceParams.from_hz_dict(json.loads(text))


@dataclass(frozen=True)
class DriveSpec:
    drive_freq: float  # rad/s
    drive_amp: float = 0.0  # rad/s
    qubit_state: QubitState = "g"

    def __post_init__(self):
        if self.drive_amp < 0:
            raise ConfigError("drive_amp must be >= 0")
        if self.qubit_state not in ("g", "e"):
            raise ConfigError(f"qubit_state must be 'g' or 'e', got {self.qubit_state!r}")


@dataclass(frozen=True)
class HybridModes:
    omega_plus: float
    omega_minus: float
    kappa_plus: float
    kappa_minus: float
    readout_like_index: Literal["plus", "minus"]


def dressed_resonator_freq(device: DeviceParams, state: QubitState) -> float:
    return device.resonator_freq + (device.chi_qc if state == "e" else 0.0)


def detunings(device: DeviceParams, drive: DriveSpec) -> tuple[float, float, float]:
    """Rotating-frame detunings ``(delta_c, delta_f, delta_c_prime)``."""
    delta_c = device.resonator_freq - drive.drive_freq
    delta_f = device.filter_freq - drive.drive_freq
    delta_c_prime = delta_c + device.chi_qc if drive.qubit_state == "e" else delta_c
    return delta_c, delta_f, delta_c_prime


def qubit_resonator_coupling(device: DeviceParams) -> float:
    """Qubit-resonator coupling g_qc inferred from the dispersive shift of a transmon."""
    dq = device.qubit_freq - device.resonator_freq
    radicand = dq * (dq + device.qubit_anharm) * device.chi_qc / (2.0 * device.qubit_anharm)
    if radicand < 0:
        raise NegativeRadicand(
            f"g_qc radicand {radicand:.4g} < 0; check the sign of chi_qc relative to "
            "the qubit-resonator detuning and anharmonicity")
    return math.sqrt(radicand)


def critical_photon_number(device: DeviceParams) -> float:
    """``n_crit = (w_q - w_c)^2 / (4 g_qc^2)``."""
    g = qubit_resonator_coupling(device)
    if g == 0:
        raise CouplingIsZero("g_qc = 0: critical photon number is unbounded")
    dq = device.qubit_freq - device.resonator_freq
    return dq * dq / (4.0 * g * g)


def hybridized_modes(device: DeviceParams) -> HybridModes:
    """Normal modes of the resonator-filter pair.

    At ``filter_freq == resonator_freq`` this is exactly
    ``w_pm + i k_pm/2 = w_c + i k_f/4 +- sqrt(g^2 - (k_f/4)^2)``; away from
    resonance the same expression is continued with the half-detuning folded
    into the square root.
    """
    wc, wf, g, k = device.resonator_freq, device.filter_freq, device.g_cf, device.kappa_f
    half_det = 0.5 * (wf - wc)
    # g^2 + (half_det + i k/4)^2, written out so the imaginary part is exactly 0 on resonance
    arg = complex(g * g + half_det * half_det - k * k / 16.0, half_det * k / 2.0)
    root = np.sqrt(arg)
    centre = complex(0.5 * (wc + wf), k / 4.0)
    plus, minus = centre + root, centre - root
    kp, km = 2.0 * plus.imag, 2.0 * minus.imag
    if kp < km:
        idx = "plus"
    elif km < kp:
        idx = "minus"
    else:
        idx = "minus" if minus.real <= plus.real else "plus"
    return HybridModes(plus.real, minus.real, kp, km, idx)


def coupled_mode_matrix(device: DeviceParams, state: QubitState = "g") -> np.ndarray:
    wc = dressed_resonator_freq(device, state)
    return np.array([[wc, device.g_cf],
                     [device.g_cf, device.filter_freq - 0.5j * device.kappa_f]])


def effective_linewidth(device: DeviceParams, state: QubitState = "g") -> tuple[float, float]:
    """Linewidth and frequency ``(kappa_eff, omega_eff)`` of the resonator-like mode.

    The resonator-like eigenvalue of ``[[w_c, g], [g, w_f - i k_f/2]]`` is the
    one whose eigenvector has the larger resonator weight; ties go to the
    smaller ``|Im|`` (then lower frequency).
    """
    vals, vecs = np.linalg.eig(coupled_mode_matrix(device, state))
    weights = np.abs(vecs[0, :])
    if math.isclose(weights[0], weights[1], rel_tol=1e-12, abs_tol=1e-15):
        order = sorted(range(2), key=lambda i: (abs(vals[i].imag), vals[i].real))
        i = order[0]
    else:
        i = int(np.argmax(weights))
    lam = vals[i]
    return -2.0 * lam.imag, lam.real


def pure_dephasing_time(t2_echo: float, t1: float, rtol: float = 1e-9) -> float:
    """``T_phi = 1 / (1/T2_echo - 1/(2 T1))``; ``math.inf`` when there is no pure dephasing."""
    rate = 1.0 / t2_echo - 1.0 / (2.0 * t1)
    if rate < 0:
        if -rate <= rtol / t2_echo:
            return math.inf
        raise InconsistentTimes(f"T2_echo={t2_echo} exceeds 2*T1={2 * t1}")
    if rate == 0:
        return math.inf
    return 1.0 / rate
