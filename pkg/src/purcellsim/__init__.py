"""Dispersive readout through a Kerr-nonlinear Purcell filter: linear theory,
mean-field bifurcation, truncated Lindblad model, semiclassical noise
dephasing and device-parameter fitting."""
from .model import (
    HBAR,
    TWO_PI,
    DeviceParams,
    DriveSpec,
    HybridModes,
    bundled_device,
    critical_photon_number,
    detunings,
    effective_linewidth,
    hybridized_modes,
    pure_dephasing_time,
    qubit_resonator_coupling,
)

__version__ = "0.1.0"
