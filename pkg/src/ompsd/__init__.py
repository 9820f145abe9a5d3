"""Simulation and analysis toolkit for the phase-space distribution of a
noise-driven mechanical resonator coupled to a driven cavity."""

__version__ = "0.1.0"

from . import config, errors, experiments, fokker_planck, io, langevin, tomography
from .model import (
    CalibrationResult,
    DeviceParams,
    DriveParams,
    EffectiveParams,
    amplitude_for_gamma_ba,
    calibrate_drive,
    cavity_photon_number,
    effective_params,
    gamma0_curve,
    hopf_thresholds,
    seo_amplitude,
    xi_l,
)

__all__ = [
    "__version__",
    "CalibrationResult",
    "DeviceParams",
    "DriveParams",
    "EffectiveParams",
    "amplitude_for_gamma_ba",
    "calibrate_drive",
    "cavity_photon_number",
    "effective_params",
    "gamma0_curve",
    "hopf_thresholds",
    "seo_amplitude",
    "xi_l",
]
