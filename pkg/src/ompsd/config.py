"""Scenario configuration: YAML input, explicit schema, strict validation.

Unknown keys are rejected with their full path; every default is
materialized into the resolved mapping so the persisted manifest records
the complete effective configuration.
"""

from __future__ import annotations

import math
from pathlib import Path

import yaml

from .errors import ConfigError
from .model import DeviceParams

_SCENARIO_KINDS = ("steady_sweep", "dwell", "switch", "fp_evolve")
_DRIVE_MODES = ("amplitude", "photon_number", "gamma_ba_norm", "calibrate_targets")


def _num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _positive(x):
    return _num(x) and x > 0


def _non_negative(x):
    return _num(x) and x >= 0


def _int_ge(n):
    return lambda x: isinstance(x, int) and not isinstance(x, bool) and x >= n


def _num_list(x):
    return isinstance(x, list) and len(x) > 0 and all(_num(v) for v in x)


def _str(x):
    return isinstance(x, str)


# field -> (default, predicate, description); REQUIRED means no default
REQUIRED = object()

_DEVICE_SCHEMA = {
    "f_m_hz": (662.7e3, _positive, "mechanical frequency [Hz]"),
    "gamma_m_hz": (2.5, _positive, "mechanical damping rate [Hz]"),
    "gamma_c_hz": (4.2e6, _positive, "cavity damping rate [Hz]"),
    "coupling_hz": (0.013, _positive, "frequency shift per zero-point displacement [Hz]"),
    "gamma2_norm": (2.0e-4, _non_negative, "nonlinear damping gamma2*delta_m^2/gamma_m"),
}

_DRIVE_SCHEMA = {
    "d": (0.7, _num, "normalized detuning (reference detuning for sweeps)"),
    "d_cool": (-0.475, _num, "cooling-stage detuning for the switch scenario"),
    "amplitude": (None, _positive, "normalized feedline drive amplitude a_p"),
    "photon_number": (None, _non_negative, "mean intracavity photon number"),
    "gamma_ba_norm": (None, _positive, "|gamma_ba|/gamma_m at the reference detuning"),
    "calibrate_targets": (None, _num_list, "two threshold detunings to fit a_p against"),
}

_NUMERICS_SCHEMA = {
    # signal chain
    "carrier_hz": (5000.0, _positive, "desk-scale carrier frequency for synthesis [Hz]"),
    "sample_rate_factor": (8, _int_ge(3), "samples per carrier period"),
    "window_periods": (100, _int_ge(10), "demodulation window length in carrier periods"),
    "detector_noise": (0.5, _non_negative, "per-sample detector noise [delta_m]"),
    # integrators
    "langevin_dt": (None, _positive, "SDE step [s]; default = stability bound"),
    "fp_dt": (None, _positive, "FP step [s]; default = stability bound"),
    "dt_safety": (1.0, lambda x: _num(x) and 0 < x <= 1, "fraction of the stability bound"),
    # grids
    "grid_n": (128, _int_ge(16), "cells per axis of 2D PSD grids"),
    "grid_extent": (None, _positive, "2D grid half-width [delta_m]; default scenario-derived"),
    "radial_cells": (None, _int_ge(16), "cells of radial grids; default resolution-derived"),
    "radial_cells_per_width": (12, _int_ge(4), "radial cells across the narrowest feature"),
    "comparison_grid_n": (64, _int_ge(16), "cells per axis of route-comparison grids"),
    # tomography
    "tomo_angles": (32, _int_ge(16), "sinogram angles"),
    "tomo_bins": (128, _int_ge(64), "sinogram amplitude bins"),
    "tomo_cutoff": (0.8, lambda x: _num(x) and 0 < x <= 1, "filter cutoff vs bin Nyquist"),
    # steady sweep
    "d_start": (0.3, _num, "sweep start detuning"),
    "d_stop": (1.2, _num, "sweep stop detuning"),
    "d_step": (0.01, _positive, "sweep detuning step"),
    "r_max": (None, _positive, "radial axis maximum of profile matrices [delta_m]"),
    "n_r": (256, _int_ge(16), "radial axis cells of profile matrices"),
    "windows_per_point": (2000, _int_ge(100), "demodulation windows per sweep point"),
    "n_trajectories": (64, _int_ge(1), "parallel trajectories per sweep point"),
    "tomography_stride": (1, _int_ge(0), "reconstruct every k-th sweep point (0 = none)"),
    # dwell
    "dwell_times_gm": ([0.12, 1.2, 7.5, 12.0], _num_list, "gamma_m * dwell times"),
    "n_pairs": (20000, _int_ge(100), "window pairs for conditioning"),
    "phase_ref": (0.0, _num, "conditioning reference phase [rad]"),
    "phase_tol": (math.pi / 16, _positive, "conditioning phase tolerance [rad]"),
    "radius_tol_ar0": (0.1, _positive, "conditioning radius tolerance [A_r0]"),
    "min_conditioned": (100, _int_ge(1), "minimum surviving conditioned samples"),
    "angular_bins": (36, _int_ge(8), "sectors for angular entropy"),
    # switch
    "snapshot_times_gm": (None, _num_list, "gamma_m * snapshot times; default 12 log-spaced"),
    "n_switch_trajectories": (10000, _int_ge(100), "Langevin ensemble size for switch"),
    "routes": (["radial", "fp2d", "langevin"],
               lambda x: isinstance(x, list) and x
               and all(v in ("radial", "fp2d", "langevin") for v in x),
               "evolution routes to run"),
    "cross_route_l1": (0.1, _positive, "pairwise route agreement tolerance"),
    "equilibrate_pre": (False, lambda x: isinstance(x, bool),
                        "simulate the cooling stage instead of the analytic Gaussian"),
    # fp_evolve
    "t_final_gm": (3.0, _positive, "gamma_m * evolution span"),
    "initial_kind": ("thermal", lambda x: x in ("thermal", "gaussian", "steady"),
                     "initial condition for fp_evolve"),
    "initial_width": (1.0, _positive, "Gaussian radial width for initial_kind=gaussian"),
    "radial": (False, lambda x: isinstance(x, bool), "use the radial solver in fp_evolve"),
}

_TOP_SCHEMA = {
    "device": (dict, _DEVICE_SCHEMA),
    "drive": (dict, _DRIVE_SCHEMA),
    "numerics": (dict, _NUMERICS_SCHEMA),
}


def _canonical(value):
    """Coerce accepted values to plain Python types (numpy scalars included)."""
    if isinstance(value, bool) or isinstance(value, str):
        return value
    if isinstance(value, int):
        return int(value)
    if isinstance(value, float):
        return float(value)
    if isinstance(value, list):
        return [_canonical(v) for v in value]
    return value


def _validate_block(name, block, schema):
    if block is None:
        block = {}
    if not isinstance(block, dict):
        raise ConfigError(f"'{name}' must be a mapping")
    out = {}
    for key, value in block.items():
        if key not in schema:
            raise ConfigError(f"unknown key '{name}.{key}'")
        default, pred, desc = schema[key]
        if value is None and default is not REQUIRED:
            continue  # explicit null keeps the default
        if not pred(value):
            raise ConfigError(f"invalid value for '{name}.{key}' ({desc}): {value!r}")
        out[key] = _canonical(value)
    for key, (default, _pred, desc) in schema.items():
        if key not in out:
            if default is REQUIRED:
                raise ConfigError(f"missing required key '{name}.{key}' ({desc})")
            out[key] = default
    return out


def resolve_config(raw: dict) -> dict:
    """Validate a raw mapping and materialize every default."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a mapping")
    known_top = {"device", "drive", "numerics", "scenario", "seed", "output_dir"}
    for key in raw:
        if key not in known_top:
            raise ConfigError(f"unknown top-level key '{key}'")

    out = {}
    scenario = raw.get("scenario", "steady_sweep")
    if scenario not in _SCENARIO_KINDS:
        raise ConfigError(
            f"'scenario' must be one of {_SCENARIO_KINDS}, got {scenario!r}")
    out["scenario"] = scenario

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0 or seed > 2**64 - 1:
        raise ConfigError(f"'seed' must be an unsigned 64-bit integer, got {seed!r}")
    out["seed"] = seed

    output_dir = raw.get("output_dir", "ompsd_out")
    if not _str(output_dir):
        raise ConfigError(f"'output_dir' must be a string, got {output_dir!r}")
    out["output_dir"] = output_dir

    for name, (_kind, schema) in _TOP_SCHEMA.items():
        out[name] = _validate_block(name, raw.get(name), schema)

    drive = out["drive"]
    modes = [m for m in _DRIVE_MODES if drive.get(m) is not None]
    if len(modes) > 1:
        raise ConfigError(f"drive block sets conflicting amplitude modes: {modes}")
    targets = drive.get("calibrate_targets")
    if targets is not None and (len(targets) != 2 or not 0 < targets[0] < targets[1]):
        raise ConfigError(
            f"'drive.calibrate_targets' must be [d_low, d_high] with 0 < d_low < d_high")
    return out


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if raw is None:
        raw = {}
    return resolve_config(raw)


def device_from_config(cfg: dict) -> DeviceParams:
    d = cfg["device"]
    return DeviceParams.from_hz(
        f_m=d["f_m_hz"], gamma_m=d["gamma_m_hz"], gamma_c=d["gamma_c_hz"],
        coupling=d["coupling_hz"], gamma2_norm=d["gamma2_norm"])


def dump_config(cfg: dict) -> str:
    """Deterministic YAML rendering of a resolved configuration."""
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)
