"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .config import device_from_config, load_config, resolve_config
from .errors import ConfigError, NumericsError
from .experiments import (
    resolve_drive_amplitude,
    run_dwell,
    run_fp_evolve,
    run_steady_sweep,
    run_switch,
)
from .model import DriveParams, calibrate_drive, effective_params, seo_amplitude


def _build_parser():
    p = argparse.ArgumentParser(
        prog="ompsd",
        description="Phase-space distribution toolkit: effective parameters, "
                    "Langevin/Fokker-Planck evolution, tomography, and the "
                    "three experimental protocols.")
    p.add_argument("--version", action="version", version=f"ompsd {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required,
                        help="YAML configuration file")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config seed (unsigned 64-bit)")
        sp.add_argument("--out", default=None, help="override the output directory")
        sp.add_argument("--format", choices=["csv"], default="csv",
                        help="output format (CSV only)")

    common(sub.add_parser("params", help="print resolved effective parameters"))
    common(sub.add_parser("steady-sweep", help="steady-state PSD vs detuning"))
    common(sub.add_parser("dwell", help="conditioned PSDs vs dwell time"))
    common(sub.add_parser("switch", help="time-resolved PSD after a cooling-heating switch"))
    common(sub.add_parser("fp-evolve", help="evolve a PSD under the current potential"))
    tomo_p = sub.add_parser("tomo", help="reconstruct a PSD from a signal trace")
    common(tomo_p)
    tomo_p.add_argument("--input", required=True, help="SignalTrace binary file")
    tomo_p.add_argument("--method", choices=["direct", "fbp", "both"], default="both")
    common(sub.add_parser("calibrate", help="fit drive amplitude to threshold targets"))
    return p


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0 or args.seed > 2**64 - 1:
            raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {args.seed}")
        cfg = dict(cfg)
        cfg["seed"] = args.seed
    if args.out is not None:
        cfg = dict(cfg)
        cfg["output_dir"] = args.out
    return resolve_config(cfg)


def _cmd_params(args):
    cfg = _load(args)
    dev = device_from_config(cfg)
    drive_blk = cfg["drive"]
    if drive_blk.get("photon_number") is not None:
        drive = DriveParams(d=drive_blk["d"], photon_number=drive_blk["photon_number"])
    elif drive_blk.get("amplitude") is not None:
        drive = DriveParams(d=drive_blk["d"], amplitude=drive_blk["amplitude"])
    elif (drive_blk.get("gamma_ba_norm") is not None
          or drive_blk.get("calibrate_targets") is not None):
        amplitude, _ = resolve_drive_amplitude(dev, cfg, drive_blk["d"])
        drive = DriveParams(d=drive_blk["d"], amplitude=amplitude)
    else:
        drive = DriveParams(d=drive_blk["d"], photon_number=0.0)
    eff = effective_params(dev, drive)
    gm = dev.gamma_m
    print(f"d = {drive.d}")
    print(f"E_c = {drive.resolve_photon_number(dev.g):.6g}")
    print(f"g = {dev.g:.6g}")
    print(f"omega0 = {eff.omega0:.6g} 1/s ({eff.omega0 / gm:.6g} gamma_m)")
    print(f"gamma0 = {eff.gamma0:.6g} 1/s ({eff.gamma0 / gm:.6g} gamma_m)")
    print(f"gamma_ba = {eff.gamma_ba:.6g} 1/s ({eff.gamma_ba / gm:.6g} gamma_m)")
    print(f"gamma2 = {eff.gamma2:.6g} 1/s per delta_m^2 "
          f"({eff.gamma2 / gm:.6g} gamma_m)")
    print(f"omega2 = {eff.omega2:.6g} (held at zero in the dynamics)")
    print(f"theta = {eff.theta:.6g} delta_m^2/s")
    if eff.gamma2 > 0:
        print(f"ring_radius = {seo_amplitude(eff):.6g} delta_m")
    return 0


def _cmd_tomo(args):
    import math

    import numpy as np

    from . import io as oio
    from . import tomography as tomo_mod
    from .fokker_planck import CartesianGrid

    cfg = _load(args)
    num = cfg["numerics"]
    trace = oio.trace_from_file(args.input)
    window = num["window_periods"] / (trace.carrier / (2.0 * math.pi))
    samples = tomo_mod.demodulate(trace, window)
    extent = num["grid_extent"] or float(1.1 * np.max(samples.radii()))
    grid = CartesianGrid.centered(extent, num["comparison_grid_n"])
    out_dir = _prepare_out(cfg)
    written = []
    if args.method in ("direct", "both"):
        field = tomo_mod.direct_psd(samples, grid)
        oio.psd_to_csv(field, out_dir / "psd_direct.csv")
        written.append("psd_direct.csv")
    if args.method in ("fbp", "both"):
        sino = tomo_mod.sinogram(samples, num["tomo_angles"], num["tomo_bins"],
                                 x_range=extent)
        oio.sinogram_to_csv(sino, out_dir / "sinogram.csv")
        written.append("sinogram.csv")
        field = tomo_mod.inverse_radon(sino, grid, cutoff=num["tomo_cutoff"])
        oio.psd_to_csv(field, out_dir / "psd_fbp.csv")
        written.append("psd_fbp.csv")
    for name in written:
        print(out_dir / name)
    return 0


def _prepare_out(cfg):
    from pathlib import Path

    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_calibrate(args):
    cfg = _load(args)
    dev = device_from_config(cfg)
    targets = cfg["drive"].get("calibrate_targets")
    if targets is None:
        raise ConfigError("calibrate needs drive.calibrate_targets = [d_low, d_high]")
    cal = calibrate_drive(dev, tuple(targets))
    print(f"amplitude = {cal.amplitude:.10g}")
    print(f"roots = ({cal.roots[0]:.6g}, {cal.roots[1]:.6g})")
    print(f"targets = ({cal.targets[0]:.6g}, {cal.targets[1]:.6g})")
    print(f"rms_residual = {cal.residual:.6g}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "params":
            return _cmd_params(args)
        if args.command == "steady-sweep":
            res = run_steady_sweep(_load(args))
        elif args.command == "dwell":
            res = run_dwell(_load(args))
        elif args.command == "switch":
            res = run_switch(_load(args))
        elif args.command == "fp-evolve":
            res = run_fp_evolve(_load(args))
        elif args.command == "tomo":
            return _cmd_tomo(args)
        elif args.command == "calibrate":
            return _cmd_calibrate(args)
        else:  # pragma: no cover - argparse enforces the choices
            parser.error(f"unknown command {args.command}")
        print(f"outputs written to {res.out_dir}")
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
