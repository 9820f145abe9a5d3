"""Standalone render scripts: render_sweep <csv> <png>, etc."""

from __future__ import annotations

import argparse
import sys

from .io import PlotsError
from .render import PlotJob, render


def _run(kind, argv, many_inputs=False):
    p = argparse.ArgumentParser(prog=f"render_{kind}")
    if many_inputs:
        p.add_argument("inputs", nargs="+", help="PSD CSV files, one per panel")
    else:
        p.add_argument("input", help="input CSV file")
    p.add_argument("output", help="output image path")
    p.add_argument("--normalization", choices=["per_column", "global"],
                   default="per_column")
    p.add_argument("--colormap", default="viridis")
    p.add_argument("--labels", default="",
                   help="comma-separated panel labels (dwell panels)")
    args = p.parse_args(argv)
    inputs = args.inputs if many_inputs else [args.input]
    labels = [s for s in args.labels.split(",") if s]
    try:
        out = render(PlotJob(inputs=inputs, kind=kind, output=args.output,
                             normalization=args.normalization,
                             colormap=args.colormap, labels=labels))
    except PlotsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


def render_sweep(argv=None):
    return _run("sweep", argv)


def render_transient(argv=None):
    return _run("transient", argv)


def render_dwell_panels(argv=None):
    return _run("dwell_panels", argv, many_inputs=True)


def render_psd2d(argv=None):
    return _run("psd2d", argv)


if __name__ == "__main__":
    sys.exit(render_sweep())
