"""Readers for the ompsd CSV schemas.

Matrix CSV: optional ``#`` comment lines (the first carries
``axis=<name>``), then a first data row ``0,<axis values...>`` and rows
``r,<densities...>``.

PSD-field CSV: ``#`` header lines with ``kind=cartesian|radial`` and grid
keys (nx/ny/x0/y0/h or n/dr), a column-header line, then one record per
cell.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class PlotsError(Exception):
    """Input file does not match the documented schema."""


@dataclass
class Matrix:
    axis_name: str
    axis: np.ndarray      # column coordinates (detuning or gamma_m * t)
    r: np.ndarray         # row coordinates (A_r / delta_m)
    values: np.ndarray    # (n_r, n_axis)


@dataclass
class Psd2D:
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray    # (nx, ny)
    time_label: float


def _fail(path, line_no, msg):
    raise PlotsError(f"{path}:{line_no}: {msg}")


def read_matrix_csv(path) -> Matrix:
    path = Path(path)
    if not path.exists():
        raise PlotsError(f"input file not found: {path}")
    axis_name = "axis"
    rows = []
    axis = None
    for i, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if tok.startswith("axis="):
                    axis_name = tok[5:]
            continue
        try:
            vals = [float(tok) for tok in line.split(",")]
        except ValueError:
            _fail(path, i, f"non-numeric record: {line!r}")
        if axis is None:
            axis = np.array(vals[1:])
            if axis.size == 0:
                _fail(path, i, "axis row has no columns")
            continue
        if len(vals) != axis.size + 1:
            _fail(path, i, f"expected {axis.size + 1} fields, got {len(vals)}")
        rows.append(vals)
    if axis is None or not rows:
        raise PlotsError(f"{path}: no data rows")
    data = np.array(rows)
    return Matrix(axis_name=axis_name, axis=axis, r=data[:, 0],
                  values=data[:, 1:])


def read_psd_csv(path) -> Psd2D:
    path = Path(path)
    if not path.exists():
        raise PlotsError(f"input file not found: {path}")
    fields = {}
    body = []
    header_seen = False
    for i, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    fields[k] = v
            continue
        if not header_seen:
            header_seen = True   # column-name line
            continue
        body.append((i, line))
    kind = fields.get("kind")
    if kind != "cartesian":
        raise PlotsError(f"{path}: expected kind=cartesian PSD, got {kind!r}")
    try:
        nx, ny = int(fields["nx"]), int(fields["ny"])
        x0, y0, h = (float(fields[k]) for k in ("x0", "y0", "h"))
    except KeyError as exc:
        raise PlotsError(f"{path}: missing grid key {exc}") from exc
    if len(body) != nx * ny:
        raise PlotsError(f"{path}: expected {nx * ny} records, found {len(body)}")
    vals = np.empty(nx * ny)
    for j, (line_no, line) in enumerate(body):
        parts = line.split(",")
        if len(parts) != 3:
            _fail(path, line_no, f"expected 3 fields, got {len(parts)}")
        try:
            vals[j] = float(parts[2])
        except ValueError:
            _fail(path, line_no, f"non-numeric density: {parts[2]!r}")
    values = vals.reshape(ny, nx).T
    return Psd2D(x=x0 + h * np.arange(nx), y=y0 + h * np.arange(ny),
                 values=values, time_label=float(fields.get("time", 0.0)))
