"""File formats: PSD fields (CSV), signal traces (binary + sidecar), sinograms.

PsdField CSV (bit-exact round trip, 17 significant digits):

    # ompsd-psd v1
    # kind=cartesian
    # nx=<int> ny=<int> x0=<f> y0=<f> h=<f>
    # time=<f>
    x,y,p
    ...one record per cell, x fastest...

Radial fields use ``kind=radial``, ``n=<int> dr=<f>`` and ``r,p`` records.

SignalTrace binary layout: a 64-byte little-endian header followed by
float64 samples.  Header fields: magic ``OMPSDSIG`` (8 bytes),
version u32, flags u32, sample_rate f64, carrier f64 (rad/s), count u64,
t0 f64, noise_sigma f64, 8 padding bytes.  A sidecar ``<path>.meta`` text
file carries seed provenance as ``key=value`` lines.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .fokker_planck import CartesianGrid, PsdField, RadialGrid
from .langevin import SignalTrace
from .tomography import Sinogram

_MAGIC = b"OMPSDSIG"
_VERSION = 1
_HEADER = struct.Struct("<8sIIddQdd8x")
assert _HEADER.size == 64


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def psd_to_csv(field: PsdField, path):
    path = Path(path)
    lines = ["# ompsd-psd v1"]
    if field.is_radial:
        g = field.grid
        lines.append("# kind=radial")
        lines.append(f"# n={g.n} dr={_fmt(g.dr)}")
        lines.append(f"# time={_fmt(field.time_label)}")
        lines.append("r,p")
        rs = g.rs
        for i in range(g.n):
            lines.append(f"{_fmt(rs[i])},{_fmt(field.values[i])}")
    else:
        g = field.grid
        lines.append("# kind=cartesian")
        lines.append(f"# nx={g.nx} ny={g.ny} x0={_fmt(g.x0)} y0={_fmt(g.y0)} h={_fmt(g.h)}")
        lines.append(f"# time={_fmt(field.time_label)}")
        lines.append("x,y,p")
        xs, ys = g.xs, g.ys
        vals = field.values
        for j in range(g.ny):
            for i in range(g.nx):
                lines.append(f"{_fmt(xs[i])},{_fmt(ys[j])},{_fmt(vals[i, j])}")
    path.write_text("\n".join(lines) + "\n")


def _header_fields(lines):
    fields = {}
    for ln in lines:
        if not ln.startswith("#"):
            break
        for tok in ln[1:].split():
            if "=" in tok:
                k, v = tok.split("=", 1)
                fields[k] = v
    return fields


def psd_from_csv(path) -> PsdField:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"PSD file not found: {path}")
    lines = path.read_text().splitlines()
    fields = _header_fields(lines)
    kind = fields.get("kind")
    time_label = float(fields.get("time", 0.0))
    data_lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not data_lines:
        raise ConfigError(f"no records in {path}")
    body = data_lines[1:]  # skip the column header
    try:
        if kind == "radial":
            grid = RadialGrid(n=int(fields["n"]), dr=float(fields["dr"]))
            vals = np.array([float(ln.split(",")[1]) for ln in body])
            return PsdField(grid, vals, time_label)
        if kind == "cartesian":
            grid = CartesianGrid(x0=float(fields["x0"]), y0=float(fields["y0"]),
                                 nx=int(fields["nx"]), ny=int(fields["ny"]),
                                 h=float(fields["h"]))
            vals = np.array([float(ln.split(",")[2]) for ln in body])
            return PsdField(grid, vals.reshape(grid.ny, grid.nx).T, time_label)
    except (KeyError, ValueError, IndexError) as exc:
        raise ConfigError(f"malformed PSD file {path}: {exc}") from exc
    raise ConfigError(f"unknown PSD kind {kind!r} in {path}")


def trace_to_file(trace: SignalTrace, path):
    path = Path(path)
    header = _HEADER.pack(_MAGIC, _VERSION, 0, trace.sample_rate, trace.carrier,
                          trace.n, trace.t0, trace.noise_sigma)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(trace.samples, dtype="<f8").tobytes())
    meta_lines = [f"{k}={v}" for k, v in sorted(trace.seed_info.items())]
    Path(str(path) + ".meta").write_text("\n".join(meta_lines) + "\n")


def trace_from_file(path) -> SignalTrace:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"signal trace not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ConfigError(f"truncated trace file: {path}")
    magic, version, _flags, rate, carrier, count, t0, noise_sigma = \
        _HEADER.unpack(raw[:_HEADER.size])
    if magic != _MAGIC:
        raise ConfigError(f"bad magic in {path}: {magic!r}")
    if version != _VERSION:
        raise ConfigError(f"unsupported trace version {version} in {path}")
    samples = np.frombuffer(raw, dtype="<f8", count=count, offset=_HEADER.size)
    seed_info = {}
    meta_path = Path(str(path) + ".meta")
    if meta_path.exists():
        for ln in meta_path.read_text().splitlines():
            if "=" in ln:
                k, v = ln.split("=", 1)
                seed_info[k] = v
    return SignalTrace(samples=samples.copy(), sample_rate=rate, carrier=carrier,
                       t0=t0, noise_sigma=noise_sigma, seed_info=seed_info)


def trace_to_csv(trace: SignalTrace, path):
    """Optional plain-text export for small traces: t,x records."""
    t = trace.times()
    lines = ["t,x"]
    lines += [f"{_fmt(t[i])},{_fmt(trace.samples[i])}" for i in range(trace.n)]
    Path(path).write_text("\n".join(lines) + "\n")


def sinogram_to_csv(s: Sinogram, path):
    lines = ["angle,bin_center,density"]
    for k, ang in enumerate(s.angles):
        for m, c in enumerate(s.bin_centers):
            lines.append(f"{_fmt(ang)},{_fmt(c)},{_fmt(s.density[k, m])}")
    Path(path).write_text("\n".join(lines) + "\n")
