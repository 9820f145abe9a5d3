"""Deterministic figure rendering: fixed colormap, no timestamps, stable bytes."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import PlotsError, read_matrix_csv, read_psd_csv

_KINDS = ("sweep", "transient", "dwell_panels", "psd2d")
_AXIS_LABEL = {"d": "$d$", "gm_t": r"$\gamma_m t$"}
_PNG_META = {"Software": "ompsd-plots"}


@dataclass
class PlotJob:
    inputs: list
    kind: str
    output: str
    normalization: str = "per_column"    # or "global"
    colormap: str = "viridis"
    labels: list = field(default_factory=list)
    dpi: int = 150

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise PlotsError(f"unknown plot kind {self.kind!r}")
        if self.normalization not in ("per_column", "global"):
            raise PlotsError(f"unknown normalization {self.normalization!r}")
        if not self.inputs:
            raise PlotsError("no input files given")


def normalize_columns(values: np.ndarray) -> np.ndarray:
    """Scale each column to its own maximum; zero columns stay zero.

    Leaves every column's argmax row unchanged.
    """
    peaks = values.max(axis=0, keepdims=True)
    safe = np.where(peaks > 0, peaks, 1.0)
    return values / safe


def _render_matrix(job: PlotJob):
    m = read_matrix_csv(job.inputs[0])
    vals = normalize_columns(m.values) if job.normalization == "per_column" \
        else (m.values / m.values.max() if m.values.max() > 0 else m.values)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    extent = [m.axis[0], m.axis[-1], m.r[0], m.r[-1]]
    im = ax.imshow(vals, origin="lower", aspect="auto", extent=extent,
                   cmap=job.colormap, vmin=0.0)
    ax.set_xlabel(_AXIS_LABEL.get(m.axis_name, m.axis_name))
    ax.set_ylabel(r"$A_r/\delta_m$")
    fig.colorbar(im, ax=ax, label="normalized density")
    return fig


def _render_dwell_panels(job: PlotJob):
    fields = [read_psd_csv(p) for p in job.inputs]
    n = len(fields)
    cols = 2 if n > 1 else 1
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(4.0 * cols, 3.4 * rows),
                             squeeze=False)
    vmax = max(f.values.max() for f in fields)
    for k, f in enumerate(fields):
        ax = axes[k // cols][k % cols]
        label = job.labels[k] if k < len(job.labels) else f"{f.time_label:g}"
        im = ax.imshow(f.values.T, origin="lower", cmap=job.colormap,
                       extent=[f.x[0], f.x[-1], f.y[0], f.y[-1]],
                       vmin=0.0, vmax=vmax)
        ax.set_title(rf"$\gamma_m t_d = {label}$")
        ax.set_xlabel(r"$A_x/\delta_m$")
        ax.set_ylabel(r"$A_y/\delta_m$")
    for k in range(n, rows * cols):
        axes[k // cols][k % cols].axis("off")
    fig.colorbar(im, ax=[a for row in axes for a in row], label="density")
    return fig


def _render_psd2d(job: PlotJob):
    f = read_psd_csv(job.inputs[0])
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    im = ax.imshow(f.values.T, origin="lower", cmap=job.colormap,
                   extent=[f.x[0], f.x[-1], f.y[0], f.y[-1]], vmin=0.0)
    ax.set_xlabel(r"$A_x/\delta_m$")
    ax.set_ylabel(r"$A_y/\delta_m$")
    fig.colorbar(im, ax=ax, label="density")
    return fig


def render(job: PlotJob) -> Path:
    """Render the job to a raster image; deterministic for fixed inputs."""
    if job.kind in ("sweep", "transient"):
        fig = _render_matrix(job)
    elif job.kind == "dwell_panels":
        fig = _render_dwell_panels(job)
    else:
        fig = _render_psd2d(job)
    out = Path(job.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=job.dpi, metadata=dict(_PNG_META))
    plt.close(fig)
    return out
