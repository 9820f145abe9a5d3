"""PSD reconstruction from displacement records, the way the experiment does it:
windowed quadrature demodulation, rotated-quadrature marginals, and filtered
back-projection, with a direct 2D histogram as an independent cross-check."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import NumericsError
from .fokker_planck import CartesianGrid, PsdField, moments
from .langevin import SignalTrace

_MIN_WINDOW_PERIODS = 10


@dataclass
class QuadratureSamples:
    """Carrier-frame amplitude estimates, one row per analysis window."""

    points: np.ndarray            # (n, 2) -> (a_x, a_y)
    window_centers: np.ndarray    # (n,) seconds

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.window_centers = np.asarray(self.window_centers, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError("points must have shape (n, 2)")
        if self.window_centers.shape != (self.points.shape[0],):
            raise ValueError("one window center per sample required")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("quadrature samples must be finite")

    @property
    def n(self):
        return self.points.shape[0]

    def radii(self):
        return np.hypot(self.points[:, 0], self.points[:, 1])

    def phases(self):
        return np.arctan2(self.points[:, 1], self.points[:, 0])


@dataclass
class Sinogram:
    """Rotated-quadrature marginal histograms over K angles in [0, pi)."""

    angles: np.ndarray        # (K,)
    bin_edges: np.ndarray     # (M+1,) uniform
    density: np.ndarray       # (K, M), each row integrates to 1

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float)
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        self.density = np.asarray(self.density, dtype=float)
        k, m = self.density.shape
        if k < 16 or m < 64:
            raise ValueError(f"sinogram needs K >= 16 angles and M >= 64 bins, got {k}x{m}")
        if self.angles.shape != (k,) or self.bin_edges.shape != (m + 1,):
            raise ValueError("inconsistent sinogram shapes")

    @property
    def bin_centers(self):
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def bin_width(self):
        return float(self.bin_edges[1] - self.bin_edges[0])


def demodulate(trace: SignalTrace, window, max_slow_rate=None) -> QuadratureSamples:
    """Lock-in extraction of (a_x, a_y) over consecutive windows.

    a_x = (2/T) integral x(t) cos(w t) dt and a_y likewise with sin, by
    uniform-grid quadrature.  The window is rounded to an integer number of
    carrier periods, which cancels the 2w ripple exactly for sample rates
    commensurate with the carrier.  When ``max_slow_rate`` is given the
    window must also stay at least ten times shorter than 1/max_slow_rate
    (slow/fast separation).
    """
    f_carrier = trace.carrier / (2.0 * math.pi)
    n_periods = int(round(window * f_carrier))
    if n_periods < _MIN_WINDOW_PERIODS:
        raise NumericsError(
            f"window of {window * f_carrier:.1f} carrier periods is too short; "
            f"need at least {_MIN_WINDOW_PERIODS}")
    actual = n_periods / f_carrier
    if max_slow_rate is not None and actual > 0.1 / max_slow_rate:
        raise NumericsError(
            f"window {actual:g} s too long for slow rate {max_slow_rate:g} 1/s")
    n_samp = int(round(actual * trace.sample_rate))
    n_windows = trace.n // n_samp
    if n_windows < 1:
        raise NumericsError("trace shorter than one demodulation window")
    m = n_windows * n_samp
    t = trace.times()[:m]
    x = trace.samples[:m].reshape(n_windows, n_samp)
    c = np.cos(trace.carrier * t).reshape(n_windows, n_samp)
    s = np.sin(trace.carrier * t).reshape(n_windows, n_samp)
    ax = 2.0 * np.mean(x * c, axis=1)
    ay = 2.0 * np.mean(x * s, axis=1)
    centers = trace.t0 + (np.arange(n_windows) + 0.5) * n_samp / trace.sample_rate
    return QuadratureSamples(np.column_stack((ax, ay)), centers)


def direct_psd(samples: QuadratureSamples, grid: CartesianGrid) -> PsdField:
    """Normalized 2D histogram of quadrature samples on the grid."""
    if samples.n == 0:
        raise ValueError("cannot histogram an empty sample set")
    h = grid.h
    ex = grid.x0 - 0.5 * h + h * np.arange(grid.nx + 1)
    ey = grid.y0 - 0.5 * h + h * np.arange(grid.ny + 1)
    counts, _, _ = np.histogram2d(samples.points[:, 0], samples.points[:, 1],
                                  bins=[ex, ey])
    total = counts.sum()
    if total == 0:
        raise NumericsError("no samples fall inside the grid")
    return PsdField(grid, counts / (total * grid.cell_area), 0.0,
                    meta={"n_samples": int(total)})


def sinogram(samples: QuadratureSamples, n_angles=32, n_bins=128,
             x_range=None) -> Sinogram:
    """Marginal histograms of the rotated quadrature X_phi = a_x cos phi + a_y sin phi."""
    if samples.n == 0:
        raise ValueError("cannot build a sinogram from an empty sample set")
    angles = np.pi * np.arange(n_angles) / n_angles
    if x_range is None:
        r_max = float(samples.radii().max())
        x_range = 1.05 * r_max if r_max > 0 else 1.0
    edges = np.linspace(-x_range, x_range, n_bins + 1)
    width = edges[1] - edges[0]
    density = np.empty((n_angles, n_bins))
    pts = samples.points
    for k, phi in enumerate(angles):
        proj = pts[:, 0] * math.cos(phi) + pts[:, 1] * math.sin(phi)
        counts, _ = np.histogram(proj, bins=edges)
        density[k] = counts / (counts.sum() * width)
    return Sinogram(angles=angles, bin_edges=edges, density=density)


def _ramp_filter(n_pad, bin_width, cutoff):
    """Band-limited ramp (frequency response of the discrete real-space
    kernel, which keeps the DC behavior correct) with cosine apodization."""
    kernel = np.zeros(n_pad)
    kernel[0] = 0.25
    odd = np.arange(1, n_pad // 2 + 1, 2)
    kernel[odd] = -1.0 / (math.pi * odd) ** 2
    kernel[-odd] = -1.0 / (math.pi * odd) ** 2
    h = 2.0 * np.real(np.fft.fft(kernel)) / bin_width
    f = np.fft.fftfreq(n_pad, d=bin_width)
    f_cut = cutoff * 0.5 / bin_width
    apod = np.cos(0.5 * math.pi * f / f_cut)
    apod[np.abs(f) > f_cut] = 0.0
    return h * apod


def inverse_radon(s: Sinogram, grid: CartesianGrid, cutoff=0.8,
                  max_clipped=0.10) -> PsdField:
    """Filtered back-projection of a sinogram onto a Cartesian grid.

    Ramp filter with cosine apodization at ``cutoff`` times the bin Nyquist
    frequency.  Negative amplitude from the filter is clipped and the field
    renormalized; the clipped mass fraction is reported in ``meta`` and
    raises NumericsError above ``max_clipped`` (untrustworthy data).
    """
    k_ang, m = s.density.shape
    width = s.bin_width
    n_pad = 1
    while n_pad < 2 * m:
        n_pad *= 2
    filt = _ramp_filter(n_pad, width, cutoff)
    padded = np.zeros((k_ang, n_pad))
    padded[:, :m] = s.density
    filtered = np.real(np.fft.ifft(np.fft.fft(padded, axis=1) * filt, axis=1))[:, :m]

    xx, yy = grid.mesh()
    centers = s.bin_centers
    recon = np.zeros((grid.nx, grid.ny))
    for k, phi in enumerate(s.angles):
        t = xx * math.cos(phi) + yy * math.sin(phi)
        recon += np.interp(t, centers, filtered[k], left=0.0, right=0.0)
    recon *= math.pi / k_ang
    # the inversion is only defined inside the scanned disk; outside it the
    # missing marginal tails leave uncancelled back-projection residue
    recon[np.hypot(xx, yy) > abs(s.bin_edges[-1])] = 0.0

    neg = recon < 0
    clipped = -recon[neg].sum() * grid.cell_area
    positive = recon[~neg].sum() * grid.cell_area
    if positive <= 0:
        raise NumericsError("back-projection produced no positive mass")
    frac = clipped / positive
    if frac > max_clipped:
        raise NumericsError(
            f"clipped mass fraction {frac:.3f} exceeds {max_clipped:g}; "
            "reconstruction untrustworthy")
    recon[neg] = 0.0
    field = PsdField(grid, recon, 0.0, meta={"clipped_mass_fraction": float(frac)})
    return field.normalized()


def _bilinear_resample(field: PsdField, grid: CartesianGrid) -> np.ndarray:
    src = field.grid
    xi = (grid.xs - src.x0) / src.h
    yi = (grid.ys - src.y0) / src.h
    xi0 = np.clip(np.floor(xi).astype(int), 0, src.nx - 2)
    yi0 = np.clip(np.floor(yi).astype(int), 0, src.ny - 2)
    fx = np.clip(xi - xi0, 0.0, 1.0)[:, None]
    fy = np.clip(yi - yi0, 0.0, 1.0)[None, :]
    v = field.values
    out = (v[np.ix_(xi0, yi0)] * (1 - fx) * (1 - fy)
           + v[np.ix_(xi0 + 1, yi0)] * fx * (1 - fy)
           + v[np.ix_(xi0, yi0 + 1)] * (1 - fx) * fy
           + v[np.ix_(xi0 + 1, yi0 + 1)] * fx * fy)
    inside = ((grid.xs >= src.x0) & (grid.xs <= src.x0 + (src.nx - 1) * src.h))[:, None] \
        & ((grid.ys >= src.y0) & (grid.ys <= src.y0 + (src.ny - 1) * src.h))[None, :]
    return np.where(inside, out, 0.0)


def compare_psd(a: PsdField, b: PsdField) -> dict:
    """L1 and Linf distances plus moment deltas; resamples b when grids differ."""
    if a.is_radial or b.is_radial:
        raise ValueError("compare_psd expects Cartesian fields")
    if b.grid != a.grid:
        b = PsdField(a.grid, _bilinear_resample(b, a.grid), b.time_label).normalized()
    diff = a.values - b.values
    ma, mb = moments(a), moments(b)
    return {
        "l1": float(np.abs(diff).sum() * a.grid.cell_area),
        "linf": float(np.abs(diff).max()),
        "moment_deltas": {k: ma[k] - mb[k] for k in ma},
    }


def wrap_angle(x):
    """Map angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(x), 2.0 * np.pi)


def conditioned_psd(first: QuadratureSamples, second: QuadratureSamples,
                    grid: CartesianGrid, reference_phase, reference_radius,
                    phase_tol=math.pi / 16, radius_tol=None,
                    min_count=100) -> PsdField:
    """PSD of second-window samples conditioned on the first window.

    Keeps pairs whose first-window phase lies within ``phase_tol`` of
    ``reference_phase`` and whose radius lies within ``radius_tol``
    (default 0.1 * reference_radius) of ``reference_radius``.  Raises
    NumericsError when fewer than ``min_count`` pairs survive.
    """
    if first.n != second.n:
        raise ValueError("first and second window sample counts differ")
    if radius_tol is None:
        radius_tol = 0.1 * reference_radius
    dphi = np.abs(wrap_angle(first.phases() - reference_phase))
    dr = np.abs(first.radii() - reference_radius)
    keep = (dphi <= phase_tol) & (dr <= radius_tol)
    n_kept = int(keep.sum())
    if n_kept < min_count:
        raise NumericsError(
            f"only {n_kept} conditioned samples survive (< {min_count}); "
            "lengthen the record or widen the tolerances")
    out = direct_psd(QuadratureSamples(second.points[keep],
                                       second.window_centers[keep]), grid)
    out.meta["n_conditioned"] = n_kept
    return out
