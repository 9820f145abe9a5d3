"""Scenario runners: steady-state detuning sweep, dwell-time phase diffusion,
and the cooling-to-heating switch, each taking a resolved configuration to
a set of CSV outputs plus an in-memory result object.

Timescales are desk-scaled: the synthesized carrier (default 5 kHz against
gamma_m = 2.5 Hz) keeps the slow/fast separation of the physical device at
a fraction of the sample count.  All randomness derives from the config
seed through per-trajectory counter streams, so outputs are byte-stable
and independent of chunking or the OMPSD_THREADS worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import io as oio
from . import langevin as lv
from . import tomography as tomo
from .config import device_from_config
from .errors import ConfigError, NumericsError
from .fokker_planck import (
    CartesianGrid,
    EvolveResult,
    PsdField,
    PotentialSpec,
    RadialGrid,
    evolve,
    gaussian_field,
    gaussian_width_oracle,
    moments,
    potential,
    radial_evolve,
    radial_profile,
    radial_to_cartesian,
    steady_state,
)
from .manifest import RunManifest
from .model import (
    DriveParams,
    amplitude_for_gamma_ba,
    calibrate_drive,
    effective_params,
    hopf_thresholds,
    seo_amplitude,
)

_NOISE_EPOCH_BASE = 1 << 32   # detector-noise streams live above integration epochs
_TWO_PI = 2.0 * math.pi


def _fmt(x):
    return format(float(x), ".17g")


def _max_workers():
    env = os.environ.get("OMPSD_THREADS", "")
    try:
        n = int(env) if env else 1
    except ValueError:
        n = 1
    return max(1, n)


def _parallel_map(fn, items):
    """Index-stable map honoring the OMPSD_THREADS cap."""
    workers = _max_workers()
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def resolve_drive_amplitude(dev, cfg, reference_d):
    """Drive amplitude from whichever mode the drive block sets.

    Returns (amplitude, calibration_or_None).  The pump powers quoted for
    the experiments are not usable directly (unknown attenuation chain),
    so sweeps and transients are driven by one of: an explicit normalized
    amplitude, a target |gamma_ba|/gamma_m at the reference detuning, or a
    two-threshold calibration fit.
    """
    drive = cfg["drive"]
    if drive.get("amplitude") is not None:
        return float(drive["amplitude"]), None
    if drive.get("gamma_ba_norm") is not None:
        a = amplitude_for_gamma_ba(dev, reference_d,
                                   drive["gamma_ba_norm"] * dev.gamma_m)
        return a, None
    if drive.get("calibrate_targets") is not None:
        cal = calibrate_drive(dev, tuple(drive["calibrate_targets"]))
        return cal.amplitude, cal
    raise ConfigError(
        "this scenario needs an amplitude-type drive: set one of "
        "drive.amplitude, drive.gamma_ba_norm, or drive.calibrate_targets")


def _dynamics_eff(dev, d, amplitude):
    """Effective parameters with the frequency pull disabled for dynamics."""
    eff = effective_params(dev, DriveParams(d=d, amplitude=amplitude))
    return eff.without_frequency_pull()


def _window_grid(numerics):
    f_c = numerics["carrier_hz"]
    fs = numerics["sample_rate_factor"] * f_c
    w = numerics["window_periods"] / f_c
    return f_c, fs, w


def _snap_dt(dt_bound, window):
    """Largest step <= dt_bound that divides the window exactly."""
    steps = int(math.ceil(window / dt_bound - 1e-12))
    return window / steps, steps


def _demod_noise_sigma(num):
    """Std of the quadrature error left by detector noise after demodulation."""
    n_samp = num["window_periods"] * num["sample_rate_factor"]
    return num["detector_noise"] * math.sqrt(2.0 / n_samp)


def _fbp_settings(num, n_samples):
    """Back-projection bins/cutoff, coarsened below ~3e4 samples so the
    ramp-filtered marginals stay above their noise floor."""
    if n_samples >= 30000:
        return num["tomo_bins"], num["tomo_cutoff"]
    return min(num["tomo_bins"], 64), min(num["tomo_cutoff"], 0.6)


def window_quadratures(paths, path_dt, t_start, n_windows, carrier, sample_rate,
                       window, noise_sigma=0.0, seed=0, offsets=None,
                       noise_epoch=0):
    """Demodulated quadratures of synthesized windows, (n_traj, n_windows, 2).

    Mirrors langevin.synthesize_signal + tomography.demodulate exactly
    (linear amplitude interpolation, uniform-grid lock-in sums) but batched
    over trajectories.  Detector noise draws come from per-trajectory
    counter streams under ``noise_epoch`` so results are chunk-independent.
    """
    n_traj, m, _ = paths.shape
    n_samp = int(round(window * sample_rate))
    spw = window / path_dt
    if abs(spw - round(spw)) > 1e-9:
        raise ValueError("path_dt must divide the window exactly")
    if (n_windows * round(spw)) > m - 1:
        raise ValueError("paths too short for the requested windows")
    gens = None
    if noise_sigma > 0.0:
        if offsets is None:
            raise ValueError("detector noise requires stream offsets")
        gens = [lv.trajectory_rng(seed, int(off), noise_epoch) for off in offsets]
    out = np.empty((n_traj, n_windows, 2))
    centers = np.empty(n_windows)
    for j in range(n_windows):
        ts = t_start + j * window + np.arange(n_samp) / sample_rate
        rel = ts - t_start
        idx = np.minimum((rel / path_dt).astype(int), m - 2)
        frac = rel / path_dt - idx
        ax = paths[:, idx, 0] * (1.0 - frac) + paths[:, idx + 1, 0] * frac
        ay = paths[:, idx, 1] * (1.0 - frac) + paths[:, idx + 1, 1] * frac
        c = np.cos(carrier * ts)
        s = np.sin(carrier * ts)
        x = ax * c + ay * s
        if gens is not None:
            for i, g in enumerate(gens):
                x[i] += g.normal(0.0, noise_sigma, n_samp)
        out[:, j, 0] = 2.0 * np.mean(x * c, axis=1)
        out[:, j, 1] = 2.0 * np.mean(x * s, axis=1)
        centers[j] = t_start + (j + 0.5) * window
    return out, centers


def expected_histogram_l1(field: PsdField, n_samples, seed, n_boot=16):
    """Bootstrapped statistical allowance for histogram-vs-field L1 distances.

    Draws multinomial samples of size n from the field's cell masses and
    measures their L1 to the field itself; returns (mean, std) over boots.
    """
    q = field.cell_masses().ravel()
    q = np.clip(q, 0.0, None)
    q = q / q.sum()
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0xB00], dtype=np.uint64)))
    l1s = np.empty(n_boot)
    for b in range(n_boot):
        counts = rng.multinomial(n_samples, q)
        l1s[b] = np.abs(counts / n_samples - q).sum()
    return float(l1s.mean()), float(l1s.std())


def histogram_field(points, grid: CartesianGrid) -> PsdField:
    qs = tomo.QuadratureSamples(points, np.zeros(len(points)))
    return tomo.direct_psd(qs, grid)


def _write_matrix(path, axis_name, axis_values, r_values, matrix):
    lines = [f"# ompsd-matrix v1 axis={axis_name}"]
    lines.append(",".join(["0"] + [_fmt(a) for a in axis_values]))
    for i, r in enumerate(r_values):
        lines.append(",".join([_fmt(r)] + [_fmt(v) for v in matrix[i]]))
    Path(path).write_text("\n".join(lines) + "\n")


def _l1(a: PsdField, b: PsdField):
    return tomo.compare_psd(a, b)["l1"]


# ---------------------------------------------------------------------------
# steady-state sweep


@dataclass
class SweepResult:
    d_values: np.ndarray
    r_values: np.ndarray
    analytic_matrix: np.ndarray        # (n_r, n_d) densities W(r; d)
    tomo_matrix: np.ndarray | None     # (n_r, n_sel)
    tomo_indices: list
    ring_radius: np.ndarray            # analytic limit-cycle radius per d
    thresholds: list
    amplitude: float
    calibration: object
    out_dir: Path


def run_steady_sweep(cfg) -> SweepResult:
    dev = device_from_config(cfg)
    num = cfg["numerics"]
    seed = cfg["seed"]
    out_dir = Path(cfg["output_dir"])
    manifest = RunManifest(out_dir, cfg)
    manifest.start()

    amplitude, calibration = resolve_drive_amplitude(dev, cfg, cfg["drive"]["d"])
    step = num["d_step"]
    d0, d1 = num["d_start"], num["d_stop"]
    n_d = int(round(abs(d1 - d0) / step)) + 1
    # anchor the grid at the lower endpoint so upward and downward sweeps
    # visit bit-identical detunings
    ascending = min(d0, d1) + step * np.arange(n_d)
    d_values = ascending if d1 >= d0 else ascending[::-1].copy()

    effs = [_dynamics_eff(dev, float(d), amplitude) for d in d_values]
    rings = np.array([seo_amplitude(e) if e.gamma2 > 0 else 0.0 for e in effs])
    thresholds = hopf_thresholds(dev, amplitude)

    r_max = num["r_max"] or 1.02 * max(
        lv.stationary_support_radius(e) for e in effs)
    r_values = np.linspace(0.0, r_max, num["n_r"])

    analytic = np.empty((num["n_r"], len(d_values)))
    for i, eff in enumerate(effs):
        spec = PotentialSpec.from_effective(eff)
        h_val = potential(spec, r_values)
        w = np.exp(-(h_val - h_val.min()) / spec.theta)
        z = np.trapezoid(w * _TWO_PI * r_values, r_values)
        analytic[:, i] = w / z

    stride = num["tomography_stride"]
    tomo_matrix = None
    tomo_indices = []
    if stride > 0:
        tomo_indices = list(range(0, len(d_values), stride))
        f_c, fs, window = _window_grid(num)
        carrier = _TWO_PI * f_c
        n_traj = num["n_trajectories"]
        wpt = int(math.ceil(num["windows_per_point"] / n_traj))
        n_bins, cutoff = _fbp_settings(num, num["windows_per_point"])
        cum = np.cumsum(analytic * _TWO_PI * r_values[:, None], axis=0)
        cum /= cum[-1]
        # streams keyed by ascending-detuning rank, not sweep position, so
        # upward and downward sweeps produce identical columns
        rank = {i: r for r, i in enumerate(np.argsort(d_values, kind="stable"))}

        def one_point(i):
            eff = effs[i]
            ens = lv.sample_steady_state(eff, n_traj, seed,
                                         offset_base=(rank[i] + 1) * n_traj,
                                         stream_epoch=rank[i] + 1)
            # conservative spread bound: the stationary support, not just the
            # initial draw, so one dt covers the whole multi-window record
            r_cons = max(float(ens.radii().max()),
                         float(lv.steady_state_radial_table(eff)[0][-1]))
            bound = lv.stability_dt(eff, r_cons) * num["dt_safety"]
            dt, _ = _snap_dt(min(num["langevin_dt"] or bound, bound), window)
            sim = lv.simulate_ensemble(eff, ens, wpt * window, dt, record_paths=True)
            quads, centers = window_quadratures(
                sim.paths, sim.path_dt, 0.0, wpt, carrier, fs, window,
                noise_sigma=num["detector_noise"], seed=seed,
                offsets=ens.stream_offsets,
                noise_epoch=_NOISE_EPOCH_BASE + rank[i])
            pts = quads.reshape(-1, 2)[: num["windows_per_point"]]
            qs = tomo.QuadratureSamples(
                pts, np.tile(centers, n_traj)[: len(pts)])
            # size the reconstruction to this point's analytic support
            # (plus detector-noise broadening of the demodulated samples)
            r_sup = r_values[int(np.searchsorted(cum[:, i], 1.0 - 1e-5))]
            extent = 1.15 * float(r_sup) + 5.0 * _demod_noise_sigma(num)
            grid2 = CartesianGrid.centered(extent, num["comparison_grid_n"])
            sino = tomo.sinogram(qs, num["tomo_angles"], n_bins, x_range=extent)
            # qualitative channel: tolerate more clipping than the strict
            # reconstruction default; the fraction stays in the field meta
            fbp = tomo.inverse_radon(sino, grid2, cutoff=cutoff, max_clipped=0.25)
            prof = radial_profile(fbp)
            return np.interp(r_values, prof.grid.rs, prof.values, right=0.0)

        cols = _parallel_map(one_point, tomo_indices)
        tomo_matrix = np.column_stack(cols)

    _write_matrix(out_dir / "sweep_matrix.csv", "d", d_values, r_values, analytic)
    manifest.add_output("sweep_matrix.csv")
    if tomo_matrix is not None:
        _write_matrix(out_dir / "sweep_matrix_tomo.csv", "d",
                      d_values[tomo_indices], r_values, tomo_matrix)
        manifest.add_output("sweep_matrix_tomo.csv")
    lines = ["d_threshold"] + [_fmt(t) for t in thresholds]
    (out_dir / "thresholds.csv").write_text("\n".join(lines) + "\n")
    manifest.add_output("thresholds.csv")
    manifest.finalize()
    return SweepResult(d_values=d_values, r_values=r_values,
                       analytic_matrix=analytic, tomo_matrix=tomo_matrix,
                       tomo_indices=tomo_indices, ring_radius=rings,
                       thresholds=thresholds, amplitude=amplitude,
                       calibration=calibration, out_dir=out_dir)


# ---------------------------------------------------------------------------
# dwell-time phase diffusion


@dataclass
class DwellResult:
    dwell_times_gm: list
    conditioned: list                  # PsdField per dwell time (Langevin route)
    fp_fields: list                    # PsdField per dwell time (FP route)
    entropies: list                    # angular entropy of conditioned PSDs
    fp_entropies: list
    n_conditioned: list
    ring_radius: float
    fp_diagnostics: dict
    out_dir: Path


def run_dwell(cfg) -> DwellResult:
    dev = device_from_config(cfg)
    num = cfg["numerics"]
    seed = cfg["seed"]
    out_dir = Path(cfg["output_dir"])
    manifest = RunManifest(out_dir, cfg)
    manifest.start()

    d = cfg["drive"]["d"]
    amplitude, _cal = resolve_drive_amplitude(dev, cfg, d)
    eff = _dynamics_eff(dev, d, amplitude)
    if eff.gamma0 >= 0:
        raise ConfigError(
            f"dwell protocol needs the self-excited regime; gamma0 = "
            f"{eff.gamma0 / dev.gamma_m:.3f} gamma_m at d = {d}")
    ring = seo_amplitude(eff)
    sigma_ring = math.sqrt(eff.theta / (-2.0 * eff.gamma0))

    dwell_gm = sorted(num["dwell_times_gm"])
    dwell_s = [t / dev.gamma_m for t in dwell_gm]
    f_c, fs, window = _window_grid(num)
    carrier = _TWO_PI * f_c
    for a, b in zip(dwell_s, dwell_s[1:]):
        if b - a < window:
            raise ConfigError("dwell times closer than one demodulation window")

    n_pairs = num["n_pairs"]
    ens = lv.sample_steady_state(eff, n_pairs, seed)

    def segment_dt(state, snap_to=None):
        bound = lv.stability_dt(eff, float(state.radii().max())) * num["dt_safety"]
        dt = min(num["langevin_dt"] or bound, bound)
        return _snap_dt(dt, snap_to)[0] if snap_to else dt

    def measure_window(state, epoch_tag):
        dt = segment_dt(state, snap_to=window)
        sim = lv.simulate_ensemble(eff, state, window, dt, record_paths=True)
        quads, _centers = window_quadratures(
            sim.paths, sim.path_dt, state.time, 1, carrier, fs, window,
            noise_sigma=num["detector_noise"], seed=seed,
            offsets=state.stream_offsets, noise_epoch=_NOISE_EPOCH_BASE + epoch_tag)
        return sim.final, quads[:, 0, :]

    ens, first_pts = measure_window(ens, 0)
    first = tomo.QuadratureSamples(first_pts, np.full(n_pairs, 0.5 * window))

    extent = num["grid_extent"] or float(
        lv.steady_state_radial_table(eff)[0][-1])
    grid = CartesianGrid.centered(extent, num["comparison_grid_n"])
    radius_tol = num["radius_tol_ar0"] * ring

    conditioned, entropies, n_cond = [], [], []
    for k, t_d in enumerate(dwell_s):
        gap = (window + t_d) - ens.time
        if gap > 0:
            sim = lv.simulate_ensemble(eff, ens, gap, segment_dt(ens))
            ens = sim.final
        ens, second_pts = measure_window(ens, k + 1)
        second = tomo.QuadratureSamples(second_pts,
                                        np.full(n_pairs, ens.time - 0.5 * window))
        field = tomo.conditioned_psd(
            first, second, grid,
            reference_phase=num["phase_ref"], reference_radius=ring,
            phase_tol=num["phase_tol"], radius_tol=radius_tol,
            min_count=num["min_conditioned"])
        field.time_label = t_d
        conditioned.append(field)
        entropies.append(moments(field, num["angular_bins"])["angular_entropy"])
        n_cond.append(field.meta["n_conditioned"])

    # Fokker-Planck route: localized lobe on the ring, diffusion interval
    # measured center-to-center (t_d + one window)
    spec = PotentialSpec.from_effective(eff)
    fp_extent = num["grid_extent"] or (ring + 6.0 * sigma_ring)
    fp_grid = CartesianGrid.centered(fp_extent, num["grid_n"])
    xx, yy = fp_grid.mesh()
    rr = np.hypot(xx, yy)
    th = np.arctan2(yy, xx)
    sig_r0 = min(sigma_ring, radius_tol / math.sqrt(3.0))
    sig_th0 = num["phase_tol"] / math.sqrt(3.0)
    lobe = np.exp(-0.5 * ((rr - ring) / sig_r0) ** 2
                  - 0.5 * (tomo.wrap_angle(th - num["phase_ref"]) / sig_th0) ** 2)
    init = PsdField(fp_grid, lobe).normalized()
    snap_times = [t_d + window for t_d in dwell_s]
    fp_res = evolve(init, spec, snap_times[-1], dt=num["fp_dt"],
                    snapshot_times=snap_times)
    fp_fields = fp_res.snapshots
    fp_entropies = [moments(f, num["angular_bins"])["angular_entropy"]
                    for f in fp_fields]
    fp_diag = {"mass_drift": fp_res.mass_drift, "min_value": fp_res.min_value,
               "boundary_mass": fp_res.boundary_mass}

    for k, t_gm in enumerate(dwell_gm):
        tag = f"{k}"
        oio.psd_to_csv(conditioned[k], out_dir / f"psd_dwell_cond_{tag}.csv")
        manifest.add_output(f"psd_dwell_cond_{tag}.csv")
        oio.psd_to_csv(fp_fields[k], out_dir / f"psd_dwell_fp_{tag}.csv")
        manifest.add_output(f"psd_dwell_fp_{tag}.csv")
    lines = ["gm_dwell,n_conditioned,entropy_conditioned,entropy_fp"]
    for k, t_gm in enumerate(dwell_gm):
        lines.append(f"{_fmt(t_gm)},{n_cond[k]},{_fmt(entropies[k])},{_fmt(fp_entropies[k])}")
    (out_dir / "entropy_table.csv").write_text("\n".join(lines) + "\n")
    manifest.add_output("entropy_table.csv")
    manifest.finalize()
    return DwellResult(dwell_times_gm=dwell_gm, conditioned=conditioned,
                       fp_fields=fp_fields, entropies=entropies,
                       fp_entropies=fp_entropies, n_conditioned=n_cond,
                       ring_radius=ring, fp_diagnostics=fp_diag,
                       out_dir=out_dir)


# ---------------------------------------------------------------------------
# cooling -> heating switch


@dataclass
class SwitchResult:
    snapshot_times_gm: list
    radial_snapshots: list             # radial PsdField per snapshot
    fp2d_snapshots: list | None
    langevin_points: list | None       # ensemble points per snapshot
    tomo_fields: dict                  # gm_t -> windowed tomographic PsdField
    cross_route: list                  # dict per snapshot with pairwise L1s
    delta0: float
    gamma_ba: float
    ring_radius: float
    eff_post: object
    fp_diagnostics: dict
    out_dir: Path
    comparison_grids: list


def support_radius(field: PsdField, eps=1e-5) -> float:
    """Radius containing all but a fraction eps of a radial field's mass."""
    if not field.is_radial:
        raise ValueError("support_radius expects a radial field")
    masses = np.maximum(field.cell_masses(), 0.0)
    cum = np.cumsum(masses)
    target = (1.0 - eps) * cum[-1]
    i = int(np.searchsorted(cum, target))
    return float(field.grid.rs[min(i, field.grid.n - 1)])


def _staged_2d_switch(spec, delta0, times, grid_n, extent_cap, width_of):
    """2D evolution across regridding stages sized to the growing width."""
    # stage boundaries: refine snapshot intervals so width grows <= 1.6x/stage
    marks = [0.0]
    for a, b in zip([0.0] + list(times[:-1]), times):
        w_a, w_b = width_of(a), width_of(b)
        n_sub = max(1, int(math.ceil(math.log(max(w_b / w_a, 1.0)) / math.log(1.6))))
        marks.extend(a + (b - a) * (k + 1) / n_sub for k in range(n_sub))
    marks = sorted(set(marks))

    def extent_at(t):
        return min(4.4 * width_of(t), extent_cap)

    snapshots = []
    field = None
    t_prev = 0.0
    extent_prev = None
    diag = {"mass_drift": 0.0, "min_value": math.inf, "boundary_mass": 0.0}
    for t_next in marks[1:]:
        extent = max(extent_at(t_next), extent_prev or 0.0)
        grid = CartesianGrid.centered(extent, grid_n)
        if field is None:
            field = gaussian_field(grid, delta0)
        elif extent != extent_prev:
            vals = tomo._bilinear_resample(field, grid)
            field = PsdField(grid, vals, field.time_label).normalized()
        res = evolve(field, spec, t_next - t_prev)
        diag["mass_drift"] = max(diag["mass_drift"], res.mass_drift)
        diag["min_value"] = min(diag["min_value"], res.min_value)
        diag["boundary_mass"] = max(diag["boundary_mass"], res.boundary_mass)
        field = res.final
        field.time_label = t_next
        if any(abs(t_next - t) < 1e-12 for t in times):
            snapshots.append(field.copy())
        t_prev = t_next
        extent_prev = extent
    return snapshots, diag


def run_switch(cfg) -> SwitchResult:
    dev = device_from_config(cfg)
    num = cfg["numerics"]
    seed = cfg["seed"]
    out_dir = Path(cfg["output_dir"])
    manifest = RunManifest(out_dir, cfg)
    manifest.start()

    d1 = cfg["drive"]["d_cool"]
    if d1 >= 0:
        raise ConfigError(f"drive.d_cool must be negative (cooling), got {d1}")
    amplitude, _cal = resolve_drive_amplitude(dev, cfg, d1)
    eff_pre = _dynamics_eff(dev, d1, amplitude)
    eff_post = _dynamics_eff(dev, -d1, amplitude)
    gamma_ba = eff_pre.gamma_ba
    if gamma_ba <= 0:
        raise ConfigError("cooling stage must have positive back-action damping")
    delta0 = math.sqrt(2.0 * eff_pre.theta / eff_pre.gamma0)
    ring = seo_amplitude(eff_post) if eff_post.gamma2 > 0 else 0.0
    sigma_ring = (math.sqrt(eff_post.theta / (-2.0 * eff_post.gamma0))
                  if eff_post.gamma0 < 0 else delta0)

    gm = dev.gamma_m
    times_gm = num["snapshot_times_gm"] or list(np.geomspace(1e-3, 3.0, 12))
    times_gm = sorted(float(t) for t in times_gm)
    times = [t / gm for t in times_gm]
    spec_post = PotentialSpec.from_effective(eff_post)

    # saturated spread of the post-switch state, for grid caps
    if ring > 0:
        r_cap = 1.12 * (ring + 4.0 * sigma_ring)
        sat_rms = math.sqrt(ring * ring + 2.0 * sigma_ring * sigma_ring)
    else:
        sat_rms = gaussian_width_oracle(eff_post.theta, gamma_ba, gm, times[-1])
        r_cap = 4.5 * sat_rms

    def width_of(t):
        w = gaussian_width_oracle(eff_post.theta, gamma_ba, gm, t)
        return float(min(w, sat_rms))

    routes = num["routes"]
    f_c, fs, window = _window_grid(num)
    carrier = _TWO_PI * f_c
    # windowed reconstructions need the window short against the elapsed
    # time and enough trajectories for a trustworthy back-projection
    tomo_eligible = [t for t in times if t >= 4.0 * window]
    if num["n_switch_trajectories"] < 5000:
        tomo_eligible = []

    # (i) radial FP (also supplies the window-shifted reference snapshots)
    shifted = [t + 0.5 * window for t in tomo_eligible]
    all_rad_times = sorted(set(times) | set(shifted))
    r_extent = max(r_cap, 4.5 * width_of(times[-1]), 4.5 * delta0)
    n_rad = num["radial_cells"] or min(
        int(math.ceil(r_extent / (delta0 / num["radial_cells_per_width"]))), 24000)
    rad_grid = RadialGrid.from_rmax(r_extent, n_rad)
    rad_init = gaussian_field(rad_grid, delta0)
    rad_res = radial_evolve(rad_init, spec_post, all_rad_times[-1],
                            dt=num["fp_dt"], snapshot_times=all_rad_times)
    rad_by_time = {round(f.time_label, 15): f for f in rad_res.snapshots}
    radial_snapshots = [rad_by_time[round(t, 15)] for t in times]
    fp_diag = {"radial": {"mass_drift": rad_res.mass_drift,
                          "min_value": rad_res.min_value,
                          "boundary_mass": rad_res.boundary_mass}}

    # (ii) staged 2D FP
    fp2d_snapshots = None
    if "fp2d" in routes:
        fp2d_snapshots, diag2d = _staged_2d_switch(spec_post, delta0, times,
                                                   num["grid_n"], r_cap, width_of)
        fp_diag["fp2d"] = diag2d

    # (iii) Langevin ensemble + windowed tomography
    langevin_points = None
    tomo_fields = {}
    if "langevin" in routes:
        n_traj = num["n_switch_trajectories"]
        ens = lv.sample_gaussian_state(n_traj, delta0, seed)
        langevin_points = []
        t_cur = 0.0
        for k, t_k in enumerate(times):
            span = t_k - t_cur
            if span > 0:
                bound = lv.stability_dt(eff_post, float(ens.radii().max())) \
                    * num["dt_safety"]
                dt = min(num["langevin_dt"] or bound, bound)
                ens = lv.simulate_ensemble(eff_post, ens, span, dt).final
                t_cur = t_k
            langevin_points.append(ens.points.copy())
            if t_k in tomo_eligible:
                bound = lv.stability_dt(eff_post, float(ens.radii().max())) \
                    * num["dt_safety"]
                dt_w, _ = _snap_dt(min(num["langevin_dt"] or bound, bound), window)
                sim = lv.simulate_ensemble(eff_post, ens, window, dt_w,
                                           record_paths=True)
                quads, _ = window_quadratures(
                    sim.paths, sim.path_dt, t_cur, 1, carrier, fs, window,
                    noise_sigma=num["detector_noise"], seed=seed,
                    offsets=ens.stream_offsets,
                    noise_epoch=_NOISE_EPOCH_BASE + k)
                ens = sim.final
                t_cur += window
                qs = tomo.QuadratureSamples(quads[:, 0, :],
                                            np.full(n_traj, t_cur - 0.5 * window))
                rad_ref = rad_by_time[round(t_k + 0.5 * window, 15)]
                extent = 1.15 * support_radius(rad_ref)
                tgrid = CartesianGrid.centered(extent, num["comparison_grid_n"])
                n_bins, cutoff = _fbp_settings(num, n_traj)
                sino = tomo.sinogram(qs, num["tomo_angles"], n_bins,
                                     x_range=extent)
                tomo_fields[round(t_k * gm, 12)] = tomo.inverse_radon(
                    sino, tgrid, cutoff=cutoff, max_clipped=0.25)

    # route comparisons on per-snapshot grids sized to the current spread
    cross_route = []
    comparison_grids = []
    tol = num["cross_route_l1"]
    for k, t_k in enumerate(times):
        extent = 1.15 * max(support_radius(radial_snapshots[k]), delta0)
        cgrid = CartesianGrid.centered(extent, num["comparison_grid_n"])
        comparison_grids.append(cgrid)
        ref = radial_to_cartesian(radial_snapshots[k], cgrid)
        entry = {"gm_t": t_k * gm}
        if fp2d_snapshots is not None:
            entry["l1_radial_fp2d"] = _l1(ref, fp2d_snapshots[k])
            if entry["l1_radial_fp2d"] > tol:
                raise NumericsError(
                    f"radial vs 2D FP disagree (L1 = {entry['l1_radial_fp2d']:.3f} "
                    f"> {tol}) at gamma_m t = {t_k * gm:g}")
        if langevin_points is not None:
            hist = histogram_field(langevin_points[k], cgrid)
            l1 = _l1(ref, hist)
            allow_mean, allow_std = expected_histogram_l1(
                ref, len(langevin_points[k]), seed + k)
            entry["l1_radial_langevin"] = l1
            entry["l1_allowance"] = allow_mean + 4.0 * allow_std
            if l1 > tol + entry["l1_allowance"]:
                raise NumericsError(
                    f"radial FP vs Langevin disagree (L1 = {l1:.3f} > "
                    f"{tol} + {entry['l1_allowance']:.3f}) at gamma_m t = {t_k * gm:g}")
            if fp2d_snapshots is not None:
                entry["l1_fp2d_langevin"] = _l1(hist, fp2d_snapshots[k])
        key = round(t_k * gm, 12)
        if key in tomo_fields:
            ref_shift = radial_to_cartesian(
                rad_by_time[round(t_k + 0.5 * window, 15)], tomo_fields[key].grid)
            entry["l1_radial_tomo"] = _l1(ref_shift, tomo_fields[key])
        cross_route.append(entry)

    # transient matrix (gamma_m t columns, radius rows) from the radial route
    n_r = num["n_r"]
    r_axis = np.linspace(0.0, r_extent * 0.98, n_r)
    matrix = np.empty((n_r, len(times)))
    for k, f in enumerate(radial_snapshots):
        matrix[:, k] = np.interp(r_axis, f.grid.rs, f.values, right=0.0)
    _write_matrix(out_dir / "transient_matrix.csv", "gm_t", times_gm,
                  r_axis, matrix)
    manifest.add_output("transient_matrix.csv")

    for k in range(len(times)):
        oio.psd_to_csv(radial_snapshots[k], out_dir / f"psd_radial_{k}.csv")
        manifest.add_output(f"psd_radial_{k}.csv")
    if fp2d_snapshots is not None:
        oio.psd_to_csv(fp2d_snapshots[-1], out_dir / "psd_fp2d_final.csv")
        manifest.add_output("psd_fp2d_final.csv")
    if langevin_points is not None:
        hist = histogram_field(langevin_points[-1], comparison_grids[-1])
        oio.psd_to_csv(hist, out_dir / "psd_langevin_final.csv")
        manifest.add_output("psd_langevin_final.csv")

    keys = ["gm_t", "l1_radial_fp2d", "l1_radial_langevin", "l1_allowance",
            "l1_fp2d_langevin", "l1_radial_tomo"]
    lines = [",".join(keys)]
    for entry in cross_route:
        lines.append(",".join(_fmt(entry[k]) if k in entry else "" for k in keys))
    (out_dir / "cross_route.csv").write_text("\n".join(lines) + "\n")
    manifest.add_output("cross_route.csv")
    manifest.finalize()

    return SwitchResult(snapshot_times_gm=times_gm,
                        radial_snapshots=radial_snapshots,
                        fp2d_snapshots=fp2d_snapshots,
                        langevin_points=langevin_points,
                        tomo_fields=tomo_fields, cross_route=cross_route,
                        delta0=delta0, gamma_ba=gamma_ba, ring_radius=ring,
                        eff_post=eff_post, fp_diagnostics=fp_diag,
                        out_dir=out_dir, comparison_grids=comparison_grids)


# ---------------------------------------------------------------------------
# plain FP evolution


@dataclass
class FpEvolveResult:
    result: EvolveResult
    spec: PotentialSpec
    out_dir: Path


def run_fp_evolve(cfg) -> FpEvolveResult:
    dev = device_from_config(cfg)
    num = cfg["numerics"]
    out_dir = Path(cfg["output_dir"])
    manifest = RunManifest(out_dir, cfg)
    manifest.start()

    drive = cfg["drive"]
    if any(drive.get(m) is not None
           for m in ("amplitude", "gamma_ba_norm", "calibrate_targets",
                     "photon_number")):
        if drive.get("photon_number") is not None:
            eff = effective_params(dev, DriveParams(
                d=drive["d"], photon_number=drive["photon_number"]))
            eff = eff.without_frequency_pull()
        else:
            amplitude, _ = resolve_drive_amplitude(dev, cfg, drive["d"])
            eff = _dynamics_eff(dev, drive["d"], amplitude)
    else:
        eff = _dynamics_eff(dev, drive["d"], 0.0)
    spec = PotentialSpec.from_effective(eff)

    ring = spec.ring_radius
    extent = num["grid_extent"] or max(1.8 * ring, 4.5)
    t_final = num["t_final_gm"] / dev.gamma_m
    snaps = [t / dev.gamma_m for t in (num["snapshot_times_gm"] or [])]

    if num["radial"]:
        grid = RadialGrid.from_rmax(extent, num["radial_cells"] or 800)
    else:
        grid = CartesianGrid.centered(extent, num["grid_n"])
    kind = num["initial_kind"]
    if kind == "thermal":
        init = gaussian_field(grid, 1.0)
    elif kind == "gaussian":
        init = gaussian_field(grid, num["initial_width"])
    else:
        init = steady_state(spec, grid)

    runner = radial_evolve if num["radial"] else evolve
    res = runner(init, spec, t_final, dt=num["fp_dt"], snapshot_times=snaps)
    oio.psd_to_csv(res.final, out_dir / "psd_final.csv")
    manifest.add_output("psd_final.csv")
    for i, f in enumerate(res.snapshots):
        oio.psd_to_csv(f, out_dir / f"psd_snapshot_{i}.csv")
        manifest.add_output(f"psd_snapshot_{i}.csv")
    manifest.finalize()
    return FpEvolveResult(result=res, spec=spec, out_dir=out_dir)
