"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``.  Paper-scale quantities
are not directly reproducible (unknown drive attenuation and detector
gain), so the checks are oracle- and property-based, with paper-anchored
qualitative structure; every tolerance is pinned here.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from ompsd import EffectiveParams, fokker_planck as fp, langevin as lv
from ompsd import tomography as tomo
from ompsd.config import resolve_config
from ompsd.experiments import (
    expected_histogram_l1,
    run_dwell,
    run_steady_sweep,
    run_switch,
    window_quadratures,
)

GM = 1.0                       # normalized mechanical damping rate
THETA = 0.5 * GM               # diffusion constant in delta_m units
LN_2PI = math.log(2.0 * math.pi)

# every Fokker-Planck evolution executed by this suite registers its
# conservation diagnostics here; criterion 8 audits the lot
FP_DIAGNOSTICS = []


def _register(tag, mass_drift, min_value):
    FP_DIAGNOSTICS.append({"tag": tag, "mass_drift": mass_drift,
                           "min_value": min_value})


def _report(num, ok, detail):
    print(f"\nACCEPTANCE {num} [{'PASS' if ok else 'FAIL'}] {detail}")
    assert ok, f"criterion {num}: {detail}"


def _eff(gamma0, gamma2):
    return EffectiveParams(0.0, gamma0, 0.0, gamma2, gamma0 - GM, THETA)


# ---------------------------------------------------------------------------


def test_criterion_1_analytic_steady_state():
    """Evolve from a thermal Gaussian converges to the Gibbs state,
    L1 <= 1e-2 on a 128x128 grid, within 5 minutes per parameter set."""
    cases = [
        ("cooling gamma0=3gm", fp.PotentialSpec(3.0 * GM, 0.0, THETA), 4.5, 4.0),
        ("thermal gamma0=gm", fp.PotentialSpec(GM, 0.0, THETA), 4.5, 2.0),
        # self-excited set from the detuning-sweep calculation:
        # gamma2 * delta_m^2 / gamma_m = 2.0e-4, ring at ~70.7 delta_m
        ("SEO gamma0=-gm", fp.PotentialSpec(-GM, 2.0e-4 * GM, THETA),
         1.05 * math.sqrt(1.0 / 2.0e-4), 2600.0),
    ]
    details = []
    for label, spec, half_width, t_cap in cases:
        grid = fp.CartesianGrid.centered(half_width, 128)
        target = fp.steady_state(spec, grid)
        field = fp.gaussian_field(grid, 1.0)
        start = time.monotonic()
        t, l1 = 0.0, math.inf
        while t < t_cap:
            span = min(50.0, t_cap - t)
            res = fp.evolve(field, spec, span)
            _register(f"c1 {label}", res.mass_drift, res.min_value)
            field = res.final
            t += span
            l1 = float(np.abs(field.values - target.values).sum() * grid.cell_area)
            if l1 < 9.5e-3:
                break
        elapsed = time.monotonic() - start
        details.append(f"{label}: L1={l1:.2e} at gm*t={t:g} ({elapsed:.0f}s)")
        assert l1 <= 1e-2, details[-1]
        assert elapsed <= 300.0, f"{label} exceeded the 5-minute budget"
    _report(1, True, "; ".join(details))


def test_criterion_2_langevin_fp_equivalence(tmp_path):
    """Ensemble histograms (n=1e4) match FP snapshots at gm*t in
    {0.03, 0.3, 3} within L1 <= 0.05 + statistical allowance."""
    cfg = resolve_config({
        "scenario": "switch",
        "seed": 2024,
        "output_dir": str(tmp_path / "switch"),
        "device": {"gamma2_norm": 0.02},
        "drive": {"d_cool": -0.475, "gamma_ba_norm": 2.0},
        "numerics": {
            "snapshot_times_gm": [0.03, 0.3, 3.0],
            "n_switch_trajectories": 10000,
            "radial_cells_per_width": 10,
            "grid_n": 128,
            "comparison_grid_n": 64,
            "window_periods": 25,
            "detector_noise": 0.0,
        },
    })
    start = time.monotonic()
    res = run_switch(cfg)
    elapsed = time.monotonic() - start
    for route, diag in res.fp_diagnostics.items():
        _register(f"c2 {route}", diag["mass_drift"], diag["min_value"])
    details = []
    ok = True
    for entry in res.cross_route:
        bound = 0.05 + entry["l1_allowance"]
        details.append(f"gm*t={entry['gm_t']:g}: L1={entry['l1_radial_langevin']:.3f}"
                       f" <= 0.05+{entry['l1_allowance']:.3f}")
        ok &= entry["l1_radial_langevin"] <= bound
    ok &= elapsed <= 600.0
    _report(2, ok, "; ".join(details) + f" ({elapsed:.0f}s)")


def test_criterion_3_width_formula_validation():
    """Radial FP (linearized, as the formula assumes) matches the analytic
    post-switch width within 2% while delta_H <= 0.3 A_r0, for
    gamma_ba/gamma_m in {2, 5, 10}; series limit agrees to 1e-6."""
    details = []
    for gba in (2.0 * GM, 5.0 * GM, 10.0 * GM):
        ring = math.sqrt((gba - GM) / (2.0e-4 * GM))   # nominal sweep gamma2
        delta0 = math.sqrt(2.0 * THETA / (gba + GM))
        spec = fp.PotentialSpec(GM - gba, 0.0, THETA)
        # time at which delta_H reaches 0.3 A_r0
        target = (0.3 * ring) ** 2 * (gba + GM) / (2.0 * THETA)
        t_end = math.log((target - 1.0) * (gba - GM) / (2.0 * gba) + 1.0) \
            / (2.0 * (gba - GM))
        grid = fp.RadialGrid.from_rmax(ring, int(math.ceil(ring / (delta0 / 12))))
        field = fp.gaussian_field(grid, delta0)
        times = np.linspace(t_end / 12, t_end, 12)
        res = fp.radial_evolve(field, spec, t_end, snapshot_times=list(times))
        _register(f"c3 gba={gba}", res.mass_drift, res.min_value)
        worst = 0.0
        for snap in res.snapshots:
            width = math.sqrt(fp.moments(snap)["mean_square_radius"])
            oracle = fp.gaussian_width_oracle(THETA, gba, GM, snap.time_label)
            worst = max(worst, abs(width / oracle - 1.0))
        details.append(f"gba={gba:g}: worst width err {worst:.2%}")
        assert worst <= 0.02, details[-1]

    # removable-singularity handling
    worst_series = 0.0
    for sign in (+1, -1):
        gba = GM * (1.0 + sign * 1e-4)
        for t in (1e-3, 5e-3, 0.009):
            diff = gba - GM
            base = 2.0 * THETA / (gba + GM)
            exact = math.sqrt(base * (1 + 2 * gba * math.expm1(2 * diff * t) / diff))
            series = math.sqrt(base * (1 + 4 * gba * t))
            worst_series = max(worst_series, abs(series / exact - 1.0))
            assert fp.gaussian_width_oracle(THETA, gba, GM, t) == \
                pytest.approx(series, rel=1e-14)
    assert worst_series <= 1e-6
    _report(3, True, "; ".join(details) + f"; series limit {worst_series:.1e}")


def test_criterion_4_ou_variance_tracking():
    """With gamma2 = 0 the evolved variance follows the analytic law
    within 0.5% at 10 checkpoints."""
    gamma0, var0 = 2.0 * GM, 1.0
    spec = fp.PotentialSpec(gamma0, 0.0, THETA)
    grid = fp.CartesianGrid.centered(4.5, 180)
    field = fp.gaussian_field(grid, math.sqrt(2.0 * var0))
    checkpoints = [0.125 * k for k in range(1, 11)]
    res = fp.evolve(field, spec, checkpoints[-1], snapshot_times=checkpoints)
    _register("c4 OU", res.mass_drift, res.min_value)
    worst = 0.0
    for snap in res.snapshots:
        var = fp.moments(snap)["mean_square_radius"] / 2.0
        decay = math.exp(-2.0 * gamma0 * snap.time_label)
        exact = var0 * decay + (THETA / gamma0) * (1.0 - decay)
        worst = max(worst, abs(var / exact - 1.0))
    _report(4, worst <= 5e-3,
            f"worst variance error {worst:.2%} over 10 checkpoints (tol 0.5%)")


def test_criterion_5_tomography_round_trip():
    """1e5 synthesized windows from the stationary self-excited state
    reconstruct the analytic W: L1 <= 0.1 (filtered back-projection),
    L1 <= 0.08 (direct histogram); detector noise broadens the ring."""
    eff = _eff(-2.0 * GM, 0.5 * GM)          # ring 2.0, radial width ~0.35
    n = 100000
    ens = lv.sample_steady_state(eff, n, seed=1001)
    carrier, fs = 2 * math.pi * 5000.0, 40000.0
    window = 25 / 5000.0
    paths = np.repeat(ens.points[:, None, :], 2, axis=1)
    clean, _ = window_quadratures(paths, window, 0.0, 1, carrier, fs, window)
    noisy, _ = window_quadratures(paths, window, 0.0, 1, carrier, fs, window,
                                  noise_sigma=0.5, seed=1001,
                                  offsets=ens.stream_offsets, noise_epoch=7)
    clean, noisy = clean[:, 0, :], noisy[:, 0, :]
    # spot-check the batched path against the public single-trace route
    trace = lv.synthesize_signal(paths[0], window, carrier, fs)
    ref = tomo.demodulate(trace, window)
    assert np.allclose(ref.points[0], clean[0], atol=1e-12)

    grid = fp.CartesianGrid.centered(3.3, 40)
    analytic = fp.steady_state(fp.PotentialSpec.from_effective(eff), grid)

    def reconstruct(pts):
        qs = tomo.QuadratureSamples(pts, np.zeros(len(pts)))
        direct = tomo.direct_psd(qs, grid)
        sino = tomo.sinogram(qs, n_angles=64, n_bins=128, x_range=3.3)
        fbp = tomo.inverse_radon(sino, grid, cutoff=0.8)
        return direct, fbp

    direct_c, fbp_c = reconstruct(clean)
    l1_direct = tomo.compare_psd(analytic, direct_c)["l1"]
    l1_fbp = tomo.compare_psd(analytic, fbp_c)["l1"]
    direct_n, fbp_n = reconstruct(noisy)
    w_direct_c = fp.moments(direct_c)["radial_width"]
    w_direct_n = fp.moments(direct_n)["radial_width"]
    w_fbp_c = fp.moments(fbp_c)["radial_width"]
    w_fbp_n = fp.moments(fbp_n)["radial_width"]
    ok = (l1_fbp <= 0.1 and l1_direct <= 0.08
          and w_direct_n > w_direct_c and w_fbp_n > w_fbp_c)
    _report(5, ok,
            f"L1 fbp={l1_fbp:.3f} (<=0.1), direct={l1_direct:.3f} (<=0.08); "
            f"noise broadening direct {w_direct_c:.4f}->{w_direct_n:.4f}, "
            f"fbp {w_fbp_c:.4f}->{w_fbp_n:.4f}")


def test_criterion_6_sweep_shape(tmp_path):
    """After calibrating to thresholds (0.474, 1.06) the steady sweep shows
    zero ring radius outside the fitted window, one interior maximum, and
    identical upward/downward sweeps."""
    base = {
        "scenario": "steady_sweep",
        "seed": 606,
        "drive": {"calibrate_targets": [0.474, 1.06]},
        "numerics": {
            "windows_per_point": 2500,
            "n_trajectories": 50,
            "window_periods": 25,
            "tomography_stride": 1,
        },
    }
    # the fitted window under the stock device lands away from the targets
    # (single-amplitude fit); the sweep range brackets the *fitted* window
    from ompsd.config import device_from_config
    from ompsd.model import calibrate_drive
    cal = calibrate_drive(device_from_config(resolve_config(base)), (0.474, 1.06))
    lo, hi = cal.roots
    width = hi - lo
    sweep_range = {"d_start": round(lo - 0.3 * width, 3),
                   "d_stop": round(hi + 0.3 * width, 3),
                   "d_step": round(width / 30, 4)}

    up_cfg = resolve_config({**base, "output_dir": str(tmp_path / "up"),
                             "numerics": {**base["numerics"], **sweep_range}})
    up = run_steady_sweep(up_cfg)
    down_cfg = resolve_config({
        **base, "output_dir": str(tmp_path / "down"),
        "numerics": {**base["numerics"], **sweep_range,
                     "d_start": sweep_range["d_stop"],
                     "d_stop": sweep_range["d_start"]}})
    down = run_steady_sweep(down_cfg)

    r_lo, r_hi = up.thresholds
    inside = (up.d_values > r_lo) & (up.d_values < r_hi)
    ring = up.ring_radius
    zero_outside = bool(np.all(ring[~inside] == 0.0))
    positive_inside = bool(np.all(ring[inside] > 0.0))
    # single interior maximum: radius rises then falls
    k = int(np.argmax(ring))
    unimodal = bool(np.all(np.diff(ring[: k + 1]) >= 0)
                    and np.all(np.diff(ring[k:]) <= 0)) and 0 < k < len(ring) - 1
    # the density matrix itself peaks off-axis inside the window only
    col_peak_radius = up.r_values[np.argmax(up.analytic_matrix, axis=0)]
    matrix_matches = bool(np.allclose(col_peak_radius, ring,
                                      atol=up.r_values[1] - up.r_values[0]))
    updown = bool(
        np.array_equal(up.analytic_matrix, down.analytic_matrix[:, ::-1])
        and np.array_equal(up.tomo_matrix, down.tomo_matrix[:, ::-1]))
    ok = zero_outside and positive_inside and unimodal and matrix_matches and updown
    _report(6, ok,
            f"fitted window=({r_lo:.3f},{r_hi:.3f}) rms residual={cal.residual:.3f}; "
            f"zero outside={zero_outside}, unimodal={unimodal}, "
            f"matrix argmax consistent={matrix_matches}, up==down={updown}")


def test_criterion_7_dwell_phase_diffusion(tmp_path):
    """Angular entropy of conditioned PSDs grows strictly over
    gm*t_d in {0.12, 1.2, 7.5, 12} and reaches 0.98 ln(2 pi) at 12."""
    cfg = resolve_config({
        "scenario": "dwell",
        "seed": 707,
        "output_dir": str(tmp_path / "dwell"),
        # ring at 1.4 delta_m: phase randomization within the quoted dwell
        # axis requires a near-thermal limit cycle (see decisions ledger)
        "device": {"gamma2_norm": 0.5102040816326531},
        "drive": {"d": 0.7, "gamma_ba_norm": 2.0},
        "numerics": {
            "n_pairs": 24000,
            "detector_noise": 0.0,
            "window_periods": 100,
            "phase_tol": math.pi / 6,
            "radius_tol_ar0": 0.35,
            "comparison_grid_n": 64,
            "grid_n": 96,
            "angular_bins": 36,
        },
    })
    res = run_dwell(cfg)
    _register("c7 dwell FP", res.fp_diagnostics["mass_drift"],
              res.fp_diagnostics["min_value"])
    h = res.entropies
    strictly_increasing = all(b > a for a, b in zip(h, h[1:]))
    fp_increasing = all(b > a for a, b in zip(res.fp_entropies, res.fp_entropies[1:]))
    reached = h[-1] >= 0.98 * LN_2PI
    ok = strictly_increasing and reached and fp_increasing
    _report(7, ok,
            "entropies " + ", ".join(f"{v:.3f}" for v in h)
            + f" (n_cond={res.n_conditioned[0]}); need final >= {0.98 * LN_2PI:.3f};"
            + " FP route " + ", ".join(f"{v:.3f}" for v in res.fp_entropies))


def test_criterion_8_conservation_and_positivity():
    """Every FP evolution in this suite conserved mass to 1e-6 and stayed
    non-negative."""
    assert len(FP_DIAGNOSTICS) >= 6, "earlier criteria must register their runs"
    worst_drift = max(d["mass_drift"] for d in FP_DIAGNOSTICS)
    worst_min = min(d["min_value"] for d in FP_DIAGNOSTICS)
    ok = worst_drift <= 1e-6 and worst_min >= 0.0
    _report(8, ok, f"{len(FP_DIAGNOSTICS)} runs: max |mass drift| = "
                   f"{worst_drift:.2e} (<=1e-6), min density = {worst_min:.2e} (>=0)")


def test_criterion_9_determinism(tmp_path):
    """Two switch runs with identical config and seed produce byte-identical
    CSVs, and the primary suite runs without the secondary component."""
    def cfg(out):
        return resolve_config({
            "scenario": "switch",
            "seed": 909,
            "output_dir": str(out),
            "device": {"gamma2_norm": 0.02},
            "drive": {"d_cool": -0.475, "gamma_ba_norm": 2.0},
            "numerics": {
                "snapshot_times_gm": [0.05, 0.5, 2.0],
                "n_switch_trajectories": 6000,
                "radial_cells_per_width": 8,
                "grid_n": 96,
                "comparison_grid_n": 64,
                "window_periods": 25,
                "detector_noise": 0.5,
            },
        })

    run_switch(cfg(tmp_path / "a"))
    run_switch(cfg(tmp_path / "b"))
    names = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    identical = bool(names) and all(
        (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
        for n in names)

    import sys

    import ompsd  # noqa: F401  (already imported; assert no secondary leaked in)
    no_secondary = "ompsd_plots" not in sys.modules
    ok = identical and no_secondary
    _report(9, ok, f"{len(names)} CSVs byte-identical across reruns; "
                   f"secondary component not imported by the primary suite")
