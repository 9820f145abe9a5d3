"""Stochastic integration of the slow-amplitude equation and raw-signal synthesis.

Trajectories carry their own counter-based random streams keyed by
(master seed, trajectory offset), so ensembles are bit-reproducible no
matter how the work is chunked or parallelized.  Successive integration
calls on the same ensemble advance an epoch counter that moves each stream
to a fresh counter block instead of reusing draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import NumericsError
from .model import EffectiveParams

_INIT_STREAM_OFFSET = 0xFFFFFFFFFFFFFFFF  # reserved stream for initial sampling


def trajectory_rng(seed: int, offset: int, epoch: int = 0) -> np.random.Generator:
    """Independent counter-based stream for one trajectory and epoch."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, offset & 0xFFFFFFFFFFFFFFFF],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=epoch << 128))


@dataclass
class EnsembleState:
    """A set of phase-space points with reproducible per-trajectory streams."""

    points: np.ndarray            # (n, 2) normalized amplitudes (delta_m units)
    time: float
    seed: int
    stream_offsets: np.ndarray    # (n,) per-trajectory stream identifiers
    epoch: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError("points must have shape (n, 2)")
        self.stream_offsets = np.asarray(self.stream_offsets, dtype=np.uint64)
        if self.stream_offsets.shape != (self.points.shape[0],):
            raise ValueError("one stream offset per trajectory required")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("points must be finite")

    @property
    def n(self):
        return self.points.shape[0]

    def radii(self):
        return np.hypot(self.points[:, 0], self.points[:, 1])

    def phases(self):
        return np.arctan2(self.points[:, 1], self.points[:, 0])


@dataclass
class SignalTrace:
    """Uniformly sampled displacement record in delta_m units."""

    samples: np.ndarray
    sample_rate: float            # Hz
    carrier: float                # rad/s
    t0: float = 0.0
    noise_sigma: float = 0.0
    seed_info: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.sample_rate <= 2.0 * self.carrier / (2.0 * math.pi):
            raise ValueError(
                f"sample_rate {self.sample_rate} Hz violates Nyquist for "
                f"carrier {self.carrier / (2.0 * math.pi)} Hz")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")

    @property
    def n(self):
        return self.samples.size

    def times(self):
        return self.t0 + np.arange(self.n) / self.sample_rate


def drift(eff: EffectiveParams, p):
    """Deterministic time derivative of the slow amplitude.

    Purely radial, -(gamma0 + gamma2 r^2) * (a_x, a_y), plus the rotation
    -i (omega0 + omega2 r^2) A whenever a frequency pull is enabled.
    Accepts a single point (2,) or a stack (..., 2).
    """
    p = np.asarray(p, dtype=float)
    r2 = p[..., 0] ** 2 + p[..., 1] ** 2
    rad = -(eff.gamma0 + eff.gamma2 * r2)
    out = np.empty_like(p)
    out[..., 0] = rad * p[..., 0]
    out[..., 1] = rad * p[..., 1]
    if eff.omega0 != 0.0 or eff.omega2 != 0.0:
        om = eff.omega0 + eff.omega2 * r2
        out[..., 0] += om * p[..., 1]
        out[..., 1] -= om * p[..., 0]
    return out


def step(eff: EffectiveParams, p, dt, noise_pair):
    """Euler-Maruyama update p + drift dt + sqrt(2 theta dt) * noise."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    amp = math.sqrt(2.0 * eff.theta * dt)
    return np.asarray(p, dtype=float) + drift(eff, p) * dt + amp * np.asarray(noise_pair)


def heun_step(eff: EffectiveParams, p, dt, noise_pair):
    """Stochastic Heun update; same contract as step, used for convergence checks."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    p = np.asarray(p, dtype=float)
    g = math.sqrt(2.0 * eff.theta * dt) * np.asarray(noise_pair)
    f0 = drift(eff, p)
    pred = p + f0 * dt + g
    return p + 0.5 * (f0 + drift(eff, pred)) * dt + g


def stability_dt(eff: EffectiveParams, max_radius=0.0) -> float:
    """Largest allowed step 0.01 / max(|gamma0|, gamma2 r_max^2, gamma_m)."""
    r2 = max_radius * max_radius
    if eff.gamma0 < 0 and eff.gamma2 > 0:
        r2 = max(r2, 2.25 * (-eff.gamma0 / eff.gamma2))  # limit cycle + excursions
    rate = max(abs(eff.gamma0), eff.gamma2 * r2, eff.gamma_m)
    return 0.01 / rate


@dataclass
class SimulationResult:
    final: EnsembleState
    snapshots: list
    paths: np.ndarray | None = None   # (n, steps+1, 2) when path recording is on
    path_dt: float | None = None


def simulate_ensemble(eff: EffectiveParams, init: EnsembleState, t_final, dt,
                      snapshot_times=(), method="euler", record_paths=False,
                      chunk_size=4096, block_steps=512) -> SimulationResult:
    """Integrate every trajectory for a duration t_final from init.time.

    Snapshot times (relative to the start of this call) are landed on
    exactly by adjusting the step within each segment.  Identical
    (seed, parameters, schedule) produce bit-identical ensembles regardless
    of chunking.  Rejects dt above the stability bound computed from the
    current ensemble spread and the limit-cycle radius.

    With ``record_paths`` the result carries every intermediate point
    (meant for short segments feeding signal synthesis); path recording
    requires a snapshot-free uniform schedule so path rows are equally
    spaced by the actual step used.
    """
    if t_final < 0:
        raise ValueError("t_final must be >= 0")
    bound = stability_dt(eff, max_radius=float(init.radii().max(initial=0.0)))
    if dt > bound * (1.0 + 1e-12):
        raise NumericsError(f"dt = {dt:g} exceeds the stability bound {bound:g}")
    if method not in ("euler", "heun"):
        raise ValueError(f"unknown method {method!r}")
    snaps = sorted(float(t) for t in snapshot_times)
    if snaps and (snaps[0] < 0 or snaps[-1] > t_final):
        raise ValueError("snapshot times must lie in [0, t_final]")
    if record_paths and snaps:
        raise ValueError("record_paths does not combine with snapshot times")

    # segment plan shared by all chunks: (n_steps, sub_dt, is_snapshot)
    marks = snaps + ([] if snaps and snaps[-1] == t_final else [t_final])
    plan = []
    t = 0.0
    for tc in marks:
        span = tc - t
        n = int(math.ceil(span / dt - 1e-12)) if span > 0 else 0
        plan.append((n, span / n if n else 0.0, tc in snaps))
        t = tc

    n_traj = init.n
    total_steps = sum(n for n, _, _ in plan)
    final_pts = np.empty_like(init.points)
    snap_pts = [np.empty_like(init.points) for _ in snaps]
    paths = np.empty((n_traj, total_steps + 1, 2)) if record_paths else None
    for lo in range(0, n_traj, chunk_size):
        hi = min(lo + chunk_size, n_traj)
        pts = init.points[lo:hi].copy()
        gens = [trajectory_rng(init.seed, int(off), init.epoch)
                for off in init.stream_offsets[lo:hi]]
        snap_idx = 0
        row = 0
        if record_paths:
            paths[lo:hi, 0] = pts
        for n, sub, is_snap in plan:
            amp = math.sqrt(2.0 * eff.theta * sub) if n else 0.0
            done = 0
            while done < n:
                b = min(block_steps, n - done)
                noise = np.empty((pts.shape[0], b, 2))
                for k, g in enumerate(gens):
                    noise[k] = g.standard_normal((b, 2))
                for s in range(b):
                    if method == "euler":
                        pts += drift(eff, pts) * sub + amp * noise[:, s, :]
                    else:
                        gn = amp * noise[:, s, :]
                        f0 = drift(eff, pts)
                        pred = pts + f0 * sub + gn
                        pts = pts + 0.5 * (f0 + drift(eff, pred)) * sub + gn
                    if record_paths:
                        row += 1
                        paths[lo:hi, row] = pts
                done += b
            if is_snap:
                snap_pts[snap_idx][lo:hi] = pts
                snap_idx += 1
        final_pts[lo:hi] = pts

    final = EnsembleState(final_pts, init.time + t_final, init.seed,
                          init.stream_offsets.copy(), init.epoch + 1)
    snapshots = [EnsembleState(p, init.time + tc, init.seed,
                               init.stream_offsets.copy(), init.epoch + 1)
                 for p, tc in zip(snap_pts, snaps)]
    path_dt = (plan[0][1] if record_paths and total_steps else None)
    return SimulationResult(final=final, snapshots=snapshots,
                            paths=paths, path_dt=path_dt)


def stationary_support_radius(eff: EffectiveParams, log_weight=45.0) -> float:
    """Radius where exp(-H/theta) has dropped by exp(-log_weight) from its peak.

    Exact root of the quartic potential relative to its minimum; covers
    thermal Gaussians, fat near-threshold rings, and sharp limit cycles.
    """
    g0, g2, th = eff.gamma0, eff.gamma2, eff.theta
    if g2 <= 0 and g0 <= 0:
        raise NumericsError("stationary distribution is not normalizable")
    if g2 == 0:
        return math.sqrt(2.0 * log_weight * th / g0)
    h_min = -(g0 * g0) / (4.0 * g2) if g0 < 0 else 0.0
    target = h_min + log_weight * th
    # solve (g2/4) u^2 + (g0/2) u = target for u = r^2, taking the + root
    u = (-0.5 * g0 + math.sqrt(0.25 * g0 * g0 + g2 * target)) * 2.0 / g2
    return math.sqrt(u)


def steady_state_radial_table(eff: EffectiveParams, n_table=8192):
    """Tabulated radius grid and CDF of the stationary radial density r e^(-H/theta)."""
    r_max = stationary_support_radius(eff)
    g0, g2, th = eff.gamma0, eff.gamma2, eff.theta
    r = np.linspace(0.0, r_max, n_table)
    r2 = r * r
    h_val = 0.5 * g0 * r2 + 0.25 * g2 * r2 * r2
    w = r * np.exp(-(h_val - h_val.min()) / th)
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(r))))
    cdf /= cdf[-1]
    return r, cdf


def sample_steady_state(eff: EffectiveParams, n, seed, offset_base=0,
                        stream_epoch=0) -> EnsembleState:
    """Draw n points from the stationary distribution by radial inverse-CDF.

    The angle is uniform; the radius inverts the tabulated CDF of
    r exp(-H(r)/theta).  The returned ensemble carries per-trajectory
    stream offsets offset_base..offset_base+n-1 under the given seed; the
    draws themselves consume a dedicated reserved stream whose counter
    block is selected by ``stream_epoch`` (use distinct epochs for
    independent ensembles under one seed).
    """
    if n <= 0:
        raise ValueError("n must be > 0")
    r_tab, cdf = steady_state_radial_table(eff)
    rng = trajectory_rng(seed, _INIT_STREAM_OFFSET, epoch=stream_epoch)
    u = rng.random(n)
    radii = np.interp(u, cdf, r_tab)
    angles = rng.uniform(0.0, 2.0 * math.pi, n)
    pts = np.column_stack((radii * np.cos(angles), radii * np.sin(angles)))
    return EnsembleState(points=pts, time=0.0, seed=seed,
                         stream_offsets=offset_base + np.arange(n, dtype=np.uint64))


def sample_gaussian_state(n, width, seed, offset_base=0,
                          stream_epoch=0) -> EnsembleState:
    """Isotropic Gaussian ensemble with radial width <A_r^2> = width^2."""
    if n <= 0:
        raise ValueError("n must be > 0")
    if width < 0:
        raise ValueError("width must be >= 0")
    rng = trajectory_rng(seed, _INIT_STREAM_OFFSET, epoch=stream_epoch)
    pts = rng.normal(0.0, width / math.sqrt(2.0), size=(n, 2))
    return EnsembleState(points=pts, time=0.0, seed=seed,
                         stream_offsets=offset_base + np.arange(n, dtype=np.uint64))


def synthesize_signal(traj, dt, carrier, sample_rate, noise_sigma=0.0,
                      rng=None, t0=0.0, seed_info=None) -> SignalTrace:
    """Displacement record x(t) = A_x(t) cos(w t) + A_y(t) sin(w t) + noise.

    ``traj`` holds slow-amplitude points (m, 2) at spacing dt starting at
    t0; amplitudes are interpolated linearly between them.  Detector noise
    is i.i.d. Gaussian with standard deviation noise_sigma per sample.
    Rejects sample rates violating Nyquist for the carrier.
    """
    traj = np.asarray(traj, dtype=float)
    if traj.ndim != 2 or traj.shape[1] != 2 or traj.shape[0] < 2:
        raise ValueError("traj must have shape (m >= 2, 2)")
    if sample_rate <= 2.0 * carrier / (2.0 * math.pi):
        raise NumericsError(
            f"sample_rate {sample_rate} Hz violates Nyquist for carrier "
            f"{carrier / (2.0 * math.pi):g} Hz")
    duration = (traj.shape[0] - 1) * dt
    n = int(math.floor(duration * sample_rate)) + 1
    t = t0 + np.arange(n) / sample_rate
    t_nodes = t0 + np.arange(traj.shape[0]) * dt
    ax = np.interp(t, t_nodes, traj[:, 0])
    ay = np.interp(t, t_nodes, traj[:, 1])
    x = ax * np.cos(carrier * t) + ay * np.sin(carrier * t)
    if noise_sigma > 0.0:
        if rng is None:
            raise ValueError("noise_sigma > 0 requires an rng")
        x = x + rng.normal(0.0, noise_sigma, n)
    return SignalTrace(samples=x, sample_rate=sample_rate, carrier=carrier,
                       t0=t0, noise_sigma=noise_sigma,
                       seed_info=dict(seed_info or {}))
