import numpy as np
import pytest


def fmt(x):
    return format(float(x), ".17g")


def write_matrix_csv(path, axis_name, axis, r, values):
    lines = [f"# ompsd-matrix v1 axis={axis_name}"]
    lines.append(",".join(["0"] + [fmt(a) for a in axis]))
    for i, ri in enumerate(r):
        lines.append(",".join([fmt(ri)] + [fmt(v) for v in values[i]]))
    path.write_text("\n".join(lines) + "\n")


def write_psd_csv(path, x0, y0, h, values, time=0.0):
    nx, ny = values.shape
    lines = ["# ompsd-psd v1", "# kind=cartesian",
             f"# nx={nx} ny={ny} x0={fmt(x0)} y0={fmt(y0)} h={fmt(h)}",
             f"# time={fmt(time)}", "x,y,p"]
    for j in range(ny):
        for i in range(nx):
            lines.append(f"{fmt(x0 + i * h)},{fmt(y0 + j * h)},{fmt(values[i, j])}")
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def sweep_csv(tmp_path):
    # dome-shaped analogue of the steady-sweep output
    rng = np.random.default_rng(3)
    d = np.linspace(0.4, 1.1, 24)
    r = np.linspace(0.0, 6.0, 48)
    ring = np.where((d > 0.55) & (d < 0.95),
                    4.0 * np.sin(np.pi * (d - 0.55) / 0.4), 0.0)
    vals = np.exp(-0.5 * ((r[:, None] - ring[None, :]) / 0.6) ** 2)
    vals += 1e-3 * rng.random(vals.shape)
    path = tmp_path / "sweep_matrix.csv"
    write_matrix_csv(path, "d", d, r, vals)
    return path


@pytest.fixture
def transient_csv(tmp_path):
    t = np.geomspace(1e-3, 3.0, 12)
    r = np.linspace(0.0, 10.0, 64)
    width = 0.6 * np.exp(t) + 0.4
    vals = np.exp(-((r[:, None]) ** 2) / width[None, :] ** 2)
    path = tmp_path / "transient_matrix.csv"
    write_matrix_csv(path, "gm_t", t, r, vals)
    return path


@pytest.fixture
def dwell_csvs(tmp_path):
    xs = np.linspace(-2.5, 2.5, 40)
    h = xs[1] - xs[0]
    paths = []
    for k, spread in enumerate((0.3, 0.8, 1.8, 3.1)):
        xx, yy = np.meshgrid(xs, xs, indexing="ij")
        rr = np.hypot(xx, yy)
        th = np.arctan2(yy, xx)
        vals = np.exp(-0.5 * ((rr - 1.4) / 0.4) ** 2 - 0.5 * (th / spread) ** 2)
        p = tmp_path / f"psd_dwell_cond_{k}.csv"
        write_psd_csv(p, xs[0], xs[0], h, vals, time=0.05 * (k + 1))
        paths.append(p)
    return paths
