"""Run manifests: resolved config, toolkit version, wall clock, output checksums.

The manifest is written once when a run starts (status=running) and
rewritten when it finishes, so an interrupted run leaves evidence.  The
resolved configuration is embedded verbatim; re-running it reproduces
every listed output byte for byte.
"""

from __future__ import annotations

import hashlib
import time
from pathlib import Path

from . import __version__
from .config import dump_config


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest:
    def __init__(self, out_dir, cfg: dict):
        self.out_dir = Path(out_dir)
        self.cfg = cfg
        self.path = self.out_dir / "manifest.txt"
        self._t0 = time.monotonic()
        self._outputs: list[str] = []

    def start(self):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self._write(status="running", elapsed=None)

    def add_output(self, path):
        rel = Path(path).name
        if rel not in self._outputs:
            self._outputs.append(rel)

    def finalize(self):
        self._write(status="complete", elapsed=time.monotonic() - self._t0)

    def _write(self, status, elapsed):
        lines = [
            "ompsd-manifest v1",
            f"toolkit_version={__version__}",
            f"status={status}",
        ]
        if elapsed is not None:
            lines.append(f"wall_clock_s={elapsed:.3f}")
        lines.append("")
        lines.append("[config]")
        lines.extend(dump_config(self.cfg).rstrip("\n").splitlines())
        lines.append("")
        lines.append("[outputs]")
        for name in sorted(self._outputs):
            p = self.out_dir / name
            digest = _sha256(p) if p.exists() else "missing"
            lines.append(f"{name} sha256={digest}")
        self.path.write_text("\n".join(lines) + "\n")
