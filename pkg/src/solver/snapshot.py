"""Plain-text film state snapshots.

Header line ``shkadov-state v1 n=<n> dx=<dx> delta=<delta> t=<t>`` followed by
n lines ``<h> <q>``. Floats are written with ``repr`` so they read back
bit-identically.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from solver.shkadov import FilmState

SNAPSHOT_MAGIC = "shkadov-state"
SNAPSHOT_VERSION = "v1"


class SnapshotFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Snapshot:
    h: np.ndarray
    q: np.ndarray
    dx: float
    delta: float
    t: float
    path: Path | None = None

    @property
    def n(self) -> int:
        return self.h.size

    def to_state(self) -> FilmState:
        """Fresh solver state at t = 0 with no stepping history."""
        return FilmState(h=self.h.copy(), q=self.q.copy())


def format_snapshot(h: np.ndarray, q: np.ndarray, dx: float, delta: float, t: float) -> str:
    lines = [
        f"{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION} n={h.size} dx={float(dx)!r} "
        f"delta={float(delta)!r} t={float(t)!r}"
    ]
    lines.extend(f"{float(hi)!r} {float(qi)!r}" for hi, qi in zip(h, q, strict=True))
    return "\n".join(lines) + "\n"


def write_snapshot(
    path: str | Path, state: FilmState, dx: float, delta: float, t: float | None = None
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = format_snapshot(state.h, state.q, dx, delta, state.t if t is None else t)
    path.write_text(text, encoding="utf-8")
    return path


def parse_snapshot(text: str, path: Path | None = None) -> Snapshot:
    name = str(path) if path else "<snapshot>"
    lines = text.splitlines()
    if not lines:
        raise SnapshotFormatError(f"{name}: empty snapshot")

    tokens = lines[0].split()
    if len(tokens) != 6 or tokens[0] != SNAPSHOT_MAGIC:
        raise SnapshotFormatError(f"{name}: malformed header {lines[0]!r}")
    if tokens[1] != SNAPSHOT_VERSION:
        raise SnapshotFormatError(f"{name}: unsupported snapshot version {tokens[1]!r}")

    try:
        header = dict(token.split("=", 1) for token in tokens[2:])
        n = int(header["n"])
        dx = float(header["dx"])
        delta = float(header["delta"])
        t = float(header["t"])
    except (KeyError, ValueError) as e:
        raise SnapshotFormatError(f"{name}: malformed header fields ({e!s})") from e

    body = lines[1:]
    if len(body) != n:
        raise SnapshotFormatError(f"{name}: expected {n} data lines, found {len(body)}")
    try:
        values = np.array([[float(v) for v in line.split()] for line in body])
    except ValueError as e:
        raise SnapshotFormatError(f"{name}: non-numeric data ({e!s})") from e
    if values.shape != (n, 2):
        raise SnapshotFormatError(f"{name}: each data line must hold exactly 2 values")

    return Snapshot(h=values[:, 0].copy(), q=values[:, 1].copy(), dx=dx, delta=delta, t=t, path=path)


def read_snapshot(path: str | Path) -> Snapshot:
    path = Path(path)
    return parse_snapshot(path.read_text(encoding="utf-8"), path)
