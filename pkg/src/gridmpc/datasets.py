"""Dataset generators and the two whitespace file formats.

Point files carry a "d n delta" header, graph files a "d c n" header; both
are followed by one integer row per point (graph rows may append payload
words after the coordinates).  Generators are deterministic per seed and
never emit duplicate rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

KINDS = ("uniform", "clustered", "lattice-path", "lattice-two-clusters")

# bounded rejection: refuse instead of looping forever on infeasible asks
MAX_REJECT_ROUNDS = 64


@dataclass
class Dataset:
    kind: str
    d: int
    delta: int
    seed: int
    points: np.ndarray = field(repr=False)
    # integer grids guarantee pairwise L2 gaps >= 1, which keeps generated
    # instances clear of the real-valued thresholds used downstream
    min_margin: float = 1.0

    @property
    def n(self):
        return len(self.points)


def _dedup(rows):
    """Drop duplicate rows, keeping first occurrences in order."""
    _, idx = np.unique(rows, axis=0, return_index=True)
    return rows[np.sort(idx)]


def _fill_distinct(draw, n, rounds=MAX_REJECT_ROUNDS):
    """Accumulate draws until n distinct rows exist, bounded rejection."""
    rows = _dedup(draw(n))
    for _ in range(rounds):
        if len(rows) >= n:
            return rows[:n]
        rows = _dedup(np.vstack([rows, draw(n - len(rows))]))
    raise ValueError(
        f"could not draw {n} distinct points after {rounds} rejection rounds")


def _uniform(rng, n, d, delta):
    if (delta + 1) ** d < n:
        raise ValueError(f"grid [0,{delta}]^{d} holds fewer than {n} points")
    return _fill_distinct(
        lambda k: rng.integers(0, delta + 1, size=(k, d), dtype=np.int64), n)


def _clustered(rng, n, d, delta):
    """Gaussian blobs snapped to the integer grid, rejection-filled."""
    k = max(1, n // 100)
    centers = rng.uniform(0, delta, size=(k, d))
    sigma = max(1.0, delta / 50)

    def draw(m):
        lab = rng.integers(0, k, size=m)
        pts = rng.normal(centers[lab], sigma)
        return np.clip(np.rint(pts), 0, delta).astype(np.int64)

    return _fill_distinct(draw, n)


def _lattice_path(n, d):
    pts = np.zeros((n, d), dtype=np.int64)
    pts[:, 0] = np.arange(n)
    return pts


def _lattice_block(n, d, origin):
    """n lattice points packed into a near-cubic box at origin."""
    side = max(1, math.ceil(n ** (1 / d)))
    axes = [np.arange(side)] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    return grid[:n] + np.asarray(origin, dtype=np.int64)


def _lattice_two_clusters(n, d, gap):
    a = _lattice_block(n - n // 2, d, [0] * d)
    side = int(a[:, 0].max()) + 1
    b = _lattice_block(n // 2, d, [side + gap] + [0] * (d - 1))
    return np.vstack([a, b])


def generate(kind, d, n, delta, seed, *, gap=4) -> Dataset:
    """Deterministic dataset of n distinct integer points in [0, delta]^d.

    gap only applies to lattice-two-clusters: the axis-0 spacing between
    the blocks, so any edge rule with reach < gap sees two components.
    """
    if d < 1 or n < 1 or delta < 1:
        raise ValueError("d, n and delta must be positive")
    rng = np.random.default_rng(seed)
    if kind == "uniform":
        pts = _uniform(rng, n, d, delta)
    elif kind == "clustered":
        pts = _clustered(rng, n, d, delta)
    elif kind == "lattice-path":
        pts = _lattice_path(n, d)
    elif kind == "lattice-two-clusters":
        if gap < 1:
            raise ValueError("gap must be positive")
        pts = _lattice_two_clusters(n, d, gap)
    else:
        raise ValueError(f"unknown dataset kind {kind!r}; known: {KINDS}")
    if int(pts.max()) > delta:
        raise ValueError(f"lattice construction for n={n} exceeds delta={delta}")
    return Dataset(kind=kind, d=d, delta=delta, seed=seed, points=pts)


def write_points(path, dataset: Dataset):
    with open(path, "w") as fh:
        fh.write(f"{dataset.d} {dataset.n} {dataset.delta}\n")
        for row in dataset.points:
            fh.write(" ".join(str(int(x)) for x in row) + "\n")


def load_points(path) -> Dataset:
    with open(path) as fh:
        d, n, delta = (int(x) for x in fh.readline().split())
        pts = np.loadtxt(fh, dtype=np.int64, ndmin=2)
    if pts.shape != (n, d):
        raise ValueError(f"{path}: header promises {(n, d)}, rows give {pts.shape}")
    return Dataset(kind="file", d=d, delta=delta, seed=-1, points=pts)


def write_graph(path, c, coords, payload=None):
    coords = np.asarray(coords)
    with open(path, "w") as fh:
        fh.write(f"{coords.shape[1]} {c} {len(coords)}\n")
        for i, row in enumerate(coords):
            words = [str(int(x)) for x in row]
            if payload is not None:
                words += [str(int(x)) for x in np.atleast_1d(payload[i])]
            fh.write(" ".join(words) + "\n")


def load_graph(path):
    """Returns (d, c, coords, payload-or-None); extra row words are payload."""
    with open(path) as fh:
        d, c, n = (int(x) for x in fh.readline().split())
        rows = np.loadtxt(fh, dtype=np.int64, ndmin=2)
    if len(rows) != n or rows.shape[1] < d:
        raise ValueError(f"{path}: header promises {n} rows of >= {d} words")
    payload = rows[:, d:] if rows.shape[1] > d else None
    return d, c, rows[:, :d], payload
