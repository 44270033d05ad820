"""Points, metrics, server placements and exact k-nearest-server queries.

The domain is the unit square.  Grid placements treat it as a torus, uniform
placements use plain Euclidean distance without wraparound.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree


class Point(NamedTuple):
    x: float
    y: float


class Metric(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    TORUS = "torus"


def distance(a, b, metric=Metric.EUCLIDEAN) -> float:
    dx = abs(a[0] - b[0])
    dy = abs(a[1] - b[1])
    if Metric(metric) is Metric.TORUS:
        dx = min(dx, 1.0 - dx)
        dy = min(dy, 1.0 - dy)
    return math.sqrt(dx * dx + dy * dy)


def distances(points, servers, metric=Metric.EUCLIDEAN) -> np.ndarray:
    """Dense ``(len(points), len(servers))`` distance matrix."""
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    s = np.asarray(servers, dtype=float).reshape(-1, 2)
    d = np.abs(p[:, None, :] - s[None, :, :])
    if Metric(metric) is Metric.TORUS:
        d = np.minimum(d, 1.0 - d)
    return np.sqrt(d[..., 0] ** 2 + d[..., 1] ** 2)


def _sorted_by_distance_then_id(dist, idx):
    order = np.lexsort((idx, dist), axis=-1)
    return np.take_along_axis(dist, order, -1), np.take_along_axis(idx, order, -1)


@dataclass(frozen=True, eq=False)
class ServerLayout:
    """Indexed server positions with their metric and a kd-tree index.

    ``placement`` is ``"grid"``, ``"uniform"`` or ``"custom"``.  Server ids are
    row indices of ``points``.
    """

    points: np.ndarray
    placement: str
    metric: Metric
    side: int | None = None
    seed: object = None
    _tree: cKDTree = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        if pts.size and (pts.min() < 0.0 or pts.max() >= 1.0):
            raise ValueError("server coordinates must lie in [0, 1)")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "metric", Metric(self.metric))
        box = 1.0 if self.metric is Metric.TORUS else None
        object.__setattr__(self, "_tree", cKDTree(pts, boxsize=box))

    @classmethod
    def from_points(cls, points, metric=Metric.EUCLIDEAN):
        return cls(np.asarray(points, dtype=float), "custom", Metric(metric))

    @property
    def n(self) -> int:
        return len(self.points)

    def __len__(self):
        return self.n

    def query(self, points, k):
        """Batch k-nearest query.

        Returns ``(ids, dists)``, both ``(len(points), k)``, each row ascending
        by distance with ties broken by the smaller server id.
        """
        n = self.n
        if not 1 <= k <= n:
            raise ValueError(f"k must be in [1, {n}], got {k}")
        q = np.asarray(points, dtype=float).reshape(-1, 2)
        if self.metric is Metric.TORUS:
            q = np.mod(q, 1.0)
        if len(q) == 0:
            return np.empty((0, k), dtype=np.int64), np.empty((0, k))
        # two spare neighbours let us detect ties straddling the k-th place
        kq = min(n, k + 2)
        dist, idx = self._tree.query(q, k=list(range(1, kq + 1)))
        dist, idx = _sorted_by_distance_then_id(dist, idx.astype(np.int64))
        if kq < n:
            unsure = np.flatnonzero(dist[:, k - 1] == dist[:, kq - 1])
            if len(unsure):
                full = distances(q[unsure], self.points, self.metric)
                ids = np.broadcast_to(np.arange(n), full.shape)
                fd, fi = _sorted_by_distance_then_id(full, ids)
                dist[unsure, :k] = fd[:, :k]
                idx[unsure, :k] = fi[:, :k]
        return idx[:, :k], dist[:, :k]

    def k_nearest(self, p, k):
        ids, dists = self.query([p], k)
        return [(int(i), float(d)) for i, d in zip(ids[0], dists[0])]

    def nearest(self, points):
        ids, dists = self.query(points, 1)
        return ids[:, 0], dists[:, 0]


def make_grid_layout(side: int) -> ServerLayout:
    """``side**2`` cell-centred servers on the torus.

    Server ``i * side + j`` sits at ``((i + 0.5) / side, (j + 0.5) / side)``.
    """
    if not isinstance(side, (int, np.integer)) or side < 2:
        raise ValueError(f"grid side must be an integer >= 2, got {side!r}")
    c = (np.arange(side) + 0.5) / side
    xs, ys = np.meshgrid(c, c, indexing="ij")
    pts = np.column_stack([xs.ravel(), ys.ravel()])
    return ServerLayout(pts, "grid", Metric.TORUS, side=int(side))


def make_uniform_layout(n: int, seed) -> ServerLayout:
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ValueError(f"need at least 2 servers, got {n!r}")
    pts = np.random.default_rng(seed).random((int(n), 2))
    return ServerLayout(pts, "uniform", Metric.EUCLIDEAN, seed=seed)


def k_nearest(layout: ServerLayout, p, k: int):
    """``[(server_id, distance), ...]`` for the ``k`` servers nearest ``p``."""
    return layout.k_nearest(p, k)


def grid_side(n: int) -> int:
    """Side of a square grid with ``n`` servers; raises if ``n`` is not square."""
    side = math.isqrt(int(n))
    if side * side != n:
        raise ValueError(f"grid placement needs a perfect square n, got {n}")
    return side
