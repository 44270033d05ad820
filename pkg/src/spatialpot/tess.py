"""Delaunay graphs and Monte Carlo estimates over the order-1/order-2 Voronoi
structure of a server layout.

All estimators draw uniform probe users in independently seeded blocks (see
:mod:`spatialpot.seeding`), so estimates depend only on ``(probes, seed)``.
Every estimator with the same ``(probes, seed)`` sees the same probe set.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import seeding
from .delaunay import DegenerateInputError, delaunay_edges
from .geom import ServerLayout


@dataclass(frozen=True)
class DelaunayGraph:
    n: int
    edges: tuple  # sorted (i, j) pairs with i < j
    adjacency: tuple  # adjacency[s] = sorted neighbour ids

    @classmethod
    def from_edges(cls, n, edges):
        es = sorted({(min(u, v), max(u, v)) for u, v in edges})
        for u, v in es:
            if u == v:
                raise ValueError(f"self-loop at {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge {(u, v)} out of range for n={n}")
        adj = [[] for _ in range(n)]
        for u, v in es:
            adj[u].append(v)
            adj[v].append(u)
        return cls(n, tuple(es), tuple(tuple(sorted(a)) for a in adj))

    @property
    def edge_set(self):
        return frozenset(self.edges)

    def degrees(self):
        return [len(a) for a in self.adjacency]

    def has_edge(self, u, v):
        return (min(u, v), max(u, v)) in self.edge_set

    def is_connected(self):
        if self.n == 0:
            return True
        seen = {0}
        stack = [0]
        while stack:
            for v in self.adjacency[stack.pop()]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.n

    def write_edge_list(self, path):
        with open(path, "w") as fh:
            for u, v in self.edges:
                fh.write(f"{u} {v}\n")

    @classmethod
    def read_edge_list(cls, path, n=None):
        edges = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    u, v = line.split()
                    edges.append((int(u), int(v)))
        if n is None:
            n = 1 + max((max(e) for e in edges), default=-1)
        return cls.from_edges(n, edges)


def build_grid_delaunay(side: int) -> DelaunayGraph:
    """Rook adjacency on the ``side x side`` torus grid (4-regular, 2n edges)."""
    if side < 3:
        raise ValueError(f"grid Delaunay graph needs side >= 3, got {side}")
    edges = []
    for i in range(side):
        for j in range(side):
            s = i * side + j
            edges.append((s, ((i + 1) % side) * side + j))
            edges.append((s, i * side + (j + 1) % side))
    return DelaunayGraph.from_edges(side * side, edges)


def build_delaunay(layout: ServerLayout) -> DelaunayGraph:
    """Voronoi-adjacency graph of the layout's servers.

    Grid layouts use the combinatorial torus construction; their cell centres
    are cocircular four at a time, so a geometric triangulation would pick
    arbitrary diagonals.
    """
    if layout.placement == "grid":
        return build_grid_delaunay(layout.side)
    if layout.n < 3:
        raise DegenerateInputError("need at least 3 servers")
    return DelaunayGraph.from_edges(layout.n, delaunay_edges(layout.points))


# ---------------------------------------------------------------------------
# probing


def probe_points(probes, seed):
    """Yield blocks of uniform probe points."""
    for b, size in seeding.probe_blocks(probes):
        yield seeding.rng(seed, b).random((size, 2))


def _two_nearest_blocks(layout, probes, seed):
    for pts in probe_points(probes, seed):
        ids, _ = layout.query(pts, 2)
        yield ids


def _pair_codes(ids, n):
    lo = np.minimum(ids[:, 0], ids[:, 1])
    hi = np.maximum(ids[:, 0], ids[:, 1])
    return lo * n + hi


def _tally_pairs(layout, blocks):
    n = layout.n
    counts = Counter()
    total = 0
    for ids in blocks:
        codes, c = np.unique(_pair_codes(ids, n), return_counts=True)
        for code, k in zip(codes.tolist(), c.tolist()):
            counts[divmod(code, n)] += k
        total += len(ids)
    return total, counts


@dataclass(frozen=True)
class EdgeProbabilityEstimate:
    samples: int
    pair_counts: dict
    non_edge_mass: float

    def probabilities(self):
        if self.samples == 0:
            return {}
        return {pair: c / self.samples for pair, c in self.pair_counts.items()}

    def write_csv(self, path):
        write_pair_csv(path, self.pair_counts, self.samples)


def write_pair_csv(path, pair_counts, samples):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pair_i", "pair_j", "count", "probability"])
        for (i, j), c in sorted(pair_counts.items()):
            w.writerow([i, j, c, repr(c / samples)])


def read_pair_csv(path):
    """Read a pair CSV back as ``{(i, j): count}``."""
    with open(path, newline="") as fh:
        return {(int(r["pair_i"]), int(r["pair_j"])): int(r["count"]) for r in csv.DictReader(fh)}


def estimate_edge_probabilities(layout, graph, probes, seed) -> EdgeProbabilityEstimate:
    """Frequency with which each unordered server pair is a probe's two nearest."""
    total, counts = _tally_pairs(layout, _two_nearest_blocks(layout, probes, seed))
    edges = graph.edge_set
    off = sum(c for pair, c in counts.items() if pair not in edges)
    return EdgeProbabilityEstimate(total, dict(counts), off / total if total else 0.0)


def estimate_vertex_probabilities(layout, probes, seed) -> np.ndarray:
    """Per-server frequency of being a probe's nearest server."""
    if probes < 1:
        raise ValueError("probes must be >= 1")
    counts = np.zeros(layout.n, dtype=np.int64)
    for ids in _two_nearest_blocks(layout, probes, seed):
        counts += np.bincount(ids[:, 0], minlength=layout.n)
    return counts / probes


def conditional_second_nearest_counts(layout, points):
    """``{(nearest, second): count}`` tallied over explicit probe points."""
    ids, _ = layout.query(points, 2)
    return Counter(map(tuple, ids.tolist()))


def estimate_conditional_second_nearest(layout, probes, seed) -> dict:
    """``{(s_i, s_j): Pr[second nearest = s_j | nearest = s_i]}`` on a grid."""
    if layout.placement != "grid":
        raise ValueError("conditional second-nearest estimate is defined for grid layouts")
    counts = Counter()
    for ids in _two_nearest_blocks(layout, probes, seed):
        codes, c = np.unique(ids[:, 0] * layout.n + ids[:, 1], return_counts=True)
        for code, k in zip(codes.tolist(), c.tolist()):
            counts[divmod(code, layout.n)] += k
    return conditional_from_counts(counts)


def conditional_from_counts(counts):
    nearest_totals = Counter()
    for (i, _), c in counts.items():
        nearest_totals[i] += c
    return {(i, j): c / nearest_totals[i] for (i, j), c in sorted(counts.items())}


@dataclass(frozen=True)
class SecondOrderCellEstimate:
    probes: int
    distinct_pairs: int
    pair_areas: dict

    def write_csv(self, path):
        counts = {p: round(a * self.probes) for p, a in self.pair_areas.items()}
        write_pair_csv(path, counts, self.probes)


def estimate_second_order_cells(layout, probes, seed) -> SecondOrderCellEstimate:
    """Distinct two-nearest pairs and their area fractions (order-2 Voronoi cells)."""
    if probes < 1:
        raise ValueError("probes must be >= 1")
    total, counts = _tally_pairs(layout, _two_nearest_blocks(layout, probes, seed))
    areas = {pair: c / total for pair, c in sorted(counts.items())}
    return SecondOrderCellEstimate(total, len(counts), areas)
