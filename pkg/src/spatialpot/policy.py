"""User-to-server allocation policies and the sequential allocation engine.

Each policy first draws, for every user, up to two candidate servers.  The
draw never looks at loads, so it is done in bulk.  The engine then walks the
users in list order and places each one on its less loaded candidate.  Load
ties go to the smaller server id when the user's tie-break uniform is below
0.5 and to the larger one otherwise.

Per-user randomness is row ``u`` of an ``(m, 3)`` uniform array drawn from the
allocation seed: column 0 and 1 feed candidate sampling, column 2 the
tie-break.  Policies that do not sample (sPOO, sPOT) leave columns 0-1 unused,
which keeps kSPOT(k=2) and sPOT bit-identical on the same seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .geom import Metric, ServerLayout

DPOT_EPS = 1e-9

POLICY_NAMES = ("POO", "POT", "sPOO", "sPOT", "kSPOT", "dPOT")


@dataclass(frozen=True)
class PolicyKind:
    """A policy name plus, for kSPOT, the candidate set size.

    ``PolicyKind("kSPOT")`` (``k=None``) means ``k = max(2, ceil(ln n))``,
    resolved against the layout at allocation time.
    """

    name: str
    k: int | None = None

    def __post_init__(self):
        if self.name not in POLICY_NAMES:
            raise ValueError(f"unknown policy {self.name!r}; expected one of {POLICY_NAMES}")
        if self.k is not None:
            if self.name != "kSPOT":
                raise ValueError(f"{self.name} takes no k")
            if self.k < 2:
                raise ValueError(f"kSPOT needs k >= 2, got {self.k}")

    @classmethod
    def parse(cls, text: str) -> PolicyKind:
        """Parse ``"sPOT"``, ``"kSPOT"`` (log n) or ``"kSPOT:4"``."""
        text = text.strip()
        name, _, k = text.partition(":")
        canon = {p.lower(): p for p in POLICY_NAMES}
        # accept k-sPOT spelling too
        key = name.lower().replace("-", "")
        if key not in canon:
            raise ValueError(f"unknown policy {text!r}")
        return cls(canon[key], int(k) if k else None)

    def resolve_k(self, n: int) -> int:
        if self.name != "kSPOT":
            raise ValueError(f"{self.name} has no candidate set size")
        k = self.k if self.k is not None else max(2, math.ceil(math.log(n)))
        if k > n:
            raise ValueError(f"kSPOT k={k} exceeds server count n={n}")
        return k

    def __str__(self):
        if self.name == "kSPOT" and self.k is not None:
            return f"kSPOT:{self.k}"
        return self.name


POO = PolicyKind("POO")
POT = PolicyKind("POT")
SPOO = PolicyKind("sPOO")
SPOT = PolicyKind("sPOT")
DPOT = PolicyKind("dPOT")


def kspot(k=None) -> PolicyKind:
    return PolicyKind("kSPOT", k)


@dataclass(frozen=True, eq=False)
class AllocationResult:
    assignment: np.ndarray
    request_distance: np.ndarray
    loads: np.ndarray

    @property
    def m(self):
        return len(self.assignment)

    @property
    def max_load(self) -> int:
        return int(self.loads.max())

    @property
    def mean_distance(self) -> float:
        return float(self.request_distance.mean())

    def write_users_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["user", "server", "distance"])
            for u, (s, d) in enumerate(zip(self.assignment.tolist(), self.request_distance.tolist())):
                w.writerow([u, s, repr(d)])

    def write_loads_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["server", "load"])
            for s, load in enumerate(self.loads.tolist()):
                w.writerow([s, load])


def read_loads_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([int(r["load"]) for r in rows], dtype=np.int64)


def read_users_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return (
        np.array([int(r["server"]) for r in rows], dtype=np.int64),
        np.array([float(r["distance"]) for r in rows]),
    )


# ---------------------------------------------------------------------------
# weighted two-out-of-n sampling


@njit(cache=True)
def _first_above(cum, t, lo, hi):
    # first index in [lo, hi) with cum[i] > t, or hi if there is none
    while lo < hi:
        mid = (lo + hi) // 2
        if cum[mid] > t:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True)
def _last_positive(cum, lo, hi, skip):
    for j in range(hi - 1, lo - 1, -1):
        prev = cum[j - 1] if j > 0 else 0.0
        if j != skip and cum[j] > prev:
            return j
    return -1


@njit(cache=True)
def _pick_two(cum, u0, u1):
    """Two distinct indices drawn without replacement from cumulative weights.

    The first index has probability w_i / W.  The second comes from the
    remaining mass W - w_first, laid out with the first item's slot cut out.
    """
    n = cum.shape[0]
    total = cum[n - 1]
    f = _first_above(cum, u0 * total, 0, n)
    if f >= n:
        f = _last_positive(cum, 0, n, -1)
    prev = cum[f - 1] if f > 0 else 0.0
    wf = cum[f] - prev
    t = u1 * (total - wf)
    if t < prev:
        s = _first_above(cum, t, 0, f)
        if s >= f:
            s = _last_positive(cum, 0, f, f)
    else:
        s = _first_above(cum, t - prev + cum[f], f + 1, n)
        if s >= n:
            s = _last_positive(cum, f + 1, n, f)
    if s < 0:
        s = _last_positive(cum, 0, n, f)
    return f, s


def sample_two_weighted(weights, rng) -> tuple[int, int]:
    """Draw two distinct indices, the first with probability proportional to
    its weight, the second proportional among the rest.

    ``rng`` is a numpy Generator (or anything accepted by ``default_rng``).
    Returns ``(first, second)``.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or len(w) < 2:
        raise ValueError("need at least two weights")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    if np.count_nonzero(w) < 2:
        raise ValueError("need at least two strictly positive weights")
    rng = np.random.default_rng(rng)
    u0, u1 = rng.random(2)
    f, s = _pick_two(np.cumsum(w), u0, u1)
    return int(f), int(s)


def dpot_weights(layout: ServerLayout, u) -> np.ndarray:
    """Inverse-square-distance sampling weights of every server for user ``u``."""
    p = np.asarray(u, dtype=float)
    d = np.abs(layout.points - p)
    if layout.metric is Metric.TORUS:
        d = np.minimum(d, 1.0 - d)
    d2 = d[:, 0] ** 2 + d[:, 1] ** 2
    return 1.0 / np.maximum(d2, DPOT_EPS * DPOT_EPS)


@njit(cache=True, nogil=True)
def _dpot_candidates(users, servers, torus, u0, u1, eps2):
    m = users.shape[0]
    n = servers.shape[0]
    cum = np.empty(n)
    out = np.empty((m, 2), dtype=np.int64)
    for r in range(m):
        ux = users[r, 0]
        uy = users[r, 1]
        total = 0.0
        for p in range(n):
            dx = abs(ux - servers[p, 0])
            dy = abs(uy - servers[p, 1])
            if torus:
                dx = min(dx, 1.0 - dx)
                dy = min(dy, 1.0 - dy)
            d2 = dx * dx + dy * dy
            if d2 < eps2:
                d2 = eps2
            total += 1.0 / d2
            cum[p] = total
        f, s = _pick_two(cum, u0[r], u1[r])
        out[r, 0] = f
        out[r, 1] = s
    return out


# ---------------------------------------------------------------------------
# candidate generation and the engine


def _uniform_pair(u0, u1, n):
    a = np.minimum((u0 * n).astype(np.int64), n - 1)
    b = np.minimum((u1 * (n - 1)).astype(np.int64), n - 2)
    b = b + (b >= a)
    return a, b


def candidates(layout: ServerLayout, users, kind: PolicyKind, uniforms) -> np.ndarray:
    """``(m, 2)`` candidate server ids; single-choice policies repeat one id."""
    n = layout.n
    users = np.asarray(users, dtype=float).reshape(-1, 2)
    u0, u1 = uniforms[:, 0], uniforms[:, 1]
    if kind.name == "POO":
        a = np.minimum((u0 * n).astype(np.int64), n - 1)
        return np.column_stack([a, a])
    if kind.name == "POT":
        return np.column_stack(_uniform_pair(u0, u1, n))
    if kind.name == "sPOO":
        a, _ = layout.nearest(users)
        return np.column_stack([a, a])
    if kind.name == "sPOT":
        ids, _ = layout.query(users, 2)
        return ids
    if kind.name == "kSPOT":
        k = kind.resolve_k(n)
        ids, _ = layout.query(users, k)
        i, j = _uniform_pair(u0, u1, k)
        rows = np.arange(len(users))
        return np.column_stack([ids[rows, i], ids[rows, j]])
    if kind.name == "dPOT":
        return _dpot_candidates(
            np.ascontiguousarray(users),
            np.ascontiguousarray(layout.points),
            layout.metric is Metric.TORUS,
            np.ascontiguousarray(u0),
            np.ascontiguousarray(u1),
            DPOT_EPS * DPOT_EPS,
        )
    raise AssertionError(kind)


@njit(cache=True, nogil=True)
def _assign(cand, tie, n):
    m = cand.shape[0]
    loads = np.zeros(n, dtype=np.int64)
    out = np.empty(m, dtype=np.int64)
    for u in range(m):
        a = cand[u, 0]
        b = cand[u, 1]
        if a == b:
            s = a
        elif loads[a] < loads[b]:
            s = a
        elif loads[b] < loads[a]:
            s = b
        elif tie[u] < 0.5:
            s = min(a, b)
        else:
            s = max(a, b)
        loads[s] += 1
        out[u] = s
    return out, loads


def _assign_audited(cand, tie, n):
    loads = [0] * n
    out = []
    for (a, b), t in zip(cand.tolist(), tie.tolist()):
        if a == b or loads[a] < loads[b]:
            s = a
        elif loads[b] < loads[a]:
            s = b
        else:
            s = min(a, b) if t < 0.5 else max(a, b)
        before = sum(loads)
        loads[s] += 1
        assert sum(loads) == before + 1 and loads[s] >= 1
        out.append(s)
    return np.array(out, dtype=np.int64), np.array(loads, dtype=np.int64)


def request_distances(layout: ServerLayout, users, assignment) -> np.ndarray:
    d = np.abs(np.asarray(users, dtype=float).reshape(-1, 2) - layout.points[assignment])
    if layout.metric is Metric.TORUS:
        d = np.mod(d, 1.0)
        d = np.minimum(d, 1.0 - d)
    return np.sqrt(d[:, 0] ** 2 + d[:, 1] ** 2)


def allocate(layout: ServerLayout, users, kind: PolicyKind, seed, audit=False) -> AllocationResult:
    """Sequentially allocate ``users`` to servers of ``layout`` under ``kind``.

    ``seed`` may be an int, a SeedSequence or a Generator.  With ``audit`` the
    engine runs in pure Python and checks that every step adds exactly one
    unit of load.
    """
    users = np.asarray(users, dtype=float).reshape(-1, 2)
    if len(users) == 0:
        raise ValueError("no users to allocate")
    if kind.name == "kSPOT":
        kind.resolve_k(layout.n)  # validates k <= n
    uniforms = np.random.default_rng(seed).random((len(users), 3))
    cand = candidates(layout, users, kind, uniforms)
    tie = np.ascontiguousarray(uniforms[:, 2])
    if audit:
        assignment, loads = _assign_audited(cand, tie, layout.n)
    else:
        assignment, loads = _assign(np.ascontiguousarray(cand), tie, layout.n)
    return AllocationResult(assignment, request_distances(layout, users, assignment), loads)
