"""Balls-and-bins oracle: majorization, and exact / Monte Carlo expected
maximum bin occupancy for ``m`` balls thrown i.i.d. with bin probabilities ``p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import seeding

TOTAL_TOL = 1e-9
# exact enumeration is refused beyond this many compositions
MAX_COMPOSITIONS = 10**6
_MC_CHUNK = 1 << 17


def majorizes(x, y, tol=TOTAL_TOL) -> bool:
    """True iff ``x`` majorizes ``y``.

    Sorted-descending prefix sums of ``x`` must dominate those of ``y`` and the
    totals must agree, both up to ``tol``.
    """
    x = np.sort(np.asarray(x, dtype=float))[::-1]
    y = np.sort(np.asarray(y, dtype=float))[::-1]
    if x.shape != y.shape or x.ndim != 1 or len(x) == 0:
        raise ValueError("majorization needs two non-empty vectors of equal length")
    cx, cy = np.cumsum(x), np.cumsum(y)
    if abs(cx[-1] - cy[-1]) > tol:
        return False
    return bool(np.all(cx[:-1] >= cy[:-1] - tol))


def check_probability_vector(p):
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or len(arr) == 0 or np.any(arr < 0) or abs(arr.sum() - 1.0) > 1e-12:
        raise ValueError("not a probability vector")
    return arr


def uniform(n):
    return np.full(n, 1.0 / n)


def composition_count(m, n):
    return math.comb(m + n - 1, n - 1)


def _compositions(m, n):
    if n == 1:
        yield (m,)
        return
    for first in range(m, -1, -1):
        for rest in _compositions(m - first, n - 1):
            yield (first,) + rest


def exact_expected_max(m: int, p) -> float:
    """E[max bin count] by summing the multinomial law over every composition.

    Entries of ``p`` may be Fractions, in which case the result is exact.
    """
    p = list(p)
    n = len(p)
    if m < 0 or n == 0:
        raise ValueError("need m >= 0 and at least one bin")
    if composition_count(m, n) > MAX_COMPOSITIONS:
        raise ValueError(
            f"{composition_count(m, n)} compositions of {m} into {n} parts; use mc_expected_max"
        )
    fact = [math.factorial(k) for k in range(m + 1)]
    total = 0
    for x in _compositions(m, n):
        coef = fact[m]
        prob = 1
        for xi, pi in zip(x, p):
            if xi:
                coef //= fact[xi]
                prob *= pi**xi
        total += coef * prob * max(x)
    return total


def mc_expected_max(m: int, p, trials: int, seed) -> tuple[float, float]:
    """Monte Carlo mean and standard error of the max bin count.

    Trials run in fixed-size chunks, each with its own derived stream.
    """
    p = check_probability_vector(p)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    maxima = np.empty(trials)
    done = 0
    chunk_id = 0
    while done < trials:
        size = min(_MC_CHUNK, trials - done)
        draws = seeding.rng(seed, chunk_id).multinomial(m, p, size=size)
        maxima[done : done + size] = draws.max(axis=1)
        done += size
        chunk_id += 1
    mean = float(maxima.mean())
    se = float(maxima.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return mean, se


@dataclass(frozen=True)
class SchurVerdict:
    m: int
    mean_p: float
    se_p: float
    mean_q: float
    se_q: float
    passed: bool
    exact_p: float | None = None
    exact_q: float | None = None

    @property
    def combined_se(self):
        return math.hypot(self.se_p, self.se_q)


def check_schur_monotonicity(m, p, q, trials, seed) -> SchurVerdict:
    """Check E_p[max] >= E_q[max] for ``p`` majorizing ``q``.

    The Monte Carlo verdict allows two combined standard errors of slack.
    When both instances are small enough to enumerate, the exact expectations
    are attached and the verdict uses them instead.
    """
    p = check_probability_vector(p)
    q = check_probability_vector(q)
    if not majorizes(p, q):
        raise ValueError("p does not majorize q")
    mean_p, se_p = mc_expected_max(m, p, trials, seeding.derive(seed, 0))
    mean_q, se_q = mc_expected_max(m, q, trials, seeding.derive(seed, 1))
    passed = mean_p >= mean_q - 2 * math.hypot(se_p, se_q)
    exact_p = exact_q = None
    if composition_count(m, len(p)) <= MAX_COMPOSITIONS:
        exact_p = float(exact_expected_max(m, p))
        exact_q = float(exact_expected_max(m, q))
        passed = exact_p >= exact_q - 1e-12
    return SchurVerdict(m, mean_p, se_p, mean_q, se_q, passed, exact_p, exact_q)
