"""Multi-trial experiments: scenarios, paired policy comparisons, scaling
sweeps, the fixed-k conjecture probe and the mobility study.

Within one experiment every policy sees the same servers and users in a given
trial; the per-trial streams are derived as documented in
:mod:`spatialpot.seeding`.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from functools import partial

import numpy as np
from scipy import stats

from . import seeding
from .geom import grid_side, make_grid_layout, make_uniform_layout
from .mobility import MobilityConfig, evolve_positions
from .policy import DPOT, POO, POT, SPOO, SPOT, PolicyKind, allocate, kspot

log = logging.getLogger(__name__)

DIST_BINS = 100
Z95 = 1.96

TRADEOFF_POLICIES = (POO, POT, SPOO, SPOT, DPOT, kspot())
DISTRIBUTION_POLICIES = (DPOT, POT, SPOT)


@dataclass(frozen=True)
class ScenarioConfig:
    placement: str
    n: int
    policy: PolicyKind
    trials: int
    seed: int
    m: int | None = None
    mobility: MobilityConfig | None = None

    def __post_init__(self):
        if self.placement not in ("uniform", "grid"):
            raise ValueError(f"placement must be 'uniform' or 'grid', got {self.placement!r}")
        if self.n < 2:
            raise ValueError("need at least 2 servers")
        if self.placement == "grid":
            grid_side(self.n)
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.m is not None and self.m < 1:
            raise ValueError("m must be >= 1")
        if self.policy.name == "kSPOT":
            self.policy.resolve_k(self.n)

    @property
    def users(self) -> int:
        return self.n if self.m is None else self.m


def mean_ci(values):
    """``(mean, se, lo, hi)`` with a normal 95% interval; one value gives se 0."""
    v = np.asarray(values, dtype=float)
    mean = float(v.mean())
    se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    return mean, se, mean - Z95 * se, mean + Z95 * se


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    max_load: int
    mean_distance: float
    load_hist: np.ndarray  # load_hist[L] = servers carrying load L
    dist_hist: np.ndarray  # counts over DIST_BINS bins on [0, dist_max]
    dist_max: float
    loads_total: int


@dataclass(frozen=True)
class ScenarioReport:
    config: ScenarioConfig
    records: tuple

    @property
    def max_loads(self):
        return np.array([r.max_load for r in self.records])

    @property
    def mean_distances(self):
        return np.array([r.mean_distance for r in self.records])

    @property
    def max_load_stats(self):
        return mean_ci(self.max_loads)

    @property
    def distance_stats(self):
        return mean_ci(self.mean_distances)

    @property
    def loads_conserved(self):
        return all(r.loads_total == self.config.users for r in self.records)


# ---------------------------------------------------------------------------
# trial execution


def _record(trial, result):
    d = result.request_distance
    dmax = float(d.max())
    counts, _ = np.histogram(d, bins=DIST_BINS, range=(0.0, dmax if dmax > 0 else 1.0))
    return TrialRecord(
        trial=trial,
        max_load=result.max_load,
        mean_distance=result.mean_distance,
        load_hist=np.bincount(result.loads),
        dist_hist=counts,
        dist_max=dmax,
        loads_total=int(result.loads.sum()),
    )


def trial_inputs(placement, n, m, seed, keys, mobility=None):
    """Servers and (possibly moved) users for one trial."""
    if placement == "grid":
        layout = make_grid_layout(grid_side(n))
    else:
        layout = make_uniform_layout(n, seeding.derive(seed, *keys, seeding.SERVERS))
    users = seeding.rng(seed, *keys, seeding.USERS).random((m, 2))
    if mobility is not None:
        durations = mobility.warmup_per_user * np.arange(m)
        users = evolve_positions(users, mobility, durations, seeding.rng(seed, *keys, seeding.MOBILITY))
    return layout, users


def _run_trial(placement, n, m, policies, seed, mobility, keys):
    layout, users = trial_inputs(placement, n, m, seed, keys, mobility)
    policy_seed = seeding.derive(seed, *keys, seeding.POLICY)
    return [_record(keys[-1], allocate(layout, users, p, policy_seed)) for p in policies]


def _map(fn, items, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def run_policies(placement, n, policies, trials, seed, m=None, mobility=None, prefix=(), workers=1):
    """Paired run of several policies; returns ``{policy: [TrialRecord, ...]}``.

    Trial ``t`` uses stream keys ``prefix + (t, ...)``.
    """
    m = n if m is None else m
    fn = partial(_run_trial, placement, n, m, tuple(policies), seed, mobility)
    per_trial = _map(fn, [tuple(prefix) + (t,) for t in range(trials)], workers)
    return {p: [recs[i] for recs in per_trial] for i, p in enumerate(policies)}


def run_scenario(cfg: ScenarioConfig, workers=1) -> ScenarioReport:
    recs = run_policies(cfg.placement, cfg.n, [cfg.policy], cfg.trials, cfg.seed, cfg.m, cfg.mobility, workers=workers)
    return ScenarioReport(cfg, tuple(recs[cfg.policy]))


def run_tradeoff_suite(n, trials, seed, placement="uniform", policies=TRADEOFF_POLICIES, workers=1):
    """``{policy: ScenarioReport}`` for all policies on identical inputs."""
    recs = run_policies(placement, n, policies, trials, seed, workers=workers)
    return {p: ScenarioReport(ScenarioConfig(placement, n, p, trials, seed), tuple(recs[p])) for p in policies}


# ---------------------------------------------------------------------------
# single-run distribution study


@dataclass(frozen=True)
class Distribution:
    policy: PolicyKind
    load_pmf: np.ndarray  # index = load value
    dist_pmf: np.ndarray  # DIST_BINS bins on [0, dist_max]
    dist_max: float
    mean_distance: float
    max_load: int


def run_distribution_study(n, seed, placement="uniform", policies=DISTRIBUTION_POLICIES):
    recs = run_policies(placement, n, policies, 1, seed)
    out = {}
    for p in policies:
        r = recs[p][0]
        out[p] = Distribution(
            p,
            r.load_hist / r.load_hist.sum(),
            r.dist_hist / r.dist_hist.sum(),
            r.dist_max,
            r.mean_distance,
            r.max_load,
        )
    return out


def total_variation(pmf_a, pmf_b) -> float:
    """Total variation distance between two pmfs on 0, 1, 2, ..."""
    size = max(len(pmf_a), len(pmf_b))
    a = np.zeros(size)
    b = np.zeros(size)
    a[: len(pmf_a)] = pmf_a
    b[: len(pmf_b)] = pmf_b
    return 0.5 * float(np.abs(a - b).sum())


# ---------------------------------------------------------------------------
# growth sweeps


def growth_ratios(n, max_load):
    """``(r1, r2)`` = max load over ln n / ln ln n and over ln ln n."""
    lnn = math.log(n)
    lnlnn = math.log(lnn)
    return max_load / (lnn / lnlnn), max_load / lnlnn


@dataclass(frozen=True)
class GrowthRow:
    n: int
    policy: PolicyKind
    mean_max_load: float
    se: float
    r1: float
    r2: float
    max_loads: tuple = ()
    note: str = ""

    @property
    def skipped(self):
        return bool(self.note) and not self.max_loads


@dataclass(frozen=True)
class Trend:
    strictly_increasing: bool
    strictly_decreasing: bool
    spearman: float
    points: int

    @property
    def sufficient(self):
        return self.points >= 2

    def describe(self):
        if not self.sufficient:
            return "insufficient points"
        if self.strictly_increasing:
            return "increasing"
        if self.strictly_decreasing:
            return "decreasing"
        return "mixed"


def trend(values) -> Trend:
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        return Trend(False, False, float("nan"), len(v))
    diffs = np.diff(v)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rho = float(stats.spearmanr(np.arange(len(v)), v).statistic)
    return Trend(bool(np.all(diffs > 0)), bool(np.all(diffs < 0)), rho, len(v))


@dataclass(frozen=True)
class SweepResult:
    rows: tuple
    policies: tuple

    def series(self, policy, attr):
        return [getattr(r, attr) for r in self.rows if r.policy == policy and not r.skipped]

    def trends(self, policy):
        return trend(self.series(policy, "r1")), trend(self.series(policy, "r2"))

    def row(self, n, policy):
        for r in self.rows:
            if r.n == n and r.policy == policy:
                return r
        raise KeyError((n, policy))

    def monotone_warnings(self):
        """Policies whose mean max load dips as n grows (statistical, not fatal)."""
        return [p for p in self.policies if np.any(np.diff(self.series(p, "mean_max_load")) < 0)]


def run_scaling_sweep(n_values, trials, policies, seed, placement="uniform", workers=1) -> SweepResult:
    """Mean max load per (n, policy) with paired inputs at every n.

    Point ``n`` trial ``t`` uses stream keys ``(n, t, ...)``.  A kSPOT policy
    whose k exceeds n is skipped at that n with a note row.
    """
    n_values = [int(n) for n in n_values]
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if any(n < 16 for n in n_values) or n_values != sorted(set(n_values)):
        raise ValueError("n_values must be strictly ascending and each >= 16")
    policies = tuple(policies)
    rows = []
    for n in n_values:
        if placement == "grid":
            grid_side(n)
        runnable = []
        for p in policies:
            if p.name == "kSPOT" and p.k is not None and p.k > n:
                log.warning("skipping %s at n=%d: k exceeds n", p, n)
                rows.append(GrowthRow(n, p, math.nan, math.nan, math.nan, math.nan, (), f"skipped: k={p.k} > n={n}"))
            else:
                runnable.append(p)
        recs = run_policies(placement, n, runnable, trials, seed, prefix=(n,), workers=workers)
        for p in runnable:
            loads = tuple(r.max_load for r in recs[p])
            mean, se, _, _ = mean_ci(loads)
            r1, r2 = growth_ratios(n, mean)
            rows.append(GrowthRow(n, p, mean, se, r1, r2, loads))
    rows.sort(key=lambda r: (policies.index(r.policy), r.n))
    return SweepResult(tuple(rows), policies)


@dataclass(frozen=True)
class ConjectureResult:
    k_fixed: int
    sweep: SweepResult
    r1: Trend
    r2: Trend
    paired_differences: tuple  # (n, mean, lo, hi) of kSPOT(k) - sPOT max load
    verdict: str


def run_conjecture_probe(n_values, k_fixed, trials, seed, placement="uniform", workers=1) -> ConjectureResult:
    """Sweep kSPOT with a fixed candidate set size alongside sPOT."""
    if k_fixed < 2:
        raise ValueError("k_fixed must be >= 2")
    probe = kspot(k_fixed)
    sweep = run_scaling_sweep(n_values, trials, [probe, SPOT], seed, placement, workers)
    r1, r2 = sweep.trends(probe)
    diffs = []
    for n in n_values:
        row = sweep.row(n, probe)
        if row.skipped:
            continue
        d = np.subtract(row.max_loads, sweep.row(n, SPOT).max_loads)
        mean, _, lo, hi = mean_ci(d)
        diffs.append((n, mean, lo, hi))
    if not r2.sufficient:
        verdict = "insufficient points"
    elif r2.strictly_increasing:
        verdict = "consistent with conjecture"
    else:
        verdict = "not consistent with conjecture"
    return ConjectureResult(k_fixed, sweep, r1, r2, tuple(diffs), verdict)


# ---------------------------------------------------------------------------
# mobility


@dataclass(frozen=True)
class MobilityRow:
    velocity: float
    report: ScenarioReport

    @property
    def stats(self):
        return self.report.max_load_stats


def run_mobility_study(
    n,
    trials,
    velocities,
    seed,
    model="random_direction_reflect",
    warmup_per_user=1.0,
    dt=1.0,
    placement="uniform",
    policy=SPOT,
    workers=1,
):
    """sPOT max load when user ``i`` is allocated after moving ``i * warmup`` s.

    Servers are static.  Every velocity reuses the same seeds, so velocity 0
    reproduces the static scenario exactly.
    """
    rows = []
    for v in velocities:
        mob = MobilityConfig(model, float(v), dt, warmup_per_user)
        cfg = ScenarioConfig(placement, n, policy, trials, seed, mobility=mob)
        rows.append(MobilityRow(float(v), run_scenario(cfg, workers)))
    return rows


def ci_overlap(a, b):
    """Whether two ``(mean, se, lo, hi)`` intervals overlap."""
    return a[2] <= b[3] and b[2] <= a[3]


# ---------------------------------------------------------------------------
# Monte Carlo distance oracles


def uniform_pair_distance_mc(samples, seed):
    """Mean distance between two independent uniform points in the unit square."""
    total = 0.0
    count = 0
    for b, size in seeding.probe_blocks(samples):
        pts = seeding.rng(seed, b).random((size, 4))
        total += float(np.hypot(pts[:, 0] - pts[:, 2], pts[:, 1] - pts[:, 3]).sum())
        count += size
    return total / count


def nearest_server_distance_mc(n, layouts, probes, seed):
    """Mean distance from a uniform point to the nearest of ``n`` uniform
    servers, by exhaustive search (no spatial index)."""
    acc = []
    for i in range(layouts):
        g = seeding.rng(seed, i)
        servers = g.random((n, 2))
        pts = g.random((probes, 2))
        for chunk in np.array_split(pts, max(1, probes // 256)):
            d2 = ((chunk[:, None, :] - servers[None, :, :]) ** 2).sum(axis=2)
            acc.append(np.sqrt(d2.min(axis=1)))
    return float(np.concatenate(acc).mean())


# ---------------------------------------------------------------------------
# CSV / manifest output

SUMMARY_HEADER = [
    "policy", "n", "trials", "mean_max_load", "ci_low", "ci_high",
    "mean_distance", "ci_low", "ci_high", "loads_conserved",
]


def _fmt(x):
    return repr(float(x))


def summary_row(report: ScenarioReport, label=None):
    _, _, llo, lhi = report.max_load_stats
    _, _, dlo, dhi = report.distance_stats
    c = report.config
    return [
        label or str(c.policy), c.n, c.trials,
        _fmt(report.max_load_stats[0]), _fmt(llo), _fmt(lhi),
        _fmt(report.distance_stats[0]), _fmt(dlo), _fmt(dhi),
        "true" if report.loads_conserved else "false",
    ]


def write_summary_csv(path, reports):
    """``reports``: iterable of ScenarioReport or ``(label, ScenarioReport)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        for item in reports:
            label, rep = item if isinstance(item, tuple) else (None, item)
            w.writerow(summary_row(rep, label))


def read_summary_csv(path):
    """Rows of summary.csv as dicts; repeated ``ci_*`` columns get load_/dist_ prefixes."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    keys = ["policy", "n", "trials", "mean_max_load", "load_ci_low", "load_ci_high",
            "mean_distance", "dist_ci_low", "dist_ci_high", "loads_conserved"]
    return [dict(zip(keys, r)) for r in rows[1:]]


def write_load_hist_csv(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["policy", "trial", "load", "count", "fraction"])
        for item in reports:
            label, rep = item if isinstance(item, tuple) else (str(item.config.policy), item)
            for r in rep.records:
                total = r.load_hist.sum()
                for load, c in enumerate(r.load_hist.tolist()):
                    w.writerow([label, r.trial, load, c, _fmt(c / total)])


def write_dist_hist_csv(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["policy", "trial", "bin", "lo", "hi", "count", "fraction"])
        for item in reports:
            label, rep = item if isinstance(item, tuple) else (str(item.config.policy), item)
            for r in rep.records:
                width = r.dist_max / DIST_BINS
                total = r.dist_hist.sum()
                for b, c in enumerate(r.dist_hist.tolist()):
                    w.writerow([label, r.trial, b, _fmt(b * width), _fmt((b + 1) * width), c, _fmt(c / total)])


GROWTH_HEADER = ["n", "policy", "mean_max_load", "se", "r1", "r2"]


def write_growth_csv(path, sweep: SweepResult):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(GROWTH_HEADER + ["note"])
        for r in sweep.rows:
            w.writerow([r.n, str(r.policy), _fmt(r.mean_max_load), _fmt(r.se), _fmt(r.r1), _fmt(r.r2), r.note])


def verdict_lines(sweep: SweepResult):
    lines = []
    for p in sweep.policies:
        t1, t2 = sweep.trends(p)
        lines.append(f"{p}\tr1\t{t1.describe()}\tspearman={t1.spearman:.4f}\tpoints={t1.points}")
        lines.append(f"{p}\tr2\t{t2.describe()}\tspearman={t2.spearman:.4f}\tpoints={t2.points}")
    for p in sweep.monotone_warnings():
        lines.append(f"{p}\twarning\tmean max load not monotone in n")
    return lines


def config_echo(cfg):
    """JSON-friendly view of a config dataclass."""
    d = asdict(cfg) if hasattr(cfg, "__dataclass_fields__") else dict(cfg)
    return json.loads(json.dumps(d, default=str))

