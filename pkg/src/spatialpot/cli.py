"""Command-line front end.

Exit codes: 0 pass, 1 statistical failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import os
import sys
import time

import numpy as np

from . import __version__, bins, exp, seeding, tess
from .geom import make_grid_layout, make_uniform_layout
from .mobility import MODELS, MobilityConfig
from .policy import POT, SPOT, DPOT, PolicyKind, kspot

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

DEFAULT_SWEEP_N = (100, 400, 1600, 6400, 25600)
FULL_SWEEP_N = (100, 400, 1600, 6400, 25600, 40000)


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# config files


def parse_config(text):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = (value, lineno)
    return out


class _Config:
    def __init__(self, entries, allowed):
        unknown = sorted(set(entries) - set(allowed))
        if unknown:
            k = unknown[0]
            raise ConfigError(f"line {entries[k][1]}: unknown key {k!r}")
        self.entries = entries

    def get(self, key, conv, default=None):
        if key not in self.entries:
            return default
        value, lineno = self.entries[key]
        try:
            return conv(value)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {e}") from None

    def echo(self):
        return {k: v for k, (v, _) in self.entries.items()}


def _int_list(s):
    return [int(x) for x in s.split(",") if x.strip()]


def _float_list(s):
    return [float(x) for x in s.split(",") if x.strip()]


def _policy_list(s):
    return [PolicyKind.parse(x) for x in s.split(",") if x.strip()]


def _read_config(path, allowed):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    return _Config(parse_config(text), allowed)


# ---------------------------------------------------------------------------
# output helpers


class OutputDir:
    """A fresh timestamped run directory plus its manifest."""

    def __init__(self, root, command):
        stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S")
        base = os.path.join(root, f"{command}-{stamp}")
        path, i = base, 1
        while os.path.exists(path):
            path = f"{base}-{i}"
            i += 1
        os.makedirs(path)
        self.path = path
        self.command = command
        self.files = []
        self.started = time.time()

    def file(self, name):
        self.files.append(name)
        return os.path.join(self.path, name)

    def write_manifest(self, config, seed, extra=None):
        manifest = {
            "command": self.command,
            "config": config,
            "seed": seed,
            "version": __version__,
            "timestamp": _dt.datetime.now().isoformat(timespec="seconds"),
            "wall_time_s": round(time.time() - self.started, 3),
            "files": sorted(self.files),
        }
        if extra:
            manifest.update(extra)
        with open(os.path.join(self.path, "meta.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _gnuplot(out, name, body):
    with open(out.file(name), "w") as fh:
        fh.write("set datafile separator ','\nset key autotitle columnhead\n")
        fh.write(body)


# ---------------------------------------------------------------------------
# verify


def _verify_grid_edge_law(args, out):
    layout = make_grid_layout(args.side)
    graph = tess.build_delaunay(layout)
    est = tess.estimate_edge_probabilities(layout, graph, args.probes, args.seed)
    vert = tess.estimate_vertex_probabilities(layout, args.probes, args.seed)
    target = 1.0 / len(graph.edges)
    probs = est.probabilities()
    edge_dev = max(abs(probs.get(e, 0.0) - target) / target for e in graph.edges)
    vert_dev = float(np.max(np.abs(vert * layout.n - 1.0)))
    est.write_csv(out.file("edge_probabilities.csv"))
    _write_rows(out.file("vertex_probabilities.csv"), ["server", "probability"],
                [[s, repr(float(p))] for s, p in enumerate(vert)])
    ok = est.non_edge_mass == 0 and edge_dev < args.tolerance and vert_dev < args.tolerance
    lines = [
        f"edges={len(graph.edges)} probes={est.samples}",
        f"non_edge_mass={est.non_edge_mass}",
        f"max_relative_edge_deviation={edge_dev:.6f} (target 1/{len(graph.edges)}, tol {args.tolerance})",
        f"max_relative_vertex_deviation={vert_dev:.6f} (target 1/{layout.n}, tol {args.tolerance})",
    ]
    return ok, lines


def _verify_grid_regularity(args, out):
    graph = tess.build_grid_delaunay(args.side)
    degs = set(graph.degrees())
    graph.write_edge_list(out.file("edges.txt"))
    ok = degs == {4} and len(graph.edges) == 2 * graph.n
    return ok, [f"n={graph.n} edges={len(graph.edges)} degrees={sorted(degs)}"]


def _verify_second_order(args, out):
    layout = make_uniform_layout(args.n, args.seed)
    graph = tess.build_delaunay(layout)
    est = tess.estimate_second_order_cells(layout, args.probes, args.seed)
    est.write_csv(out.file("second_order_cells.csv"))
    off = [p for p in est.pair_areas if not graph.has_edge(*p)]
    ok = est.distinct_pairs <= 3 * args.n and not off
    return ok, [
        f"n={args.n} probes={est.probes} distinct_pairs={est.distinct_pairs} bound=3n={3 * args.n}",
        f"delaunay_edges={len(graph.edges)} probed_pairs_not_in_delaunay={len(off)}",
    ]


def _verify_conditional(args, out):
    layout = make_grid_layout(args.side)
    graph = tess.build_grid_delaunay(args.side)
    cond = tess.estimate_conditional_second_nearest(layout, args.probes, args.seed)
    _write_rows(out.file("conditional_second_nearest.csv"), ["nearest", "second", "probability"],
                [[i, j, repr(p)] for (i, j), p in sorted(cond.items())])
    off_mass = sum(p for (i, j), p in cond.items() if not graph.has_edge(i, j))
    dev = max(abs(cond.get((i, j), 0.0) - 0.25) for i in range(graph.n) for j in graph.adjacency[i])
    ok = off_mass == 0 and dev <= args.abs_tolerance
    return ok, [f"max_abs_deviation_from_quarter={dev:.6f} (tol {args.abs_tolerance})",
                f"non_neighbour_mass={off_mass}"]


def _verify_schur(args, out):
    g = seeding.rng(args.seed, 0)
    q = bins.uniform(args.n)
    rows = []
    fails = 0
    for i in range(args.vectors):
        p = g.dirichlet(np.ones(args.n))
        v = bins.check_schur_monotonicity(args.balls, p, q, args.trials, seeding.derive(args.seed, 1, i))
        fails += not v.passed
        rows.append([i, repr(v.mean_p), repr(v.se_p), repr(v.mean_q), repr(v.se_q), str(v.passed).lower()])
    _write_rows(out.file("schur.csv"), ["vector", "mean_p", "se_p", "mean_uniform", "se_uniform", "pass"], rows)
    allowed = args.vectors // 20
    return fails <= allowed, [f"vectors={args.vectors} failures={fails} allowed={allowed}"]


VERIFY_TARGETS = {
    "grid-lemma1": _verify_grid_edge_law,
    "grid-regularity": _verify_grid_regularity,
    "second-order-cells": _verify_second_order,
    "schur": _verify_schur,
    "conditional-quarter": _verify_conditional,
}


def cmd_verify(args):
    out = OutputDir(args.out, f"verify-{args.target}")
    ok, lines = VERIFY_TARGETS[args.target](args, out)
    lines.append("PASS" if ok else "FAIL")
    with open(out.file("report.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    out.write_manifest({k: v for k, v in vars(args).items() if k != "func"}, args.seed)
    print(f"verify {args.target}")
    for line in lines:
        print("  " + line)
    print(f"  output: {out.path}")
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# run

RUN_KEYS = {
    "experiment", "placement", "n", "m", "policy", "policies", "trials", "seed",
    "velocities", "v_max", "model", "warmup", "dt",
}


def _mobility_from(cfg, v_max):
    return MobilityConfig(
        cfg.get("model", str, "random_direction_reflect"),
        v_max,
        cfg.get("dt", float, 1.0),
        cfg.get("warmup", float, 1.0),
    )


def cmd_run(args):
    try:
        cfg = _read_config(args.config, RUN_KEYS)
        kind = cfg.get("experiment", str, "scenario")
        placement = cfg.get("placement", str, "uniform")
        n = cfg.get("n", int)
        seed = cfg.get("seed", int, 0)
        trials = cfg.get("trials", int, 1)
        if n is None:
            raise ConfigError("missing required key 'n'")
        if kind not in ("scenario", "tradeoff", "distribution", "mobility"):
            raise ConfigError(f"unknown experiment {kind!r}")
        if trials < 1:
            raise ConfigError("trials must be >= 1")
        if kind == "scenario":
            v_max = cfg.get("v_max", float)
            sc = exp.ScenarioConfig(
                placement, n, cfg.get("policy", PolicyKind.parse, SPOT), trials, seed,
                m=cfg.get("m", int), mobility=None if v_max is None else _mobility_from(cfg, v_max),
            )
        elif kind == "mobility":
            velocities = cfg.get("velocities", _float_list, [0.01, 0.1])
            mob_model = cfg.get("model", str, "random_direction_reflect")
            if mob_model not in MODELS:
                raise ConfigError(f"unknown mobility model {mob_model!r}")
            _mobility_from(cfg, 0.0)  # validates dt / warmup
        elif kind == "tradeoff":
            policies = cfg.get("policies", _policy_list, list(exp.TRADEOFF_POLICIES))
            exp.ScenarioConfig(placement, n, policies[0], trials, seed)  # validates placement / n
        else:
            policies = cfg.get("policies", _policy_list, list(exp.DISTRIBUTION_POLICIES))
            exp.ScenarioConfig(placement, n, policies[0], 1, seed)
    except (ConfigError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE

    out = OutputDir(args.out, f"run-{kind}")
    w = args.threads
    if kind == "scenario":
        reports = [exp.run_scenario(sc, workers=w)]
    elif kind == "tradeoff":
        reports = list(exp.run_tradeoff_suite(n, trials, seed, placement, policies, workers=w).values())
    elif kind == "distribution":
        dist = exp.run_distribution_study(n, seed, placement, policies)
        _write_distribution(out, dist)
        reports = None
    else:
        rows = exp.run_mobility_study(
            n, trials, velocities, seed, model=mob_model,
            warmup_per_user=cfg.get("warmup", float, 1.0), dt=cfg.get("dt", float, 1.0),
            placement=placement, workers=w,
        )
        _write_mobility(out, rows)
        reports = [(f"sPOT@v={r.velocity!r}", r.report) for r in rows]
    if reports is not None:
        exp.write_summary_csv(out.file("summary.csv"), reports)
        exp.write_load_hist_csv(out.file("load_hist.csv"), reports)
        exp.write_dist_hist_csv(out.file("dist_hist.csv"), reports)
        if args.gnuplot:
            _gnuplot(out, "plot.gp", "set style data histograms\n"
                     "plot 'summary.csv' using 4:xtic(1) title 'mean max load'\n")
    elif args.gnuplot:
        _gnuplot(out, "plot.gp", "plot 'load_hist.csv' using 2:4 with boxes\n")
    out.write_manifest(cfg.echo(), seed, {"experiment": kind})
    shown = "summary.csv" if reports is not None else "distribution_summary.csv"
    with open(os.path.join(out.path, shown)) as fh:
        sys.stdout.write(fh.read())
    print(f"output: {out.path}")
    return EXIT_OK


def _write_distribution(out, dist):
    load_rows, dist_rows, summary = [], [], []
    for p, d in dist.items():
        for load, f in enumerate(d.load_pmf.tolist()):
            load_rows.append([str(p), load, repr(f)])
        width = d.dist_max / exp.DIST_BINS
        for b, f in enumerate(d.dist_pmf.tolist()):
            dist_rows.append([str(p), b, repr(b * width), repr((b + 1) * width), repr(f)])
        summary.append([str(p), d.max_load, repr(d.mean_distance)])
    _write_rows(out.file("load_hist.csv"), ["policy", "load", "fraction"], load_rows)
    _write_rows(out.file("dist_hist.csv"), ["policy", "bin", "lo", "hi", "fraction"], dist_rows)
    _write_rows(out.file("distribution_summary.csv"), ["policy", "max_load", "mean_distance"], summary)


def _write_mobility(out, rows):
    _write_rows(
        out.file("mobility.csv"),
        ["velocity", "trials", "mean_max_load", "ci_low", "ci_high"],
        [[repr(r.velocity), r.report.config.trials, repr(r.stats[0]), repr(r.stats[2]), repr(r.stats[3])] for r in rows],
    )


# ---------------------------------------------------------------------------
# sweep

SWEEP_KEYS = {"n_values", "policies", "trials", "seed", "placement", "k_fixed"}


def sweep_expectations(sweep):
    """Check the growth-law orderings the sweep is meant to exhibit.

    Returns ``[(description, passed), ...]``; empty when the series are too
    short to judge.
    """
    checks = []
    for p in sweep.policies:
        r1, r2 = sweep.trends(p)
        if not r1.sufficient:
            continue
        if p in (POT, DPOT):
            checks.append((f"{p} r1 strictly decreasing", r1.strictly_decreasing))
        if p == SPOT:
            checks.append((f"{p} r2 strictly increasing", r2.strictly_increasing))
    log_k = kspot()
    if {POT, SPOT, log_k} <= set(sweep.policies):
        ns = sorted({r.n for r in sweep.rows})
        between = all(
            sweep.row(n, POT).mean_max_load <= sweep.row(n, log_k).mean_max_load <= sweep.row(n, SPOT).mean_max_load
            for n in ns
        )
        checks.append(("kSPOT(ln n) between POT and sPOT at every n", between))
    return checks


def cmd_sweep(args):
    try:
        cfg = _read_config(args.config, SWEEP_KEYS)
        default_n = FULL_SWEEP_N if args.full else DEFAULT_SWEEP_N
        n_values = cfg.get("n_values", _int_list, list(default_n))
        trials = cfg.get("trials", int, 50)
        seed = cfg.get("seed", int, 0)
        placement = cfg.get("placement", str, "uniform")
        k_fixed = cfg.get("k_fixed", int)
        policies = cfg.get("policies", _policy_list, [POT, SPOT, DPOT, kspot()])
        if trials < 1:
            raise ConfigError("trials must be >= 1")
        if placement not in ("uniform", "grid"):
            raise ConfigError(f"unknown placement {placement!r}")
        if not n_values or any(n < 16 for n in n_values) or n_values != sorted(set(n_values)):
            raise ConfigError("n_values must be strictly ascending and each >= 16")
        if k_fixed is not None and k_fixed < 2:
            raise ConfigError("k_fixed must be >= 2")
    except (ConfigError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE

    out = OutputDir(args.out, "sweep")
    try:
        if k_fixed is not None:
            res = exp.run_conjecture_probe(n_values, k_fixed, trials, seed, placement, workers=args.threads)
            sweep = res.sweep
            lines = exp.verdict_lines(sweep) + [f"conjecture k={k_fixed}\t{res.verdict}"]
            lines += [f"paired kSPOT:{k_fixed}-sPOT n={n}\tmean={m:.4f}\tci=[{lo:.4f}, {hi:.4f}]"
                      for n, m, lo, hi in res.paired_differences]
            checks = []
        else:
            sweep = exp.run_scaling_sweep(n_values, trials, policies, seed, placement, workers=args.threads)
            checks = sweep_expectations(sweep)
            lines = exp.verdict_lines(sweep) + [f"check\t{d}\t{'pass' if ok else 'FAIL'}" for d, ok in checks]
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    exp.write_growth_csv(out.file("growth.csv"), sweep)
    with open(out.file("verdicts.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    if args.gnuplot:
        _gnuplot(out, "plot.gp", "set logscale x\nplot 'growth.csv' using 1:3 with points title 'mean max load'\n")
    out.write_manifest(cfg.echo(), seed, {"n_values": n_values})
    for line in lines:
        print(line)
    print(f"output: {out.path}")
    return EXIT_OK if all(ok for _, ok in checks) else EXIT_FAIL


# ---------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="spatialpot", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="check a geometric or balls-and-bins property")
    v.add_argument("target", choices=sorted(VERIFY_TARGETS))
    v.add_argument("--side", type=int, default=8)
    v.add_argument("--n", type=int, default=64)
    v.add_argument("--probes", type=int, default=10**6)
    v.add_argument("--seed", type=int, default=1)
    v.add_argument("--balls", type=int, default=16)
    v.add_argument("--trials", type=int, default=100_000)
    v.add_argument("--vectors", type=int, default=20)
    v.add_argument("--tolerance", type=float, default=0.05, help="relative tolerance (grid-lemma1)")
    v.add_argument("--abs-tolerance", type=float, default=0.01, help="absolute tolerance (conditional-quarter)")
    v.add_argument("--out", default="runs")
    v.set_defaults(func=cmd_verify)

    for name, func, text in (("run", cmd_run, "run an experiment config"), ("sweep", cmd_sweep, "run a growth sweep")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config")
        p.add_argument("--out", default="runs")
        p.add_argument("--threads", type=int, default=1, help="worker processes; results do not depend on it")
        p.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")
        if name == "sweep":
            p.add_argument("--full", action="store_true", help="default n range up to 40000")
        p.set_defaults(func=func)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        bad = [k for k in ("side", "n", "probes", "balls", "trials", "vectors") if getattr(args, k) < 1]
        if bad or (args.target in ("grid-lemma1", "conditional-quarter", "grid-regularity") and args.side < 3):
            print(f"usage error: invalid {bad or ['side']}", file=sys.stderr)
            return EXIT_USAGE
    if getattr(args, "threads", 1) < 1:
        print("usage error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
