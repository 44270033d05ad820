import json
import os
import subprocess
import sys

import pytest

from spatialpot import cli


def run(argv):
    return cli.main([str(a) for a in argv])


def only_dir(root, prefix):
    dirs = sorted(d for d in os.listdir(root) if d.startswith(prefix))
    return [os.path.join(root, d) for d in dirs]


def write(path, text):
    path.write_text(text)
    return path


def csv_bodies(d):
    return {f: open(os.path.join(d, f), "rb").read() for f in sorted(os.listdir(d)) if f.endswith(".csv")}


# ---------------------------------------------------------------------------
# config parsing


def test_parse_config_comments_and_blanks():
    cfg = cli.parse_config("# header\n\nn = 64   # servers\nseed=3\n")
    assert cfg == {"n": ("64", 3), "seed": ("3", 4)}


@pytest.mark.parametrize(
    "text, line",
    [("n = 64\njunk\n", 2), ("n =\n", 1), ("n = 1\nn = 2\n", 2), ("= 3\n", 1)],
)
def test_parse_config_errors_carry_line_numbers(text, line):
    with pytest.raises(cli.ConfigError, match=f"line {line}"):
        cli.parse_config(text)


@pytest.mark.parametrize(
    "text",
    [
        "n = 64\nbogus = 1\n",
        "n = x\n",
        "n = 64\ntrials = 0\n",
        "placement = grid\nn = 50\n",
        "experiment = nope\nn = 64\n",
        "trials = 2\n",
        "n = 64\npolicy = XYZ\n",
        "experiment = mobility\nn = 64\nmodel = levy\n",
    ],
)
def test_run_config_errors_exit_2(tmp_path, text, capsys):
    cfg = write(tmp_path / "c.conf", text)
    assert run(["run", cfg, "--out", tmp_path / "out"]) == 2
    assert "config error" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_missing_config_file_exits_2(tmp_path):
    assert run(["run", tmp_path / "absent.conf"]) == 2


def test_usage_errors_exit_2(tmp_path):
    with pytest.raises(SystemExit) as e:
        run(["verify", "no-such-target"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        run([])
    assert e.value.code == 2
    assert run(["verify", "grid-lemma1", "--probes", 0, "--out", tmp_path]) == 2
    cfg = write(tmp_path / "c.conf", "n = 16\n")
    assert run(["run", cfg, "--threads", 0, "--out", tmp_path]) == 2


# ---------------------------------------------------------------------------
# run


def test_run_scenario_outputs_and_manifest(tmp_path):
    cfg = write(tmp_path / "c.conf", "n = 64\npolicy = dPOT\ntrials = 3\nseed = 5\n")
    assert run(["run", cfg, "--out", tmp_path / "out", "--gnuplot"]) == 0
    (d,) = only_dir(tmp_path / "out", "run-scenario")
    meta = json.load(open(os.path.join(d, "meta.json")))
    assert meta["files"] == ["dist_hist.csv", "load_hist.csv", "plot.gp", "summary.csv"]
    assert meta["seed"] == 5 and meta["config"]["policy"] == "dPOT"
    assert {"version", "timestamp", "wall_time_s"} <= set(meta)
    assert sorted(os.listdir(d)) == sorted(meta["files"] + ["meta.json"])
    lines = open(os.path.join(d, "summary.csv")).read().splitlines()
    assert len(lines) == 2 and lines[1].startswith("dPOT,64,3,")


def test_run_twice_gives_new_dirs_and_identical_csvs(tmp_path):
    cfg = write(tmp_path / "c.conf", "experiment = tradeoff\nn = 49\nplacement = grid\ntrials = 2\nseed = 1\n")
    assert run(["run", cfg, "--out", tmp_path]) == 0
    assert run(["run", cfg, "--out", tmp_path, "--threads", 2]) == 0
    a, b = only_dir(tmp_path, "run-tradeoff")
    assert a != b
    assert csv_bodies(a) == csv_bodies(b)
    assert len(open(os.path.join(a, "summary.csv")).read().splitlines()) == 7


def test_run_distribution(tmp_path):
    cfg = write(tmp_path / "c.conf", "experiment = distribution\nn = 300\nseed = 7\n")
    assert run(["run", cfg, "--out", tmp_path]) == 0
    (d,) = only_dir(tmp_path, "run-distribution")
    summary = open(os.path.join(d, "distribution_summary.csv")).read().splitlines()
    assert [s.split(",")[0] for s in summary[1:]] == ["dPOT", "POT", "sPOT"]
    dist = open(os.path.join(d, "dist_hist.csv")).read().splitlines()
    assert len(dist) == 1 + 3 * 100


def test_run_mobility(tmp_path):
    cfg = write(tmp_path / "c.conf", "experiment = mobility\nn = 36\ntrials = 4\nvelocities = 0.01, 0.1\n")
    assert run(["run", cfg, "--out", tmp_path]) == 0
    (d,) = only_dir(tmp_path, "run-mobility")
    rows = open(os.path.join(d, "mobility.csv")).read().splitlines()
    assert rows[0] == "velocity,trials,mean_max_load,ci_low,ci_high" and len(rows) == 3


# ---------------------------------------------------------------------------
# sweep


def test_sweep_single_point_is_insufficient(tmp_path, capsys):
    cfg = write(tmp_path / "s.conf", "n_values = 64\ntrials = 2\npolicies = POT, sPOT\n")
    assert run(["sweep", cfg, "--out", tmp_path]) == 0
    (d,) = only_dir(tmp_path, "sweep")
    assert "insufficient points" in open(os.path.join(d, "verdicts.txt")).read()
    head = open(os.path.join(d, "growth.csv")).readline().strip()
    assert head == "n,policy,mean_max_load,se,r1,r2,note"


def test_sweep_exit_reflects_trend_checks(tmp_path):
    cfg = write(tmp_path / "s.conf", "n_values = 36, 100\ntrials = 3\nseed = 2\n")
    code = run(["sweep", cfg, "--out", tmp_path])
    (d,) = only_dir(tmp_path, "sweep")
    checks = [l for l in open(os.path.join(d, "verdicts.txt")).read().splitlines() if l.startswith("check")]
    assert len(checks) == 4
    assert code == (1 if any(l.endswith("FAIL") for l in checks) else 0)


def test_sweep_conjecture_probe(tmp_path):
    cfg = write(tmp_path / "s.conf", "n_values = 36, 64\ntrials = 2\nk_fixed = 3\n")
    assert run(["sweep", cfg, "--out", tmp_path]) == 0
    (d,) = only_dir(tmp_path, "sweep")
    text = open(os.path.join(d, "verdicts.txt")).read()
    assert "conjecture k=3" in text and "paired kSPOT:3-sPOT n=64" in text


@pytest.mark.parametrize("text", ["trials = 0\n", "n_values = 100, 50\n", "n_values = 8\n", "k_fixed = 1\n"])
def test_sweep_config_errors(tmp_path, text):
    assert run(["sweep", write(tmp_path / "s.conf", text), "--out", tmp_path]) == 2


# ---------------------------------------------------------------------------
# verify


def test_verify_grid_regularity(tmp_path):
    assert run(["verify", "grid-regularity", "--side", 16, "--out", tmp_path]) == 0
    (d,) = only_dir(tmp_path, "verify-grid-regularity")
    assert open(os.path.join(d, "report.txt")).read().rstrip().endswith("PASS")
    assert len(open(os.path.join(d, "edges.txt")).read().splitlines()) == 512


def test_verify_statistical_failure_exits_1(tmp_path):
    # 200 probes cannot resolve 128 edge probabilities to 5%
    assert run(["verify", "grid-lemma1", "--probes", 200, "--out", tmp_path]) == 1


def test_verify_small_runs(tmp_path):
    assert run(["verify", "second-order-cells", "--n", 30, "--probes", 20000, "--out", tmp_path]) == 0
    assert run(["verify", "schur", "--vectors", 3, "--trials", 2000, "--out", tmp_path]) == 0
    (d,) = only_dir(tmp_path, "verify-schur")
    assert len(open(os.path.join(d, "schur.csv")).read().splitlines()) == 4


def test_console_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "spatialpot.cli", "verify", "grid-regularity", "--side", "3", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert out.returncode == 0 and "PASS" in out.stdout
