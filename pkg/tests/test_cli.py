import csv
import json
import subprocess
import sys

import pytest

from pelletsc.cli import main
from pelletsc.harness import SolveOptions, UsageError, quality_direction


@pytest.fixture(scope="module")
def t1_file(tmp_path_factory):
    out = tmp_path_factory.mktemp("t1")
    assert main(["gen-instance", "--preset", "t1", "--out", str(out)]) == 0
    return out / "T1.json"


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_gen_instance_explicit_sizes(tmp_path):
    code = main(["gen-instance", "--suppliers", "2", "--depots", "2", "--periods", "1",
                 "--scenarios", "2", "--name", "tiny", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "tiny.json").exists()
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["command"] == "gen-instance" and man["outputs"] == ["tiny.json"]


def test_empty_index_set_is_usage_error(tmp_path, capsys):
    code = main(["gen-instance", "--suppliers", "0", "--depots", "2", "--periods", "1",
                 "--out", str(tmp_path)])
    assert code == 2
    assert _err(capsys)["error"] == "usage"


def test_solve_exact_t1(t1_file, tmp_path):
    out = tmp_path / "run"
    assert main(["solve", str(t1_file), "--algo", "exact", "--out", str(out)]) == 0
    sol = json.loads((out / "solution.json").read_text())
    assert sol["status"] == "optimal"
    assert sol["objective"] == pytest.approx(144.5)
    assert sol["y"] == [[1, 0]]
    assert sol["residuals"]["passed"]
    man = json.loads((out / "manifest.json").read_text())
    assert man["exit_code"] == 0 and len(man["inputs"][str(t1_file)]) == 64


def test_solve_pha_writes_trace(t1_file, tmp_path):
    out = tmp_path / "pha"
    assert main(["solve", str(t1_file), "--algo", "pha-hr", "--out", str(out)]) == 0
    lines = (out / "trace.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["iter"] == 0


def test_iteration_limit_exit_code(tmp_path):
    main(["gen-instance", "--suppliers", "3", "--depots", "3", "--periods", "2", "--biomass", "1",
          "--ranges", "2", "--scenarios", "4", "--seed", "101", "--name", "h", "--out", str(tmp_path)])
    code = main(["solve", str(tmp_path / "h.json"), "--algo", "pha", "--iter-limit", "1",
                 "--gap-tol", "1e-9", "--out", str(tmp_path / "o")])
    sol = json.loads((tmp_path / "o" / "solution.json").read_text())
    assert (code, sol["status"]) in ((4, "limit"), (0, "feasible"))


def test_parallel_requires_saa(t1_file, tmp_path, capsys):
    code = main(["solve", str(t1_file), "--algo", "pha", "--parallel", "scheme1",
                 "--out", str(tmp_path)])
    assert code == 2
    assert "--parallel requires" in _err(capsys)["message"]


def test_unknown_flag_and_missing_file(tmp_path, capsys):
    assert main(["solve", "x.json", "--bogus", "--out", str(tmp_path)]) == 2
    capsys.readouterr()
    assert main(["solve", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2
    assert "file not found" in _err(capsys)["message"]


def test_hybrid_schemes_agree(t1_file, tmp_path):
    docs = []
    for scheme in ("scheme1", "scheme2"):
        out = tmp_path / scheme
        code = main(["solve", str(t1_file), "--algo", "hybrid", "--parallel", scheme,
                     "--workers", "2", "--replications", "3", "--saa-scenarios", "2",
                     "--eval-scenarios", "10", "--executor", "inline", "--out", str(out)])
        assert code == 0
        assert (out / "gantt.csv").exists() and (out / "scheduler.json").exists()
        sol = json.loads((out / "solution.json").read_text())
        sol.pop("wall_time")
        saa = sol["details"]["saa"]
        saa.pop("timing")
        for k in ("scheme", "workers", "executor"):
            saa["config"].pop(k)
        for r in saa["replications"]:
            r.pop("wall_time")
        docs.append(json.dumps(sol, sort_keys=True))
    assert docs[0] == docs[1]


def test_benchmark(t1_file, tmp_path):
    out = tmp_path / "bench"
    code = main(["benchmark", str(t1_file), "--variants", "exact,pha-hr", "--seeds", "0,1",
                 "--out", str(out)])
    assert code == 0
    rows = list(csv.DictReader(open(out / "runs.csv")))
    assert len(rows) == 4 and {r["variant"] for r in rows} == {"exact", "pha-hr"}
    summary = list(csv.reader(open(out / "summary.csv")))
    assert summary[0] == ["metric", "exact", "pha-hr"]
    assert [r[0] for r in summary[1:]] == ["avg_time_s", "avg_gap", "avg_iterations", "n_runs"]


def test_benchmark_unknown_variant(t1_file, tmp_path):
    assert main(["benchmark", str(t1_file), "--variants", "magic", "--out", str(tmp_path)]) == 2


def test_quality_study(t1_file, tmp_path):
    out = tmp_path / "q"
    assert main(["quality-study", str(t1_file), "--scenarios", "3", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "quality.csv")))
    assert [r["variant"] for r in rows] == ["Base", "Good ash", "Bad ash", "Good moisture", "Bad moisture"]
    fig = list(csv.DictReader(open(out / "figure1.csv")))
    assert len(fig) == 4
    doc = json.loads((out / "quality.json").read_text())
    assert set(doc["direction_ok"]) == {"Good ash", "Bad ash", "Good moisture", "Bad moisture"}


def test_quality_direction_logic():
    rows = [{"variant": "Base", "ash_mult": 1, "moist_mult": 1, "expected_cost": 100.0},
            {"variant": "Good ash", "ash_mult": 0.7, "moist_mult": 1, "expected_cost": 100.0},
            {"variant": "Bad ash", "ash_mult": 1.3, "moist_mult": 1, "expected_cost": 99.0}]
    assert quality_direction(rows) == {"Good ash": True, "Bad ash": False}


def test_solve_options_validation():
    with pytest.raises(UsageError):
        SolveOptions(algo="pha", parallel="scheme2")
    with pytest.raises(UsageError):
        SolveOptions(workers=0)
    SolveOptions(algo="saa", parallel="scheme1")


def test_console_entry_point_version():
    out = subprocess.run([sys.executable, "-m", "pelletsc.cli", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "pelletsc" in out.stdout
