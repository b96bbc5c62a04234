import json
import subprocess
import sys

import pytest

from distpdvrp.cli import main


@pytest.fixture
def instance_file(tmp_path):
    path = tmp_path / "inst.json"
    assert main(["gen", "--seed", "3", "--vehicles", "2", "--pickups", "2", "--out", str(path)]) == 0
    return path


def test_gen_prints_json(capsys):
    assert main(["gen", "--seed", "1", "--vehicles", "2", "--pickups", "1"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert len(data["vehicles"]) == 2 and len(data["pickups"]) == 1


@pytest.mark.parametrize("method", ["bnb", "dp"])
def test_solve_central_then_evaluate(instance_file, tmp_path, capsys, method):
    out = tmp_path / f"{method}.json"
    assert main(["solve-central", "--instance", str(instance_file), "--method", method, "--out", str(out)]) == 0
    sol = json.loads(out.read_text())
    assert len(sol["vehicles"]) == 2
    capsys.readouterr()
    assert main(["evaluate", "--instance", str(instance_file), "--solution", str(out)]) == 0
    assert "feasible True" in capsys.readouterr().out


def test_lp_export(instance_file, tmp_path):
    lp = tmp_path / "fleet.lp"
    assert main(["solve-central", "--instance", str(instance_file), "--method", "dp", "--export-lp", str(lp)]) == 0
    text = lp.read_text()
    assert "Minimize" in text and "Generals" in text and text.rstrip().endswith("End")


def test_central_methods_agree(instance_file, tmp_path):
    costs = []
    for method in ("bnb", "dp"):
        out = tmp_path / f"{method}.json"
        main(["solve-central", "--instance", str(instance_file), "--method", method, "--out", str(out)])
        costs.append(json.loads(out.read_text())["cost"])
    assert costs[0] == pytest.approx(costs[1], abs=1e-6)


def test_evaluate_rejects_bad_plan(instance_file, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"vehicles": [{"vehicle": 0, "route": [0, 5]}, {"vehicle": 1, "route": [0, 5]}]}))
    assert main(["evaluate", "--instance", str(instance_file), "--solution", str(bad)]) == 1
    assert "not covered" in capsys.readouterr().out


def test_solve_distributed_with_trace(tmp_path, capsys):
    trace = tmp_path / "trace.jsonl"
    code = main(["solve-distributed", "--seed", "2", "--vehicles", "3", "--pickups", "2",
                 "--iterations", "20", "--graph", "cycle", "--trace", str(trace)])
    assert code == 0
    assert len(trace.read_text().splitlines()) == 20 * 3
    out = capsys.readouterr().out
    assert "actuated cost" in out and "drift" in out


def test_montecarlo_command(tmp_path, capsys):
    csv_path = tmp_path / "mc.csv"
    code = main(["montecarlo", "--vehicles", "2", "--pickups", "1", "--trials", "2", "--iterations", "10",
                 "--out", str(csv_path)])
    assert code == 0
    assert len(csv_path.read_text().splitlines()) == 3
    assert "mean_err" in capsys.readouterr().out


def test_console_module_runs():
    proc = subprocess.run([sys.executable, "-m", "distpdvrp.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("gen", "solve-central", "solve-distributed", "montecarlo", "evaluate"):
        assert cmd in proc.stdout
