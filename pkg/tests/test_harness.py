import dataclasses
import math

import pytest

from distpdvrp.harness import (Cell, TrialConfig, aggregate, centralized_optimum, empirical_T_delta,
                               read_csv, run_montecarlo, run_trial, write_csv)
from distpdvrp.instance import two_robot_instance, generate_random_instance
from distpdvrp.network import run_distributed
from distpdvrp.primal_decomp import AgentConfig


def test_two_robot_trial_has_zero_error():
    res = run_trial(TrialConfig(seed=0, n_vehicles=2, n_pickups=2), instance=two_robot_instance())
    assert res.feasible and res.usable
    assert res.optimal_cost == pytest.approx(60.0)
    assert res.relative_error == pytest.approx(0.0, abs=1e-9)
    assert res.actuated_error == pytest.approx(0.0, abs=1e-9)
    assert res.t_delta == 0


def test_trials_are_deterministic():
    cfg = TrialConfig(seed=5, n_vehicles=3, n_pickups=2, iterations=60, probe_every=20)
    a, b = run_trial(cfg), run_trial(cfg)
    skip = {"time_distributed", "time_baseline"}
    for f in dataclasses.fields(a):
        if f.name not in skip:
            assert getattr(a, f.name) == getattr(b, f.name), f.name


def test_baselines_agree():
    inst = generate_random_instance(9, 2, 2)
    assert centralized_optimum(inst, "dp") == pytest.approx(centralized_optimum(inst, "bnb"), abs=1e-6)
    with pytest.raises(ValueError):
        centralized_optimum(inst, "magic")


def test_t_delta_definition():
    run = run_distributed(two_robot_instance(), AgentConfig(iterations=30))
    t, probes = empirical_T_delta(run, 10)
    assert sorted(probes) == [0, 10, 20, 30]
    assert t == 0 and all(probes.values())
    with pytest.raises(ValueError):
        empirical_T_delta(run, 0)


def test_montecarlo_csv_roundtrip(tmp_path):
    template = TrialConfig(seed=0, n_vehicles=1, n_pickups=1, iterations=20, probe_every=10)
    path = tmp_path / "mc.csv"
    results = run_montecarlo([Cell(2, 2), Cell(3, 1, 0.8)], 2, 0, template, path)
    assert len(results) == 4
    back = read_csv(path)
    assert back == results
    assert aggregate(back) == aggregate(results)
    table = aggregate(results)
    assert set(table) == {(2, 2, 0.9), (3, 1, 0.8)}
    assert table[(2, 2, 0.9)]["trials"] == 2


def test_failed_trials_are_recorded(tmp_path):
    # a heterogeneous sweep over an impossible size fails during generation
    template = TrialConfig(seed=0, n_vehicles=1, n_pickups=1, iterations=5, heterogeneous=True)
    results = run_montecarlo([Cell(1, 1)], 1, 0, dataclasses.replace(template, area=(0, 0, 0, 0)))
    assert results[0].status == "error" and not results[0].usable
    assert math.isnan(aggregate(results)[(1, 1, 0.9)]["mean_error"])
    write_csv(results, tmp_path / "e.csv")
    assert read_csv(tmp_path / "e.csv")[0].status == "error"
