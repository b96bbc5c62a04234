import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distpdvrp.bnb import enumerate_routes_oracle
from distpdvrp.evaluate import check_vehicle
from distpdvrp.instance import (PdvrpInstance, Vehicle, two_robot_instance, generate_mixed_fleet_instance,
                                generate_random_instance, local_graph, make_requests)
from distpdvrp.primal_decomp import (Agent, AgentConfig, FinalMilpError, MultiplierMessage, ProtocolError,
                                     build_final_milp, default_penalty, running_average, step_size,
                                     threshold_allocation, update_allocation)
from distpdvrp.simplex import solve_lp


def test_step_size_schedule():
    cfg = AgentConfig()
    assert step_size(0, cfg) == pytest.approx(0.005)
    assert step_size(4, cfg) == pytest.approx(0.001)
    assert step_size(124, cfg) == pytest.approx(0.005 / 125)
    assert step_size(125, cfg) == step_size(249, cfg) == pytest.approx(0.005 / 125)
    with pytest.raises(ValueError):
        step_size(-1, cfg)


def test_update_worked_example():
    y = np.array([0.45])
    out = update_allocation(y, np.array([10.0]), [np.array([0.0])], 0.005)
    assert out[0] == pytest.approx(0.40)
    # equal multipliers leave y alone
    assert update_allocation(y, np.array([3.0]), [np.array([3.0]), np.array([3.0])], 0.1)[0] == 0.45


@settings(max_examples=50)
@given(st.integers(2, 6), st.integers(1, 5), st.floats(1e-4, 0.1), st.integers(0, 1000))
def test_updates_conserve_the_total_on_symmetric_graphs(n, nr, alpha, seed):
    rng = np.random.default_rng(seed)
    y = rng.uniform(-1, 1, (n, nr))
    mu = rng.uniform(0, 50, (n, nr))
    nbrs = [[(i - 1) % n, (i + 1) % n] if n > 2 else [1 - i] for i in range(n)]
    new = np.array([update_allocation(y[i], mu[i], [mu[l] for l in nbrs[i]], alpha) for i in range(n)])
    assert np.allclose(new.sum(axis=0), y.sum(axis=0), atol=1e-12)


def test_running_average_and_empty_window():
    assert np.allclose(running_average(np.array([2.0, 4.0]), 2.0), [1.0, 2.0])
    with pytest.raises(ValueError):
        running_average(np.zeros(2), 0.0)


def test_thresholding():
    y = np.array([1.3, -0.2, 0.4, 0.7])
    assert np.allclose(threshold_allocation(y), [1.0, -0.2, 0.4, 0.7])
    mask = np.array([True, True, False, False])
    assert np.allclose(threshold_allocation(y, mask), [1.0, -0.2, 0.0, 0.0])


def test_config_validation():
    for bad in (dict(delta=1.0), dict(delta=0.0), dict(penalty=-1.0), dict(iterations=0),
                dict(final_solver="x"), dict(hull="x"), dict(step_k=0.0)):
        with pytest.raises(ValueError):
            AgentConfig(**bad)
    assert AgentConfig().average_from == 126
    assert not AgentConfig(iterations=100).uses_average


@pytest.mark.parametrize("hull", ["exact", "relaxed"])
def test_zero_allocation_needs_no_slack(hull):
    inst = generate_random_instance(2, 3, 2)
    agent = Agent(inst, 0, AgentConfig(hull=hull))
    agent.y = np.zeros(inst.n_requests)
    res = agent.solve_subproblem()
    assert res.v == pytest.approx(0.0, abs=1e-9)
    assert res.objective == pytest.approx(0.0, abs=1e-9)
    assert np.all(res.mu >= -1e-9) and np.all(res.mu <= agent.penalty + 1e-7)


@pytest.mark.parametrize("hull", ["exact", "relaxed"])
def test_multipliers_bounded_by_penalty(hull):
    inst = generate_random_instance(5, 3, 3)
    agent = Agent(inst, 1, AgentConfig(hull=hull, penalty=40.0))
    for y in (np.full(inst.n_requests, 0.3), np.full(inst.n_requests, 5.0), np.linspace(-1, 2, inst.n_requests)):
        agent.y = y
        res = agent.solve_subproblem()
        assert np.all(res.mu >= -1e-7) and np.all(res.mu <= 40.0 + 1e-6)
        # the multipliers of all coverage rows add up to at most the penalty
        assert res.mu.sum() <= 40.0 + 1e-6


def test_exact_hull_is_tighter_than_relaxation():
    for seed in range(5):
        inst = generate_random_instance(seed, 2, 2)
        a = Agent(inst, 0, AgentConfig(hull="exact"))
        b = Agent(inst, 0, AgentConfig(hull="relaxed"), penalty=a.penalty)
        rng = np.random.default_rng(seed)
        y = rng.uniform(0, 1, inst.n_requests)
        a.y, b.y = y, y.copy()
        assert a.solve_subproblem().objective >= b.solve_subproblem().objective - 1e-7


def test_exact_hull_value_at_integer_allocation():
    """At y = indicator of one pair, the hull LP value is that pair's cheapest route."""
    inst = two_robot_instance()
    agent = Agent(inst, 0, AgentConfig())
    agent.y = np.array([1.0, 0.0, 1.0, 0.0])
    assert agent.solve_subproblem().objective == pytest.approx(agent.table[0b01][0])


def test_final_route_examples():
    inst = two_robot_instance()
    agent = Agent(inst, 0, AgentConfig())
    fr = agent.final_route(np.array([0.9, 0.0, 0.9, -0.3]))
    assert fr.route == [0, 1, 3, 5]
    assert fr.cost == pytest.approx(30.0)
    assert agent.final_route(np.zeros(4)).route == [0, 5]
    with pytest.raises(ValueError):
        agent.final_route(np.array([1.5, 0, 0, 0]))


def test_final_solvers_agree():
    for seed in range(6):
        inst = generate_random_instance(seed, 2, 2)
        rng = np.random.default_rng(seed)
        y_end = np.where(rng.random(inst.n_requests) < 0.5, 0.7, -0.1)
        a = Agent(inst, 0, AgentConfig(final_solver="bnb"))
        b = Agent(inst, 0, AgentConfig(final_solver="dp"))
        ra, rb = a.final_route(y_end), b.final_route(y_end)
        assert ra.cost == pytest.approx(rb.cost, abs=1e-6)
        assert check_vehicle(inst, ra.solution) == [] and check_vehicle(inst, rb.solution) == []


def test_auto_solver_choice():
    assert Agent(generate_random_instance(0, 2, 2), 0, AgentConfig()).solver_for_final() == "bnb"
    assert Agent(generate_random_instance(0, 2, 4), 0, AgentConfig()).solver_for_final() == "dp"


def test_final_milp_rejects_allocation_outside_local_set():
    vehicles = (Vehicle(0, (0, 0), 10.0), Vehicle(1, (0, 0), 2.0))
    reqs = make_requests([(5, 0), (5, 1)], [(1, 0), (1, 1)], [1.0, 5.0], [3, 3, 3, 3])
    inst = PdvrpInstance(vehicles, tuple(reqs), heterogeneous=True)
    with pytest.raises(FinalMilpError):
        build_final_milp(inst, local_graph(inst, 1), 1, np.array([0.0, 0.5, 0.0, 0.0]))
    agent = Agent(inst, 1, AgentConfig())
    assert np.allclose(agent.thresholded(np.array([0.5, 0.5, 0.5, 0.5])), [0.5, 0.0, 0.5, 0.0])


def test_single_agent_serves_everything():
    inst = generate_random_instance(3, 1, 3)
    agent = Agent(inst, 0, AgentConfig(iterations=1))
    agent.solve_subproblem()
    agent.receive([], [])
    fr = agent.final_route(agent.thresholded())
    ref, _ = enumerate_routes_oracle(inst)
    assert fr.cost == pytest.approx(ref)


def test_protocol_errors():
    inst = generate_random_instance(0, 3, 2)
    agents = [Agent(inst, i, AgentConfig()) for i in range(3)]
    with pytest.raises(ProtocolError):
        agents[0].outbound()
    for a in agents:
        a.solve_subproblem()
    msgs = [a.outbound() for a in agents]
    with pytest.raises(ProtocolError):
        agents[0].receive([msgs[1]], [1, 2])  # missing 2
    with pytest.raises(ProtocolError):
        agents[0].receive([msgs[1], msgs[1], msgs[2]], [1, 2])
    stale = MultiplierMessage(1, 5, msgs[1].mu)
    with pytest.raises(ProtocolError):
        agents[0].receive([stale, msgs[2]], [1, 2])
    agents[0].receive([msgs[2], msgs[1]], [1, 2])
    assert agents[0].t == 1


def test_default_penalty_scales_with_costs():
    inst = generate_random_instance(0, 2, 2)
    big = generate_random_instance(0, 2, 2, area=(0, 0, 500, 500))
    assert default_penalty(big) == pytest.approx(10 * default_penalty(inst))


def test_warm_started_subproblem_matches_cold():
    inst = generate_mixed_fleet_instance(1, 3, 3)
    agent = Agent(inst, 2, AgentConfig())
    rng = np.random.default_rng(0)
    for _ in range(5):
        agent.y = rng.uniform(-0.5, 1.5, inst.n_requests)
        warm = agent.solve_subproblem()
        cold = solve_lp(agent.template.with_rhs(agent.coupling_rows, agent.y))
        assert warm.objective == pytest.approx(cold.objective, abs=1e-8)
