import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distpdvrp.instance import (InstanceError, PdvrpInstance, Vehicle, build_task_graph, two_robot_instance,
                                generate_mixed_fleet_instance, generate_random_instance, local_graph,
                                local_request_set, make_requests, uncovered_requests)


def test_generation_is_deterministic():
    a = generate_random_instance(7, 2, 2, area=(0, 0, 1, 1), capacity_range=(5, 10), demand_range=(1, 5))
    b = generate_random_instance(7, 2, 2, area=(0, 0, 1, 1), capacity_range=(5, 10), demand_range=(1, 5))
    assert a.to_json() == b.to_json()
    assert generate_random_instance(8, 2, 2).to_json() != a.to_json()


def test_service_times_and_layout():
    for seed in range(20):
        inst = generate_random_instance(seed, 3, 4)
        assert np.all((inst.service[1:-1] >= 3.0) & (inst.service[1:-1] <= 5.0))
        x0, _, x1, _ = (0.0, 0.0, 50.0, 50.0)
        mid = 0.5 * (x0 + x1)
        for r in inst.requests:
            if r.kind == "pickup":
                assert r.position[0] >= mid
            else:
                assert r.position[0] <= mid


def test_homogeneous_capacity_dominates_demand():
    for seed in range(100):
        inst = generate_random_instance(seed, 3, 3)
        caps = min(v.capacity for v in inst.vehicles)
        assert caps >= max(r.demand for r in inst.requests)


def test_generator_rejects_bad_input():
    with pytest.raises(InstanceError):
        generate_random_instance(0, 2, 2, area=(0, 0, 0, 5))
    with pytest.raises(InstanceError):
        generate_random_instance(0, 2, 2, capacity_range=(3, 4), demand_range=(1, 5))
    with pytest.raises(InstanceError):
        generate_random_instance(0, 0, 2)


def test_vertex_numbering_and_costs():
    inst = two_robot_instance()
    assert (inst.n_pickups, inst.n_requests, inst.sigma) == (2, 4, 5)
    assert inst.demand[1] == 1.0 and inst.demand[3] == -1.0
    assert inst.demand[0] == 0.0 and inst.demand[5] == 0.0
    c = inst.costs[0]
    assert c[0, 1] == pytest.approx(10.0)
    assert c[1, 3] == pytest.approx(20.0)
    assert c[3, 5] == 0.0  # virtual end
    assert np.allclose(inst.travel_times, inst.costs / 0.2)


@given(st.integers(1, 6))
def test_task_graph_edge_count(npk):
    nr = 2 * npk
    inst = generate_random_instance(0, 1, npk)
    g = build_task_graph(inst)
    assert len(g.edges) == (nr + 1) ** 2 - nr
    assert all(j != k and j != nr + 1 and k != 0 for j, k in g.edges)
    g.check()


def test_two_robot_graph_has_optimal_arcs():
    g = build_task_graph(two_robot_instance())
    for arc in [(0, 1), (1, 3), (3, 5), (0, 2), (2, 4), (4, 5)]:
        assert arc in g.edges


def test_serialization_roundtrip(tmp_path):
    inst = generate_random_instance(3, 3, 3)
    path = inst.save(tmp_path / "inst.json")
    back = PdvrpInstance.load(path)
    assert back.to_dict() == inst.to_dict()
    assert back.vehicles == inst.vehicles and back.requests == inst.requests
    data = json.loads(path.read_text())
    assert data["format_version"] == 1


def test_local_request_sets():
    vehicles = (Vehicle(0, (0, 0), 10.0), Vehicle(1, (0, 0), 2.0))
    reqs = make_requests([(5, 0), (5, 1)], [(1, 0), (1, 1)], [1.0, 5.0], [3, 3, 3, 3])
    inst = PdvrpInstance(vehicles, tuple(reqs), heterogeneous=True)
    assert local_request_set(inst, 0) == (0, 1, 2, 3)
    assert local_request_set(inst, 1) == (0, 2)
    assert local_graph(inst, 1).vertices == (0, 1, 3, 5)
    assert uncovered_requests(inst) == []


def test_homogeneous_instance_requires_capacity():
    vehicles = (Vehicle(0, (0, 0), 2.0),)
    reqs = make_requests([(5, 0)], [(1, 0)], [5.0], [3, 3])
    with pytest.raises(InstanceError):
        PdvrpInstance(vehicles, tuple(reqs))


def test_uncoverable_heterogeneous_instance():
    vehicles = (Vehicle(0, (0, 0), 2.0),)
    reqs = make_requests([(5, 0)], [(1, 0)], [5.0], [3, 3])
    inst = PdvrpInstance(vehicles, tuple(reqs), heterogeneous=True)
    assert uncovered_requests(inst) == [0, 1]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 5), st.integers(1, 5))
def test_mixed_fleet_is_heterogeneous_and_coverable(seed, n, npk):
    inst = generate_mixed_fleet_instance(seed, n, npk)
    assert inst.heterogeneous
    assert min(v.capacity for v in inst.vehicles) < max(inst.demand)
    assert uncovered_requests(inst) == []
