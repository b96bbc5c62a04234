"""Independent feasibility checker for fleet solutions.

Works on the original (implication) form of the route constraints and rebuilds
the admissible arc set from its definition, so it shares no code with the
linear model builders it is used to audit.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .instance import PdvrpInstance, local_request_set
from .milp import RouteSolution

TOL = 1e-6


def admissible_arcs(n_requests: int, requests: Iterable[int]) -> set[tuple[int, int]]:
    sigma = n_requests + 1
    verts = [0, sigma] + [r + 1 for r in requests]
    return {(j, k) for j in verts for k in verts if j != k and j != sigma and k != 0}


def allowed_requests(instance: PdvrpInstance, i: int) -> tuple[int, ...]:
    if instance.heterogeneous:
        return local_request_set(instance, i)
    return tuple(range(instance.n_requests))


def check_vehicle(instance: PdvrpInstance, sol: RouteSolution, tol: float = TOL) -> list[str]:
    """Violations of vehicle ``sol.vehicle``'s local constraints (empty if in Z_i)."""
    i = sol.vehicle
    allowed = allowed_requests(instance, i)
    arcs = admissible_arcs(instance.n_requests, allowed)
    sigma = instance.n_requests + 1
    npk = instance.n_pickups
    cap = instance.vehicles[i].capacity
    q = instance.demand
    d = instance.service
    t = instance.travel_times[i]
    bad = []

    x = {}
    for arc, v in sol.x.items():
        if v > tol and arc not in arcs:
            bad.append(f"v{i}: uses inadmissible arc {arc}")
        if min(abs(v), abs(v - 1.0)) > tol:
            bad.append(f"v{i}: x{arc}={v} not binary")
        x[arc] = 1 if v > 0.5 else 0

    def out(j):
        return sum(v for (a, _), v in x.items() if a == j)

    def inn(k):
        return sum(v for (_, b), v in x.items() if b == k)

    if out(0) != 1:
        bad.append(f"v{i}: leaves s {out(0)} times")
    if inn(sigma) != 1:
        bad.append(f"v{i}: enters sigma {inn(sigma)} times")
    for r in allowed:
        v = r + 1
        if inn(v) != out(v):
            bad.append(f"v{i}: flow imbalance at {v}")
    for r in range(instance.n_requests):
        if r not in allowed and (out(r + 1) or inn(r + 1)):
            bad.append(f"v{i}: visits request {r} outside its local set")
    for p in range(1, npk + 1):
        if out(p) != out(p + npk):
            bad.append(f"v{i}: pickup {p} and delivery {p + npk} not served together")

    B, Q = sol.B, sol.Q
    verts = [0, sigma] + [r + 1 for r in allowed]
    for v in verts:
        if B.get(v, 0.0) < -tol:
            bad.append(f"v{i}: negative begin time at {v}")
        lo, hi = max(0.0, q[v]), min(cap, cap + q[v])
        qv = Q.get(v, lo)
        if qv < lo - tol or qv > hi + tol:
            bad.append(f"v{i}: load {qv:.6g} at {v} outside [{lo:.6g}, {hi:.6g}]")
    for r in allowed:
        p = r + 1
        if p <= npk and B[p] > B[p + npk] + tol:
            bad.append(f"v{i}: delivery {p + npk} begins before pickup {p}")
    for (j, k), v in x.items():
        if not v:
            continue
        if B[k] < B[j] + d[j] + t[j, k] - tol:
            bad.append(f"v{i}: time not propagated on {(j, k)}")
        if abs(Q[k] - (Q[j] + q[k])) > tol:
            bad.append(f"v{i}: load not propagated on {(j, k)}")
    if abs(Q[0] - instance.vehicles[i].initial_load) > tol:
        bad.append(f"v{i}: initial load mismatch")
    return bad


def coverage(instance: PdvrpInstance, sols: Sequence[RouteSolution]) -> np.ndarray:
    """Left-hand side of the coverage rows: fleet-wide out-degree of each request."""
    lhs = np.zeros(instance.n_requests)
    for sol in sols:
        for (j, _), v in sol.x.items():
            if j != 0:
                lhs[j - 1] += v
    return lhs


def check_solution(instance: PdvrpInstance, sols: Sequence[RouteSolution], tol: float = TOL) -> list[str]:
    """All violations of the fleet problem: every local set plus coverage >= 1."""
    bad = []
    owners = sorted(s.vehicle for s in sols)
    if owners != list(range(instance.n_vehicles)):
        bad.append(f"expected one route per vehicle, got owners {owners}")
    for sol in sols:
        bad.extend(check_vehicle(instance, sol, tol))
    lhs = coverage(instance, sols)
    for r in np.flatnonzero(lhs < 1.0 - tol):
        bad.append(f"request {r} not covered (lhs={lhs[r]:.6g})")
    for r, v in enumerate(lhs):
        if abs(v - round(v)) > tol:
            bad.append(f"request {r}: fractional coverage {v}")
    return bad


def is_feasible(instance: PdvrpInstance, sols: Sequence[RouteSolution], tol: float = TOL) -> bool:
    return not check_solution(instance, sols, tol)


def total_cost(instance: PdvrpInstance, sols: Sequence[RouteSolution]) -> float:
    return float(sum(s.cost(instance) for s in sols))
