"""Per-robot side of the distributed allocation scheme.

Each :class:`Agent` owns an allocation vector ``y`` (its share of the coverage
right-hand side), repeatedly solves a penalized LP relaxation of its route
problem to obtain multipliers ``mu`` on the coverage rows, and moves ``y``
against the disagreement with its neighbours' multipliers. After the last
round the allocation is capped and turned into an integer route.

By default the convex hull of the local route set is written exactly, with one
weight per served pair subset (``hull="exact"``). ``hull="relaxed"`` uses the
LP relaxation of the big-M route model instead, which is weaker.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .bnb import best_route_covering, single_vehicle_table, solve_milp
from .evaluate import check_vehicle
from .instance import PdvrpInstance, TaskGraph, local_graph
from .milp import (EQ, GE, LinearModel, LocalBlock, ModelBuilder, RouteSolution, build_local_constraints,
                   route_to_solution)
from .simplex import OPTIMAL, solve_lp

log = logging.getLogger(__name__)

PENALTY_FACTOR = 50.0
BNB_MAX_PAIRS = 2  # "auto" final solver: branch and bound up to this many local pairs


class ProtocolError(RuntimeError):
    """A round was run with missing or out-of-round neighbour messages."""


class FinalMilpError(RuntimeError):
    pass


@dataclass(frozen=True)
class AgentConfig:
    """Tuning of the allocation scheme.

    ``penalty=None`` picks :func:`default_penalty` for the instance. The step size
    is ``step_k / (t + 1)`` before ``step_switch`` and constant afterwards.
    """

    penalty: float | None = None
    delta: float = 0.9
    iterations: int = 250
    step_k: float = 0.005
    step_switch: int = 125
    averaging: bool = True
    final_solver: str = "auto"  # "auto" | "bnb" | "dp"
    hull: str = "exact"         # "exact" | "relaxed"

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.penalty is not None and self.penalty <= 0:
            raise ValueError("penalty must be positive")
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if self.step_k <= 0 or self.step_switch < 1:
            raise ValueError("step size needs step_k > 0 and step_switch >= 1")
        if self.final_solver not in ("auto", "bnb", "dp"):
            raise ValueError(f"unknown final solver {self.final_solver!r}")
        if self.hull not in ("exact", "relaxed"):
            raise ValueError(f"unknown hull representation {self.hull!r}")

    @property
    def average_from(self) -> int:
        """First iterate index included in the running average."""
        return self.step_switch + 1

    @property
    def uses_average(self) -> bool:
        return self.averaging and self.iterations >= self.average_from


def default_penalty(instance: PdvrpInstance) -> float:
    """50 times the largest per-vehicle sum of arc costs (a crude tour-cost bound)."""
    worst = 0.0
    for i in range(instance.n_vehicles):
        g = local_graph(instance, i)
        c = instance.costs[i]
        worst = max(worst, sum(c[j, k] for j, k in g.edges))
    return PENALTY_FACTOR * max(worst, 1.0)


def step_size(t: int, config: AgentConfig) -> float:
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t < config.step_switch:
        return config.step_k / (t + 1)
    return config.step_k / config.step_switch


def update_allocation(y: np.ndarray, mu: np.ndarray, neighbor_mu: Sequence[np.ndarray],
                      alpha: float) -> np.ndarray:
    """``y - alpha * sum_l (mu - mu_l)``; no projection or clipping."""
    total = np.zeros_like(y)
    for other in neighbor_mu:
        total += mu - other
    return y - alpha * total


def running_average(weighted_sum: np.ndarray, weight: float) -> np.ndarray:
    if weight <= 0.0:
        raise ValueError("running average window is empty")
    return weighted_sum / weight


def threshold_allocation(y: np.ndarray, local_mask: np.ndarray | None = None) -> np.ndarray:
    """Cap at 1; components outside the robot's local request set are capped at 0."""
    capped = np.minimum(y, 1.0)
    if local_mask is None:
        return capped
    return np.where(local_mask, capped, np.minimum(y, 0.0))


@dataclass(frozen=True)
class MultiplierMessage:
    sender: int
    round: int
    mu: np.ndarray


@dataclass
class FinalRoute:
    vehicle: int
    solution: RouteSolution
    route: list[int]
    cost: float
    y_end: np.ndarray

    @property
    def x(self):
        return self.solution.x

    @property
    def B(self):
        return self.solution.B

    @property
    def Q(self):
        return self.solution.Q


@dataclass
class SubproblemResult:
    objective: float
    mu: np.ndarray
    v: float
    iterations: int


class Agent:
    """State and local computations of robot ``i``."""

    def __init__(self, instance: PdvrpInstance, i: int, config: AgentConfig,
                 penalty: float | None = None):
        self.instance = instance
        self.id = i
        self.config = config
        self.penalty = penalty if penalty is not None else (
            config.penalty if config.penalty is not None else default_penalty(instance))
        self.graph: TaskGraph = local_graph(instance, i)
        nr = instance.n_requests
        self.local_mask = np.zeros(nr, bool)
        self.local_mask[list(self.graph.requests)] = True
        self._table = None
        if config.hull == "exact":
            self.template, self.v_index, self.coupling_rows = build_hull_subproblem(
                instance, self.table, i, self.penalty)
            self.block = None
        else:
            self.template, self.block, self.v_index, self.coupling_rows = build_subproblem(
                instance, self.graph, i, self.penalty)
        share = config.delta / instance.n_vehicles
        self.y = np.full(nr, share)
        self.t = 0
        self.mu: np.ndarray | None = None
        self.last: SubproblemResult | None = None
        self.basis = None
        self.avg_sum = np.zeros(nr)
        self.avg_weight = 0.0
        self._final_cache: dict[tuple, FinalRoute] = {}

    @property
    def table(self) -> dict:
        """Cheapest route per served pair subset (bitmask keys)."""
        if self._table is None:
            self._table = single_vehicle_table(self.instance, self.id)
        return self._table

    # -- iterative block --------------------------------------------------
    def solve_subproblem(self) -> SubproblemResult:
        model = self.template.with_rhs(self.coupling_rows, self.y)
        sol = solve_lp(model, warm_start=self.basis)
        if sol.status != OPTIMAL:
            raise RuntimeError(f"agent {self.id}: subproblem LP {sol.status} at round {self.t}")
        self.basis = sol.basis
        mu = sol.duals[self.coupling_rows].copy()
        tol = 1e-7 * max(1.0, self.penalty)
        if mu.min() < -tol or mu.max() > self.penalty + tol:
            raise RuntimeError(f"agent {self.id}: multipliers outside [0, M] at round {self.t}")
        self.mu = mu
        self.last = SubproblemResult(sol.objective, mu, float(sol.x[self.v_index]), sol.iterations)
        return self.last

    def outbound(self) -> MultiplierMessage:
        if self.mu is None:
            raise ProtocolError(f"agent {self.id}: no multipliers computed for round {self.t}")
        return MultiplierMessage(self.id, self.t, self.mu)

    def receive(self, messages: Sequence[MultiplierMessage], neighbors: Sequence[int]) -> np.ndarray:
        """Apply the allocation update for the current round and advance ``t``."""
        by_sender = {}
        for msg in messages:
            if msg.round != self.t:
                raise ProtocolError(f"agent {self.id}: message from {msg.sender} is for round "
                                    f"{msg.round}, expected {self.t}")
            if msg.sender in by_sender:
                raise ProtocolError(f"agent {self.id}: duplicate message from {msg.sender}")
            by_sender[msg.sender] = msg.mu
        missing = sorted(set(neighbors) - set(by_sender))
        extra = sorted(set(by_sender) - set(neighbors))
        if missing or extra:
            raise ProtocolError(f"agent {self.id} round {self.t}: missing {missing}, unexpected {extra}")
        alpha = step_size(self.t, self.config)
        ordered = [by_sender[s] for s in sorted(by_sender)]
        self.y = update_allocation(self.y, self.mu, ordered, alpha)
        self.t += 1
        if self.t >= self.config.average_from:
            w = step_size(self.t, self.config)
            self.avg_sum += w * self.y
            self.avg_weight += w
        self.mu = None
        return self.y

    # -- final block --------------------------------------------------------
    def final_allocation(self) -> np.ndarray:
        if self.config.averaging and self.avg_weight > 0.0:
            return running_average(self.avg_sum, self.avg_weight)
        return self.y.copy()

    def thresholded(self, y: np.ndarray | None = None) -> np.ndarray:
        y = self.final_allocation() if y is None else y
        mask = self.local_mask if self.instance.heterogeneous else None
        return threshold_allocation(y, mask)

    def solver_for_final(self) -> str:
        if self.config.final_solver != "auto":
            return self.config.final_solver
        return "bnb" if len(self.graph.requests) // 2 <= BNB_MAX_PAIRS else "dp"

    def final_route(self, y_end: np.ndarray) -> FinalRoute:
        """Cheapest route in the local set covering every request with positive ``y_end``.

        Only the support of ``y_end`` matters for a capped allocation, so results
        are cached per support pattern.
        """
        y_end = np.asarray(y_end, float)
        if np.any(y_end > 1.0):
            raise ValueError("final allocation must be thresholded first")
        support = tuple(bool(v) for v in y_end > 0.0)
        cached = self._final_cache.get(support)
        if cached is not None:
            return FinalRoute(self.id, cached.solution, cached.route, cached.cost, y_end)
        if self.solver_for_final() == "bnb":
            sol = self._final_bnb(y_end)
        else:
            sol = self._final_dp(y_end)
        bad = check_vehicle(self.instance, sol)
        if bad:
            raise FinalMilpError(f"agent {self.id}: final route leaves its local set: {bad[:3]}")
        route = sol.route(self.instance.sigma)
        fr = FinalRoute(self.id, sol, route, sol.cost(self.instance), y_end)
        self._final_cache[support] = fr
        return fr

    def _final_bnb(self, y_end: np.ndarray) -> RouteSolution:
        model, block = build_final_milp(self.instance, self.graph, self.id, y_end)
        res = solve_milp(model)
        if res.status != OPTIMAL:
            raise FinalMilpError(f"agent {self.id}: final MILP {res.status}\n{model.to_lp_format()}")
        return block.extract(res.x).rounded()

    def _final_dp(self, y_end: np.ndarray) -> RouteSolution:
        npk = self.instance.n_pickups
        forced = 0
        for p in range(npk):
            if y_end[p] > 0.0 or y_end[p + npk] > 0.0:
                forced |= 1 << p
        _, seq = best_route_covering(self.table, forced)
        route = [0, *seq, self.instance.sigma]
        return route_to_solution(self.instance, self.id, route, self.graph)


def build_subproblem(instance: PdvrpInstance, graph: TaskGraph, i: int,
                     penalty: float) -> tuple[LinearModel, LocalBlock, int, np.ndarray]:
    """Penalized LP over the relaxed local set; coverage rows get rhs 0 here.

    A request outside the local set keeps its row with only the penalty slack,
    so an allocation there is paid for at rate ``penalty``.
    """
    builder = ModelBuilder()
    block = build_local_constraints(builder, instance, graph, i, integer=False)
    nr = instance.n_requests
    v = builder.add_var(f"v{i}", 0.0, np.inf, penalty)
    rows = []
    for r in range(nr):
        coefs = {x: 1.0 for x in block.out_vars(r + 1)} if r + 1 in block.Q else {}
        coefs[v] = 1.0
        rows.append(builder.add_row(coefs, GE, 0.0, f"alloc{i}_{r + 1}", tag="coupling"))
    return builder.build(), block, v, np.array(rows, dtype=int)


def build_hull_subproblem(instance: PdvrpInstance, table: Mapping[int, tuple], i: int,
                          penalty: float) -> tuple[LinearModel, int, np.ndarray]:
    """Penalized LP over the convex hull of the local route set.

    The coverage rows only see which requests a route visits, so the hull can be
    written with one weight per served pair subset, priced at the cheapest route
    serving exactly that subset. Rows are: convexity, then one coverage row per
    request.
    """
    npk = instance.n_pickups
    nr = instance.n_requests
    builder = ModelBuilder()
    masks = sorted(table)
    lam = [builder.add_var(f"lam{i}_{m}", 0.0, 1.0, table[m][0]) for m in masks]
    v = builder.add_var(f"v{i}", 0.0, np.inf, penalty)
    builder.add_row({c: 1.0 for c in lam}, EQ, 1.0, f"convex{i}")
    rows = []
    for r in range(nr):
        bit = 1 << (r % npk)
        coefs = {c: 1.0 for c, m in zip(lam, masks) if m & bit}
        coefs[v] = 1.0
        rows.append(builder.add_row(coefs, GE, 0.0, f"alloc{i}_{r + 1}", tag="coupling"))
    return builder.build(), v, np.array(rows, dtype=int)


def build_final_milp(instance: PdvrpInstance, graph: TaskGraph, i: int,
                     y_end: np.ndarray) -> tuple[LinearModel, LocalBlock]:
    builder = ModelBuilder()
    block = build_local_constraints(builder, instance, graph, i, integer=True)
    for r in range(instance.n_requests):
        if r + 1 in block.Q:
            builder.add_row({x: 1.0 for x in block.out_vars(r + 1)}, GE, float(y_end[r]),
                            f"serve{i}_{r + 1}", tag="coupling")
        elif y_end[r] > 0.0:
            raise FinalMilpError(f"agent {i}: positive allocation for request {r} outside its local set")
    return builder.build(), block


def run_agent_round(agent: Agent, exchange: Callable[[MultiplierMessage], Sequence[MultiplierMessage]],
                    neighbors: Sequence[int]) -> MultiplierMessage:
    """One full iteration for a single agent: solve, emit, collect, update."""
    agent.solve_subproblem()
    msg = agent.outbound()
    agent.receive(exchange(msg), neighbors)
    return msg
