"""Static communication graphs and the synchronous round loop.

Every round is a two-phase barrier: all agents solve their subproblems, then
every message of that round is delivered and all agents update. Messages are
applied in sender order, so the result does not depend on scheduling.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import networkx as nx
import numpy as np

from .instance import PdvrpInstance
from .primal_decomp import Agent, AgentConfig, FinalRoute, MultiplierMessage, default_penalty

log = logging.getLogger(__name__)

GRAPH_KINDS = ("complete", "cycle", "random-connected")


@dataclass(frozen=True)
class CommGraph:
    n: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        for a, b in self.edges:
            if a == b:
                raise ValueError(f"self-loop at {a}")
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise ValueError(f"edge {(a, b)} outside 0..{self.n - 1}")
        g = self.to_networkx()
        if self.n > 0 and not nx.is_connected(g):
            raise ValueError("communication graph is not connected")

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges)
        return g

    @property
    def neighbors(self) -> list[list[int]]:
        adj = [[] for _ in range(self.n)]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return [sorted(x) for x in adj]

    @property
    def n_messages(self) -> int:
        return 2 * len(self.edges)


def _normalized(edges) -> tuple[tuple[int, int], ...]:
    return tuple(sorted({(min(a, b), max(a, b)) for a, b in edges}))


def build_comm_graph(kind: str, n: int, seed: int = 0, p: float | None = None) -> CommGraph:
    """``complete``, ``cycle`` or ``random-connected`` (Erdos-Renyi resampled until connected)."""
    if n < 1:
        raise ValueError("need at least one node")
    if kind == "complete":
        g = nx.complete_graph(n)
    elif kind == "cycle":
        g = nx.cycle_graph(n) if n > 2 else nx.path_graph(n)
    elif kind == "random-connected":
        prob = p if p is not None else min(1.0, 2.0 * np.log(max(n, 2)) / max(n, 2))
        rng = np.random.default_rng(seed)
        while True:
            g = nx.gnp_random_graph(n, prob, seed=int(rng.integers(2 ** 31)))
            if nx.is_connected(g):
                break
    else:
        raise ValueError(f"unknown graph kind {kind!r}; expected one of {GRAPH_KINDS}")
    return CommGraph(n, _normalized(g.edges))


@dataclass
class RoundRecord:
    t: int
    agent: int
    y_norm: float
    mu_max: float
    mu_sum: float
    objective: float
    slack: float
    y: list[float]
    mu: list[float]


@dataclass
class RunResult:
    allocations: np.ndarray          # (T_f + 1, N, |R|): y^0 .. y^T_f
    multipliers: np.ndarray          # (T_f, N, |R|)
    objectives: np.ndarray           # (T_f, N)
    slacks: np.ndarray               # (T_f, N) penalty variable of each subproblem
    messages_per_round: list[int]
    y_final: np.ndarray              # (N, |R|) before thresholding
    y_end: np.ndarray                # (N, |R|) thresholded
    routes: list[FinalRoute]
    agents: list[Agent] = field(repr=False, default_factory=list)

    @property
    def planned_cost(self) -> float:
        return float(sum(r.cost for r in self.routes))

    def records(self) -> list[RoundRecord]:
        T, N, _ = self.multipliers.shape
        out = []
        for t in range(T):
            for i in range(N):
                y, mu = self.allocations[t, i], self.multipliers[t, i]
                out.append(RoundRecord(t, i, float(np.linalg.norm(y)), float(mu.max(initial=0.0)),
                                       float(mu.sum()), float(self.objectives[t, i]),
                                       float(self.slacks[t, i]), y.tolist(), mu.tolist()))
        return out

    def export_trace(self, path) -> None:
        """JSON lines, one record per (round, agent)."""
        with open(path, "w") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec.__dict__) + "\n")

    def conservation_error(self, delta: float) -> float:
        return float(np.abs(self.allocations.sum(axis=1) - delta).max())


def make_agents(instance: PdvrpInstance, config: AgentConfig) -> list[Agent]:
    penalty = config.penalty if config.penalty is not None else default_penalty(instance)
    return [Agent(instance, i, config, penalty) for i in range(instance.n_vehicles)]


def _map(pool, fn, items):
    if pool is None:
        return [fn(a) for a in items]
    return list(pool.map(fn, items))


def run_synchronous(agents: Sequence[Agent], graph: CommGraph, iterations: int | None = None,
                    workers: int = 1, final: bool = True) -> RunResult:
    """Run ``iterations`` rounds, then threshold and solve the final route problems.

    ``workers > 1`` runs the per-agent phases in a thread pool; traces are
    identical to the serial run.
    """
    n = len(agents)
    if n != graph.n:
        raise ValueError(f"{n} agents for a graph with {graph.n} nodes")
    if [a.id for a in agents] != list(range(n)):
        raise ValueError("agents must be ordered by id 0..N-1")
    T = iterations if iterations is not None else agents[0].config.iterations
    nr = agents[0].y.size
    nbrs = graph.neighbors
    ys = np.empty((T + 1, n, nr))
    mus = np.empty((T, n, nr))
    objs = np.empty((T, n))
    slacks = np.empty((T, n))
    counts = []
    ys[0] = [a.y for a in agents]

    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for t in range(T):
            # phase 1: local LPs
            try:
                results = _map(pool, lambda a: a.solve_subproblem(), agents)
            except Exception as exc:
                raise RuntimeError(f"round {t}: subproblem failed: {exc}") from exc
            outbox: list[MultiplierMessage] = [a.outbound() for a in agents]
            # phase 2: delivery, sorted by sender
            inbox = [[outbox[s] for s in nbrs[i]] for i in range(n)]
            counts.append(sum(len(m) for m in inbox))
            _map(pool, lambda a: a.receive(inbox[a.id], nbrs[a.id]), agents)
            mus[t] = [m.mu for m in outbox]
            objs[t] = [r.objective for r in results]
            slacks[t] = [r.v for r in results]
            ys[t + 1] = [a.y for a in agents]
        y_final = np.array([a.final_allocation() for a in agents])
        y_end = np.array([a.thresholded(y) for a, y in zip(agents, y_final)])
        routes = _map(pool, lambda a: a.final_route(y_end[a.id]), agents) if final else []
    finally:
        if pool is not None:
            pool.shutdown()
    return RunResult(ys, mus, objs, slacks, counts, y_final, y_end, routes, list(agents))


def run_distributed(instance: PdvrpInstance, config: AgentConfig, graph: CommGraph | None = None,
                    workers: int = 1) -> RunResult:
    graph = graph or build_comm_graph("complete", instance.n_vehicles)
    return run_synchronous(make_agents(instance, config), graph, config.iterations, workers)
