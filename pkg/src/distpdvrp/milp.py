"""Linear models for the PDVRP: local route sets, coupling rows, centralized MILP."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .instance import InstanceError, PdvrpInstance, TaskGraph, check_coverable, local_graph

LE, GE, EQ = "L", "G", "E"


@dataclass(frozen=True, eq=False)
class LinearModel:
    """min cost @ x  s.t.  A x (<=|>=|=) rhs,  lb <= x <= ub,  some x integer.

    ``A`` is dense; rows and columns keep the order in which they were added.
    ``tags`` maps a label to an array of row positions (e.g. coupling rows).
    """

    A: np.ndarray
    sense: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    cost: np.ndarray
    integer: np.ndarray
    var_names: tuple[str, ...]
    row_names: tuple[str, ...]
    tags: Mapping[str, np.ndarray] = field(default_factory=dict)
    objective_offset: float = 0.0

    @property
    def n_vars(self) -> int:
        return self.A.shape[1]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def is_mip(self) -> bool:
        return bool(self.integer.any())

    def with_rhs(self, rows: Sequence[int], values) -> "LinearModel":
        rhs = self.rhs.copy()
        rhs[np.asarray(rows, dtype=int)] = values
        return replace(self, rhs=rhs)

    def with_bounds(self, lb=None, ub=None) -> "LinearModel":
        return replace(self, lb=self.lb if lb is None else np.asarray(lb, float),
                       ub=self.ub if ub is None else np.asarray(ub, float))

    def row_activity(self, x) -> np.ndarray:
        return self.A @ np.asarray(x, float)

    def violations(self, x, tol: float = 1e-7) -> list[str]:
        """Rows and bounds violated by ``x`` beyond ``tol`` (integrality not checked)."""
        x = np.asarray(x, float)
        act = self.A @ x
        out = []
        for r in range(self.n_rows):
            s, b, a = self.sense[r], self.rhs[r], act[r]
            if (s == LE and a > b + tol) or (s == GE and a < b - tol) or (s == EQ and abs(a - b) > tol):
                out.append(f"{self.row_names[r]}: {a:.9g} {s} {b:.9g}")
        for j in np.flatnonzero((x < self.lb - tol) | (x > self.ub + tol)):
            out.append(f"{self.var_names[j]}={x[j]:.9g} outside [{self.lb[j]}, {self.ub[j]}]")
        return out

    def objective(self, x) -> float:
        return float(self.cost @ np.asarray(x, float)) + self.objective_offset

    def to_lp_format(self) -> str:
        """CPLEX-LP text. Numbers are fixed-point with 10 decimals, trailing zeros kept."""
        def num(v):
            return f"{v:.10f}"

        def expr(coefs):
            parts = []
            for j in np.flatnonzero(coefs):
                v = coefs[j]
                parts.append(f"{'-' if v < 0 else '+'} {num(abs(v))} {self.var_names[j]}")
            return " ".join(parts) if parts else f"0 {self.var_names[0]}"

        ops = {LE: "<=", GE: ">=", EQ: "="}
        lines = ["\\ generated by distpdvrp", "Minimize", f" obj: {expr(self.cost)}", "Subject To"]
        for r in range(self.n_rows):
            lines.append(f" {self.row_names[r]}: {expr(self.A[r])} {ops[self.sense[r]]} {num(self.rhs[r])}")
        lines.append("Bounds")
        for j, name in enumerate(self.var_names):
            lo = "-inf" if np.isneginf(self.lb[j]) else num(self.lb[j])
            hi = "+inf" if np.isposinf(self.ub[j]) else num(self.ub[j])
            lines.append(f" {lo} <= {name} <= {hi}")
        ints = [self.var_names[j] for j in np.flatnonzero(self.integer)]
        if ints:
            lines.append("Generals")
            lines.extend(f" {n}" for n in ints)
        lines.append("End")
        return "\n".join(lines) + "\n"


class ModelBuilder:
    """Accumulates variables and sparse rows, then freezes into a LinearModel."""

    def __init__(self):
        self._names: list[str] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._cost: list[float] = []
        self._int: list[bool] = []
        self._rows: list[dict[int, float]] = []
        self._sense: list[str] = []
        self._rhs: list[float] = []
        self._row_names: list[str] = []
        self._tags: dict[str, list[int]] = {}

    @property
    def n_vars(self) -> int:
        return len(self._names)

    @property
    def n_rows(self) -> int:
        return len(self._rows)

    def add_var(self, name: str, lb: float = 0.0, ub: float = np.inf, cost: float = 0.0,
                integer: bool = False) -> int:
        self._names.append(name)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._cost.append(float(cost))
        self._int.append(bool(integer))
        return len(self._names) - 1

    def set_cost(self, var: int, cost: float) -> None:
        self._cost[var] = float(cost)

    def add_row(self, coefs: Mapping[int, float], sense: str, rhs: float, name: str,
                tag: str | None = None) -> int:
        if sense not in (LE, GE, EQ):
            raise ValueError(f"bad sense {sense!r}")
        row = {}
        for j, v in coefs.items():
            if not 0 <= j < len(self._names):
                raise IndexError(f"row {name} references undeclared variable {j}")
            if v != 0.0:
                row[j] = row.get(j, 0.0) + float(v)
        self._rows.append(row)
        self._sense.append(sense)
        self._rhs.append(float(rhs))
        self._row_names.append(name)
        idx = len(self._rows) - 1
        if tag is not None:
            self._tags.setdefault(tag, []).append(idx)
        return idx

    def build(self) -> LinearModel:
        n, m = len(self._names), len(self._rows)
        A = np.zeros((m, n))
        for r, row in enumerate(self._rows):
            for j, v in row.items():
                A[r, j] = v
        return LinearModel(
            A=A, sense=np.array(self._sense, dtype="<U1"), rhs=np.array(self._rhs, float),
            lb=np.array(self._lb, float), ub=np.array(self._ub, float),
            cost=np.array(self._cost, float), integer=np.array(self._int, bool),
            var_names=tuple(self._names), row_names=tuple(self._row_names),
            tags={k: np.array(v, dtype=int) for k, v in self._tags.items()},
        )


def lp_relaxation(model: LinearModel) -> LinearModel:
    """Same model without integrality; integer columns clipped to [0, 1] if binary-like."""
    if not model.is_mip:
        return model
    lb, ub = model.lb.copy(), model.ub.copy()
    ints = model.integer
    lb[ints] = np.maximum(lb[ints], 0.0)
    ub[ints] = np.minimum(ub[ints], 1.0)
    return replace(model, lb=lb, ub=ub, integer=np.zeros_like(model.integer))


@dataclass(frozen=True)
class VariableRef:
    owner: int
    kind: str  # "x" | "B" | "Q"
    key: tuple[int, int] | int


@dataclass(frozen=True)
class BigMData:
    """Big-M constants for vehicle ``i`` on a given task graph (arc-aligned arrays)."""

    time_bound: float
    time_m: np.ndarray
    load_up: np.ndarray
    load_lo: np.ndarray
    q_min: np.ndarray  # per vertex number
    q_max: np.ndarray


def time_upper_bound(instance: PdvrpInstance, i: int, graph: TaskGraph | None = None) -> float:
    """Sum of travel times over every admissible arc plus every service time."""
    graph = graph if graph is not None else local_graph(instance, i)
    t = instance.travel_times[i]
    total = sum(t[j, k] for j, k in graph.edges)
    total += sum(instance.service[v] for v in graph.vertices)
    return float(total)


def big_m_data(instance: PdvrpInstance, i: int, graph: TaskGraph) -> BigMData:
    cap = instance.vehicles[i].capacity
    q = instance.demand
    q_min = np.maximum(0.0, q)
    q_max = np.minimum(cap, cap + q)
    bbar = time_upper_bound(instance, i, graph)
    t = instance.travel_times[i]
    d = instance.service
    edges = graph.edges
    time_m = np.array([bbar + d[j] + t[j, k] for j, k in edges])
    # Any larger constant is valid, so negative values are lifted to zero.
    load_up = np.array([max(0.0, q_max[j] + q[k]) for j, k in edges])
    load_lo = np.array([max(0.0, q_max[k] - q[k] - q_min[j]) for j, k in edges])
    return BigMData(bbar, time_m, load_up, load_lo, q_min, q_max)


@dataclass(frozen=True, eq=False)
class LocalBlock:
    """Column positions of one vehicle's x, B, Q variables inside a model."""

    vehicle: int
    graph: TaskGraph
    x: np.ndarray  # aligned with graph.edges
    B: dict
    Q: dict
    bigm: BigMData

    def out_vars(self, vertex: int) -> list[int]:
        return [int(self.x[e]) for e in self.graph.out_arcs(vertex)]

    def refs(self) -> dict[int, VariableRef]:
        out = {int(self.x[e]): VariableRef(self.vehicle, "x", arc) for e, arc in enumerate(self.graph.edges)}
        out.update({b: VariableRef(self.vehicle, "B", v) for v, b in self.B.items()})
        out.update({qv: VariableRef(self.vehicle, "Q", v) for v, qv in self.Q.items()})
        return out

    def extract(self, values) -> "RouteSolution":
        values = np.asarray(values, float)
        x = {arc: float(values[self.x[e]]) for e, arc in enumerate(self.graph.edges)}
        B = {v: float(values[b]) for v, b in self.B.items()}
        Q = {v: float(values[qv]) for v, qv in self.Q.items()}
        return RouteSolution(self.vehicle, x, B, Q)


@dataclass
class RouteSolution:
    """One vehicle's (x, B, Q) keyed by arc / vertex number."""

    vehicle: int
    x: dict
    B: dict
    Q: dict

    def rounded(self) -> "RouteSolution":
        return RouteSolution(self.vehicle, {a: float(round(v)) for a, v in self.x.items()},
                             dict(self.B), dict(self.Q))

    def route(self, sigma: int) -> list[int]:
        """Vertices visited from ``s`` following arcs with x = 1; stops at ``sigma``."""
        nxt = {j: k for (j, k), v in self.x.items() if v > 0.5}
        path, cur = [0], 0
        while cur in nxt and len(path) <= len(self.x) + 1:
            cur = nxt[cur]
            path.append(cur)
            if cur == sigma:
                break
        return path

    def visited_requests(self) -> list[int]:
        """Request indices (0-based) left by an arc with x = 1."""
        return sorted({j - 1 for (j, _), v in self.x.items() if v > 0.5 and j != 0})

    def cost(self, instance: PdvrpInstance) -> float:
        c = instance.costs[self.vehicle]
        return float(sum(c[j, k] * v for (j, k), v in self.x.items()))


def build_local_constraints(builder: ModelBuilder, instance: PdvrpInstance, graph: TaskGraph,
                            i: int, integer: bool = True, with_cost: bool = True) -> LocalBlock:
    """Register vehicle ``i``'s variables and its linearized route constraints.

    Row groups, in order: start, end, flow conservation, pickup/delivery pairing,
    precedence, time propagation (one per arc), load propagation (two per arc),
    initial load. Bounds carry 0 <= B <= Bbar and the load window.
    """
    graph.check()
    sigma = graph.sigma
    npk = instance.n_pickups
    c = instance.costs[i]
    t = instance.travel_times[i]
    d = instance.service
    q = instance.demand
    bm = big_m_data(instance, i, graph)

    xs = np.array([
        builder.add_var(f"x{i}_{j}_{k}", 0.0, 1.0, c[j, k] if with_cost else 0.0, integer)
        for j, k in graph.edges
    ], dtype=int)
    Bv = {v: builder.add_var(f"B{i}_{v}", 0.0, bm.time_bound) for v in graph.vertices}
    Qv = {v: builder.add_var(f"Q{i}_{v}", bm.q_min[v], bm.q_max[v]) for v in graph.vertices}
    block = LocalBlock(i, graph, xs, Bv, Qv, bm)

    out_of = {v: [] for v in graph.vertices}
    into = {v: [] for v in graph.vertices}
    for e, (j, k) in enumerate(graph.edges):
        out_of[j].append(int(xs[e]))
        into[k].append(int(xs[e]))

    builder.add_row({x: 1.0 for x in out_of[0]}, EQ, 1.0, f"start{i}")
    builder.add_row({x: 1.0 for x in into[sigma]}, EQ, 1.0, f"end{i}")
    reqs = [v for v in graph.vertices if v not in (0, sigma)]
    for k in reqs:
        row = {x: 1.0 for x in into[k]}
        for x in out_of[k]:
            row[x] = row.get(x, 0.0) - 1.0
        builder.add_row(row, EQ, 0.0, f"flow{i}_{k}")
    pickups = [v for v in reqs if v <= npk]
    for p in pickups:
        row = {x: 1.0 for x in out_of[p]}
        for x in out_of[p + npk]:
            row[x] = row.get(x, 0.0) - 1.0
        builder.add_row(row, EQ, 0.0, f"pair{i}_{p}")
    for p in pickups:
        builder.add_row({Bv[p]: 1.0, Bv[p + npk]: -1.0}, LE, 0.0, f"prec{i}_{p}")
    for e, (j, k) in enumerate(graph.edges):
        M = bm.time_m[e]
        builder.add_row({Bv[k]: 1.0, Bv[j]: -1.0, int(xs[e]): -M}, GE, d[j] + t[j, k] - M,
                        f"time{i}_{j}_{k}")
    for e, (j, k) in enumerate(graph.edges):
        W = bm.load_up[e]
        builder.add_row({Qv[k]: 1.0, Qv[j]: -1.0, int(xs[e]): -W}, GE, q[k] - W, f"loadlo{i}_{j}_{k}")
        W = bm.load_lo[e]
        builder.add_row({Qv[k]: 1.0, Qv[j]: -1.0, int(xs[e]): W}, LE, q[k] + W, f"loadhi{i}_{j}_{k}")
    builder.add_row({Qv[0]: 1.0}, EQ, instance.vehicles[i].initial_load, f"init{i}")
    return block


def build_coupling_rows(builder: ModelBuilder, blocks: Sequence[LocalBlock], n_requests: int,
                        rhs: float, tag: str = "coupling") -> list[int]:
    """One row per request: total out-degree over all blocks >= rhs."""
    rows = []
    for r in range(n_requests):
        v = r + 1
        coefs = {}
        for blk in blocks:
            if v in blk.Q:
                for x in blk.out_vars(v):
                    coefs[x] = 1.0
        rows.append(builder.add_row(coefs, GE, rhs, f"cover_{v}", tag=tag))
    return rows


@dataclass(frozen=True, eq=False)
class CentralModel:
    model: LinearModel
    blocks: tuple[LocalBlock, ...]

    def split(self, values) -> list[RouteSolution]:
        return [blk.extract(values) for blk in self.blocks]


def build_centralized_milp(instance: PdvrpInstance, rhs: float = 1.0, integer: bool = True) -> CentralModel:
    """Full fleet model: every vehicle's route set plus the coverage rows."""
    if instance.heterogeneous:
        check_coverable(instance)
    builder = ModelBuilder()
    blocks = [build_local_constraints(builder, instance, local_graph(instance, i), i, integer)
              for i in range(instance.n_vehicles)]
    build_coupling_rows(builder, blocks, instance.n_requests, rhs)
    return CentralModel(builder.build(), tuple(blocks))


def build_local_model(instance: PdvrpInstance, i: int, integer: bool = True) -> tuple[LinearModel, LocalBlock]:
    builder = ModelBuilder()
    block = build_local_constraints(builder, instance, local_graph(instance, i), i, integer)
    return builder.build(), block


def route_to_solution(instance: PdvrpInstance, i: int, route: Sequence[int],
                      graph: TaskGraph | None = None) -> RouteSolution:
    """(x, B, Q) for an explicit vertex sequence ``s, ..., sigma``.

    Service begins as early as possible along the route; unvisited vertices get
    B = 0 except deliveries, which inherit their pickup's time so precedence
    holds, and loads sit at their lower bound.
    """
    graph = graph if graph is not None else local_graph(instance, i)
    sigma = graph.sigma
    if route[0] != 0 or route[-1] != sigma:
        raise InstanceError(f"route must run from s to sigma: {route}")
    t = instance.travel_times[i]
    d = instance.service
    q = instance.demand
    x = {arc: 0.0 for arc in graph.edges}
    B = {v: 0.0 for v in graph.vertices}
    Q = {v: max(0.0, q[v]) for v in graph.vertices}
    Q[0] = instance.vehicles[i].initial_load
    for j, k in zip(route[:-1], route[1:]):
        if (j, k) not in x:
            raise InstanceError(f"arc {(j, k)} not admissible for vehicle {i}")
        x[(j, k)] = 1.0
        B[k] = B[j] + d[j] + t[j, k]
        Q[k] = Q[j] + q[k]
    npk = instance.n_pickups
    visited = set(route)
    for v in graph.vertices:
        if 0 < v <= npk and v not in visited:
            B[v + npk] = max(B[v + npk], B[v])
    return RouteSolution(i, x, B, Q)
