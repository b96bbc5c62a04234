"""Branch and bound over the simplex, plus exact combinatorial oracles.

``solve_milp`` is a plain LP-based branch and bound: best-first on the LP bound
with FIFO tie-breaks, branching on the most fractional integer column (lowest
index on ties), down-branch created first. Children are warm-started from
their parent's basis.

``enumerate_routes_oracle`` brute-forces tiny instances. ``solve_exact_dp`` is
a dynamic program over pickup/delivery pair subsets that scales to the sizes
the Monte Carlo harness needs.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .evaluate import allowed_requests
from .instance import InstanceError, PdvrpInstance
from .milp import LinearModel, lp_relaxation
from .simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, solve_lp

INT_TOL = 1e-6
DEFAULT_NODE_LIMIT = 10 ** 6


class MilpInfeasible(RuntimeError):
    pass


class NodeLimit(RuntimeError):
    def __init__(self, nodes: int, incumbent: float, bound: float):
        super().__init__(f"node limit reached after {nodes} nodes "
                         f"(incumbent {incumbent}, bound {bound})")
        self.nodes = nodes
        self.incumbent = incumbent
        self.bound = bound


@dataclass
class MilpSolution:
    status: str
    x: np.ndarray | None
    objective: float
    nodes: int
    gap: float
    lp_trace: list = field(default_factory=list)  # (node id, parent id, LP value)


def _most_fractional(x: np.ndarray, integer: np.ndarray) -> int | None:
    idx = np.flatnonzero(integer)
    frac = np.abs(x[idx] - np.round(x[idx]))
    if frac.size == 0 or frac.max() <= INT_TOL:
        return None
    dist = np.minimum(x[idx] - np.floor(x[idx]), np.ceil(x[idx]) - x[idx])
    best = dist.max()
    return int(idx[np.flatnonzero(dist >= best - 1e-12)[0]])


def solve_milp(model: LinearModel, node_limit: int = DEFAULT_NODE_LIMIT,
               record_trace: bool = False) -> MilpSolution:
    """Proven-optimal solution of ``model`` or status ``infeasible``.

    Raises :class:`NodeLimit` instead of returning a possibly suboptimal incumbent.
    """
    relaxed = lp_relaxation(model)
    integer = model.integer
    lb0 = relaxed.lb.copy()
    ub0 = relaxed.ub.copy()
    lb0[integer] = np.ceil(lb0[integer] - INT_TOL)
    ub0[integer] = np.floor(ub0[integer] + INT_TOL)

    best_x, best_val = None, math.inf
    trace = []
    counter = itertools.count()
    heap: list = []
    nodes = 0

    def solve_node(lb, ub, warm, parent):
        nonlocal nodes
        nodes += 1
        node_id = nodes
        sol = solve_lp(relaxed.with_bounds(lb, ub), warm_start=warm)
        if sol.status == UNBOUNDED:
            raise MilpInfeasible("LP relaxation unbounded; branch and bound needs bounded relaxations")
        if record_trace:
            trace.append((node_id, parent, sol.objective if sol.status == OPTIMAL else math.inf))
        return node_id, sol

    root_id, root = solve_node(lb0, ub0, None, 0)
    if root.status == OPTIMAL:
        heapq.heappush(heap, (root.objective, next(counter), root_id, lb0, ub0, root))

    def prune_level():
        if best_x is None:
            return math.inf
        return best_val - 1e-9 * max(1.0, abs(best_val))

    while heap:
        bound, _, node_id, lb, ub, sol = heapq.heappop(heap)
        if bound >= prune_level():
            continue
        j = _most_fractional(sol.x, integer)
        if j is None:
            x = sol.x.copy()
            x[integer] = np.round(x[integer])
            best_x, best_val = x, relaxed.objective(x)
            continue
        if nodes >= node_limit:
            raise NodeLimit(nodes, best_val, bound)
        v = sol.x[j]
        down_ub = ub.copy()
        down_ub[j] = math.floor(v)
        up_lb = lb.copy()
        up_lb[j] = math.ceil(v)
        for clb, cub in ((lb, down_ub), (up_lb, ub)):
            cid, child = solve_node(clb, cub, sol.basis, node_id)
            if child.status == OPTIMAL and child.objective < prune_level():
                heapq.heappush(heap, (child.objective, next(counter), cid, clb, cub, child))

    if best_x is None:
        return MilpSolution(INFEASIBLE, None, math.nan, nodes, math.nan, trace)
    return MilpSolution(OPTIMAL, best_x, best_val, nodes, 0.0, trace)


# ---- exact oracles ----------------------------------------------------------

def _route_cost(instance: PdvrpInstance, i: int, seq) -> float:
    c = instance.costs[i]
    path = [0] + list(seq) + [instance.sigma]
    return float(sum(c[a, b] for a, b in zip(path[:-1], path[1:])))


def _load_ok(instance: PdvrpInstance, i: int, seq) -> bool:
    cap = instance.vehicles[i].capacity
    load = instance.vehicles[i].initial_load
    for v in seq:
        load += instance.demand[v]
        if load > cap + 1e-9 or load < -1e-9:
            return False
    return True


def enumerate_routes_oracle(instance: PdvrpInstance) -> tuple[float, dict[int, list[int]]]:
    """Minimum total cost by brute force over pair-to-vehicle partitions and orderings.

    Returns the cost and, per vehicle, its ordered request vertices (without s, sigma).
    """
    N, P = instance.n_vehicles, instance.n_pickups
    if N > 3 or P > 3:
        raise InstanceError("route enumeration is limited to N <= 3 and |P| <= 3")
    allowed = [set(allowed_requests(instance, i)) for i in range(N)]
    best_single: dict[tuple[int, frozenset], tuple[float, list[int]]] = {}

    def single(i, pairs):
        key = (i, pairs)
        if key in best_single:
            return best_single[key]
        verts = [p + 1 for p in pairs] + [p + 1 + P for p in pairs]
        best = (math.inf, [])
        for perm in itertools.permutations(verts):
            pos = {v: n for n, v in enumerate(perm)}
            if any(pos[p + 1] > pos[p + 1 + P] for p in pairs):
                continue
            if not _load_ok(instance, i, perm):
                continue
            cost = _route_cost(instance, i, perm)
            if cost < best[0]:
                best = (cost, list(perm))
        best_single[key] = best
        return best

    best_total, best_plan = math.inf, None
    for owner in itertools.product(range(N), repeat=P):
        if any(p not in allowed[o] for p, o in enumerate(owner)):
            continue
        total, plan = 0.0, {}
        for i in range(N):
            pairs = frozenset(p for p, o in enumerate(owner) if o == i)
            cost, seq = single(i, pairs)
            total += cost
            plan[i] = seq
        if total < best_total:
            best_total, best_plan = total, plan
    if best_plan is None:
        raise InstanceError("no feasible assignment exists")
    return best_total, best_plan


def single_vehicle_table(instance: PdvrpInstance, i: int) -> dict[int, tuple[float, tuple[int, ...]]]:
    """Cheapest route of vehicle ``i`` serving exactly each subset of pairs (bitmask keys).

    Forward DP over (picked mask, delivered mask, last vertex); a pair may only be
    picked if it is in the vehicle's local set and the load stays within capacity.
    """
    P = instance.n_pickups
    sigma = instance.sigma
    c = instance.costs[i]
    q = instance.demand
    cap = instance.vehicles[i].capacity
    q0 = instance.vehicles[i].initial_load
    allowed = set(allowed_requests(instance, i))
    can = [p for p in range(P) if p in allowed]

    start = (0, 0, 0)
    best = {start: (0.0, ())}
    frontier = [start]
    while frontier:
        nxt = {}
        for state in frontier:
            picked, done, last = state
            cost, seq = best[state]
            load = q0 + sum(q[p + 1] for p in range(P) if picked >> p & 1 and not done >> p & 1)
            for p in can:
                bit = 1 << p
                if not picked & bit:
                    if load + q[p + 1] > cap + 1e-9:
                        continue
                    ns, v = (picked | bit, done, p + 1), p + 1
                elif not done & bit:
                    ns, v = (picked, done | bit, p + 1 + P), p + 1 + P
                else:
                    continue
                val = cost + c[last, v]
                cur = nxt.get(ns) or best.get(ns)
                if cur is None or val < cur[0] - 1e-12:
                    nxt[ns] = (val, seq + (v,))
        for s, v in nxt.items():
            best[s] = v
        frontier = sorted(nxt)

    table: dict[int, tuple[float, tuple[int, ...]]] = {}
    for (picked, done, last), (cost, seq) in best.items():
        if picked != done:
            continue
        total = cost + c[last, sigma]
        if picked not in table or total < table[picked][0] - 1e-12:
            table[picked] = (total, seq)
    return table


def solve_exact_dp(instance: PdvrpInstance) -> tuple[float, dict[int, list[int]]]:
    """Optimal fleet cost via per-vehicle subset tables and a set-partition DP."""
    N, P = instance.n_vehicles, instance.n_pickups
    full = (1 << P) - 1
    tables = [single_vehicle_table(instance, i) for i in range(N)]
    # f[mask]: cheapest way for vehicles 0..i to serve exactly ``mask``
    f = {m: (tables[0][m][0], (m,)) for m in tables[0]}
    for i in range(1, N):
        g = {}
        for mask, (val, parts) in f.items():
            rest = full & ~mask
            sub = rest
            while True:
                if sub in tables[i]:
                    nm = mask | sub
                    nv = val + tables[i][sub][0]
                    if nm not in g or nv < g[nm][0] - 1e-12:
                        g[nm] = (nv, parts + (sub,))
                if sub == 0:
                    break
                sub = (sub - 1) & rest
        f = g
    if full not in f:
        raise InstanceError("no feasible assignment exists")
    total, parts = f[full]
    plan = {i: list(tables[i][parts[i]][1]) for i in range(N)}
    return float(total), plan


def best_route_covering(table: dict, forced_mask: int) -> tuple[float, tuple[int, ...]]:
    """Cheapest entry of a single-vehicle table whose pair set contains ``forced_mask``."""
    best = None
    for mask in sorted(table):
        if mask & forced_mask == forced_mask:
            val = table[mask]
            if best is None or val[0] < best[0] - 1e-12:
                best = val
    if best is None:
        raise InstanceError("forced pair set cannot be served by this vehicle")
    return best
