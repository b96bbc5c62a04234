"""Trial runner and Monte Carlo sweeps comparing the distributed plan with the optimum."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .bnb import NodeLimit, solve_exact_dp, solve_milp
from .evaluate import check_solution, coverage
from .instance import DEFAULT_AREA, PdvrpInstance, generate_mixed_fleet_instance, generate_random_instance
from .milp import build_centralized_milp
from .mission import playback
from .network import RunResult, build_comm_graph, make_agents, run_synchronous
from .primal_decomp import AgentConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrialConfig:
    seed: int
    n_vehicles: int
    n_pickups: int
    delta: float = 0.9
    iterations: int = 250
    graph: str = "complete"
    graph_seed: int | None = None
    averaging: bool = True
    penalty: float | None = None
    hull: str = "exact"
    final_solver: str = "auto"
    heterogeneous: bool = False
    mixed_fleet: bool = False
    area: tuple[float, float, float, float] = DEFAULT_AREA
    probe_every: int = 10
    baseline: str = "dp"          # "dp" | "bnb"
    node_limit: int = 200_000
    workers: int = 1

    def agent_config(self) -> AgentConfig:
        return AgentConfig(penalty=self.penalty, delta=self.delta, iterations=self.iterations,
                           averaging=self.averaging, final_solver=self.final_solver, hull=self.hull)

    def make_instance(self) -> PdvrpInstance:
        if self.mixed_fleet:
            return generate_mixed_fleet_instance(self.seed, self.n_vehicles, self.n_pickups, self.area)
        return generate_random_instance(self.seed, self.n_vehicles, self.n_pickups, self.area,
                                        heterogeneous=self.heterogeneous)


@dataclass
class TrialResult:
    seed: int
    n_vehicles: int
    n_pickups: int
    delta: float
    distributed_cost: float
    optimal_cost: float
    relative_error: float
    actuated_cost: float
    actuated_error: float
    t_delta: int
    feasible: bool
    feasible_at_start: bool
    conservation_error: float
    time_distributed: float
    time_baseline: float
    status: str = "ok"
    message: str = ""

    @property
    def n_requests(self) -> int:
        return 2 * self.n_pickups

    @property
    def usable(self) -> bool:
        return self.status == "ok"


def centralized_optimum(instance: PdvrpInstance, method: str = "dp",
                        node_limit: int = 200_000) -> float:
    """Proven optimal fleet cost by subset DP or by branch and bound on the full MILP."""
    if method == "dp":
        return solve_exact_dp(instance)[0]
    if method == "bnb":
        central = build_centralized_milp(instance)
        res = solve_milp(central.model, node_limit=node_limit)
        if res.x is None:
            raise RuntimeError("centralized MILP infeasible")
        return float(res.objective)
    raise ValueError(f"unknown baseline {method!r}")


def probe_feasibility(run: RunResult, t: int) -> bool:
    """Would stopping after ``t`` rounds (raw iterates, thresholded) give a fleet-feasible plan?"""
    routes = []
    for agent in run.agents:
        y_end = agent.thresholded(run.allocations[t, agent.id])
        routes.append(agent.final_route(y_end).solution)
    return not check_solution(run.agents[0].instance, routes)


def empirical_T_delta(run: RunResult, probe_every: int = 10) -> tuple[int, dict[int, bool]]:
    """Smallest probed round after which every later probe, and the returned plan, is feasible.

    Probes are taken at t = 0, probe_every, 2*probe_every, ... on the raw
    iterates; the final point is the actual output of the run. A run whose final
    output is infeasible gets ``T_f + 1``.
    """
    if probe_every < 1:
        raise ValueError("probe_every must be positive")
    T = run.multipliers.shape[0]
    inst = run.agents[0].instance
    probes = {t: probe_feasibility(run, t) for t in range(0, T, probe_every)}
    probes[T] = not check_solution(inst, [r.solution for r in run.routes])
    t_delta = T + 1
    for t in sorted(probes, reverse=True):
        if not probes[t]:
            break
        t_delta = t
    return t_delta, probes


def run_trial(config: TrialConfig, instance: PdvrpInstance | None = None) -> TrialResult:
    inst = instance or config.make_instance()
    gseed = config.seed if config.graph_seed is None else config.graph_seed
    graph = build_comm_graph(config.graph, inst.n_vehicles, gseed)

    t0 = time.perf_counter()
    agents = make_agents(inst, config.agent_config())
    run = run_synchronous(agents, graph, config.iterations, workers=config.workers)
    t1 = time.perf_counter()

    sols = [r.solution for r in run.routes]
    violations = check_solution(inst, sols)
    lhs = coverage(inst, sols)
    if np.any((lhs > 1e-6) & (lhs < 1.0 - 1e-6)):
        raise AssertionError("coverage is neither zero nor at least one")
    t_delta, probes = empirical_T_delta(run, config.probe_every)
    planned = run.planned_cost
    actuated = playback([r.route for r in run.routes], inst).actuated_cost if not violations else math.nan

    status, message = "ok", "; ".join(violations[:3])
    t2 = time.perf_counter()
    try:
        opt = centralized_optimum(inst, config.baseline, config.node_limit)
    except NodeLimit as exc:
        opt, status, message = math.nan, "baseline-node-limit", str(exc)
    t3 = time.perf_counter()

    rel = (planned - opt) / opt if opt > 0 else (0.0 if planned <= 1e-9 else math.inf)
    act = (actuated - opt) / opt if opt > 0 else 0.0
    return TrialResult(
        seed=config.seed, n_vehicles=inst.n_vehicles, n_pickups=inst.n_pickups, delta=config.delta,
        distributed_cost=planned, optimal_cost=opt, relative_error=rel,
        actuated_cost=actuated, actuated_error=act, t_delta=t_delta,
        feasible=not violations, feasible_at_start=probes[0],
        conservation_error=run.conservation_error(config.delta),
        time_distributed=t1 - t0, time_baseline=t3 - t2, status=status, message=message)


# ---- sweeps -----------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    n_vehicles: int
    n_pickups: int
    delta: float = 0.9


def run_montecarlo(cells: Iterable[Cell], trials: int, base_seed: int = 0,
                   template: TrialConfig | None = None, csv_path=None) -> list[TrialResult]:
    """``trials`` seeded trials per cell; failures are recorded and the sweep continues."""
    template = template or TrialConfig(seed=0, n_vehicles=1, n_pickups=1)
    results = []
    for cell in cells:
        for k in range(trials):
            cfg = dataclasses.replace(template, seed=base_seed + k, n_vehicles=cell.n_vehicles,
                                      n_pickups=cell.n_pickups, delta=cell.delta)
            try:
                res = run_trial(cfg)
            except Exception as exc:  # noqa: BLE001 - a failed trial is data, not a crash
                log.exception("trial %s failed", cfg)
                res = TrialResult(cfg.seed, cell.n_vehicles, cell.n_pickups, cell.delta, math.nan, math.nan,
                                  math.nan, math.nan, math.nan, cfg.iterations + 1, False, False, math.nan,
                                  0.0, 0.0, "error", repr(exc))
            log.info("N=%d P=%d delta=%g seed=%d err=%.3f feasible=%s", res.n_vehicles, res.n_pickups,
                     res.delta, res.seed, res.relative_error, res.feasible)
            results.append(res)
    if csv_path is not None:
        write_csv(results, csv_path)
    return results


CSV_FIELDS = [f.name for f in dataclasses.fields(TrialResult)]


def write_csv(results: Sequence[TrialResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        for r in results:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in dataclasses.asdict(r).items()})


def read_csv(path) -> list[TrialResult]:
    types = {f.name: f.type for f in dataclasses.fields(TrialResult)}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            vals = {}
            for k, v in row.items():
                t = types[k]
                if t == "int":
                    vals[k] = int(v)
                elif t == "float":
                    vals[k] = float(v)
                elif t == "bool":
                    vals[k] = v == "True"
                else:
                    vals[k] = v
            out.append(TrialResult(**vals))
    return out


def aggregate(results: Sequence[TrialResult]) -> dict[tuple[int, int, float], dict[str, float]]:
    """Per (N, |P|, delta): error statistics over usable trials, plus feasibility rate."""
    groups: dict[tuple[int, int, float], list[TrialResult]] = {}
    for r in results:
        groups.setdefault((r.n_vehicles, r.n_pickups, r.delta), []).append(r)
    table = {}
    for key, rs in sorted(groups.items()):
        ok = [r for r in rs if r.usable]
        err = np.array([r.relative_error for r in ok])
        act = np.array([r.actuated_error for r in ok])
        table[key] = {
            "trials": len(rs),
            "usable": len(ok),
            "feasible_rate": float(np.mean([r.feasible for r in rs])) if rs else math.nan,
            "mean_error": float(err.mean()) if ok else math.nan,
            "median_error": float(np.median(err)) if ok else math.nan,
            "p25_error": float(np.percentile(err, 25)) if ok else math.nan,
            "p75_error": float(np.percentile(err, 75)) if ok else math.nan,
            "mean_actuated_error": float(np.nanmean(act)) if ok else math.nan,
            "mean_optimal_cost": float(np.mean([r.optimal_cost for r in ok])) if ok else math.nan,
            "mean_distributed_cost": float(np.mean([r.distributed_cost for r in ok])) if ok else math.nan,
            "mean_t_delta": float(np.mean([r.t_delta for r in rs])) if rs else math.nan,
        }
    return table
