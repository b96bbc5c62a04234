"""Command line entry point: ``distpdvrp {gen,solve-central,solve-distributed,montecarlo,evaluate}``.

Every solving command exits with status 0 only if the produced plan passes the
independent feasibility check.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .bnb import solve_exact_dp, solve_milp
from .evaluate import check_solution, total_cost
from .harness import Cell, TrialConfig, aggregate, run_montecarlo
from .instance import DEFAULT_AREA, PdvrpInstance, generate_mixed_fleet_instance, generate_random_instance
from .milp import RouteSolution, build_centralized_milp, route_to_solution
from .mission import playback
from .network import build_comm_graph, make_agents, run_synchronous
from .primal_decomp import AgentConfig


def _solution_to_dict(instance: PdvrpInstance, sols: list[RouteSolution]) -> dict:
    return {
        "cost": total_cost(instance, sols),
        "vehicles": [{
            "vehicle": s.vehicle,
            "route": s.route(instance.sigma),
            "x": [[j, k, v] for (j, k), v in sorted(s.x.items()) if v],
            "B": {str(k): v for k, v in sorted(s.B.items())},
            "Q": {str(k): v for k, v in sorted(s.Q.items())},
        } for s in sols],
    }


def _solution_from_dict(instance: PdvrpInstance, data: dict) -> list[RouteSolution]:
    sols = []
    for rec in data["vehicles"]:
        i = int(rec["vehicle"])
        if "x" in rec:
            x = {(int(j), int(k)): float(v) for j, k, v in rec["x"]}
            sols.append(RouteSolution(i, x, {int(k): float(v) for k, v in rec["B"].items()},
                                      {int(k): float(v) for k, v in rec["Q"].items()}))
        else:
            sols.append(route_to_solution(instance, i, [int(v) for v in rec["route"]]))
    return sols


def _instance(args) -> PdvrpInstance:
    if getattr(args, "instance", None):
        return PdvrpInstance.load(args.instance)
    if getattr(args, "mixed_fleet", False):
        return generate_mixed_fleet_instance(args.seed, args.vehicles, args.pickups, tuple(args.area))
    return generate_random_instance(args.seed, args.vehicles, args.pickups, tuple(args.area),
                                    heterogeneous=args.heterogeneous)


def _report(instance, sols, out) -> int:
    bad = check_solution(instance, sols)
    cost = total_cost(instance, sols)
    for s in sols:
        print(f"vehicle {s.vehicle}: {s.route(instance.sigma)}")
    print(f"cost {cost:.6f}  feasible {not bad}")
    for msg in bad:
        print("  violation:", msg)
    if out:
        with open(out, "w") as fh:
            json.dump(_solution_to_dict(instance, sols), fh, indent=1)
    return 0 if not bad else 1


def cmd_gen(args) -> int:
    inst = _instance(args)
    if args.out:
        inst.save(args.out)
    else:
        print(inst.to_json())
    return 0


def cmd_solve_central(args) -> int:
    inst = _instance(args)
    if args.export_lp:
        with open(args.export_lp, "w") as fh:
            fh.write(build_centralized_milp(inst).model.to_lp_format())
    if args.method == "bnb":
        central = build_centralized_milp(inst)
        res = solve_milp(central.model)
        if res.x is None:
            print("centralized MILP infeasible")
            return 1
        sols = [s.rounded() for s in central.split(res.x)]
        print(f"branch and bound: {res.nodes} nodes")
    else:
        _, plan = solve_exact_dp(inst)
        sols = [route_to_solution(inst, i, [0, *plan[i], inst.sigma]) for i in range(inst.n_vehicles)]
    return _report(inst, sols, args.out)


def cmd_solve_distributed(args) -> int:
    inst = _instance(args)
    cfg = AgentConfig(penalty=args.penalty, delta=args.delta, iterations=args.iterations,
                      averaging=args.averaging == "on", hull=args.hull)
    graph = build_comm_graph(args.graph, inst.n_vehicles, args.graph_seed)
    run = run_synchronous(make_agents(inst, cfg), graph, cfg.iterations, workers=args.workers)
    if args.trace:
        run.export_trace(args.trace)
    sols = [r.solution for r in run.routes]
    code = _report(inst, sols, args.out)
    if code == 0:
        rep = playback([r.route for r in run.routes], inst)
        print(f"actuated cost after deduplication {rep.actuated_cost:.6f}")
    print(f"allocation sum drift {run.conservation_error(args.delta):.3g}")
    return code


def cmd_montecarlo(args) -> int:
    template = TrialConfig(seed=0, n_vehicles=1, n_pickups=1, iterations=args.iterations,
                           penalty=args.penalty, graph=args.graph, averaging=args.averaging == "on",
                           probe_every=args.probe_every, heterogeneous=args.heterogeneous,
                           area=tuple(args.area), hull=args.hull)
    cells = [Cell(n, p, d) for n in args.vehicles for p in args.pickups for d in args.delta]
    results = run_montecarlo(cells, args.trials, args.seed, template, args.out)
    print("N  |P|  delta  trials  feasible  mean_err  median_err  mean_actuated  mean_T_delta")
    for (n, p, d), row in aggregate(results).items():
        print(f"{n:<3d}{p:<5d}{d:<7g}{row['trials']:<8d}{row['feasible_rate']:<10.2f}"
              f"{row['mean_error']:<10.3f}{row['median_error']:<12.3f}{row['mean_actuated_error']:<15.3f}"
              f"{row['mean_t_delta']:.1f}")
    return 0 if all(r.feasible for r in results) else 1


def cmd_evaluate(args) -> int:
    inst = PdvrpInstance.load(args.instance)
    with open(args.solution) as fh:
        sols = _solution_from_dict(inst, json.load(fh))
    return _report(inst, sols, None)


def _instance_flags(p, with_file=True):
    if with_file:
        p.add_argument("--instance", help="instance JSON file (otherwise one is generated)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vehicles", type=int, default=3)
    p.add_argument("--pickups", type=int, default=3)
    p.add_argument("--area", type=float, nargs=4, default=list(DEFAULT_AREA),
                   metavar=("XMIN", "YMIN", "XMAX", "YMAX"))
    p.add_argument("--heterogeneous", action="store_true")
    p.add_argument("--mixed-fleet", action="store_true", help="one large vehicle, the rest small")


def _algorithm_flags(p):
    p.add_argument("--iterations", type=int, default=250)
    p.add_argument("--penalty", type=float, default=None)
    p.add_argument("--graph", choices=["complete", "cycle", "random-connected"], default="complete")
    p.add_argument("--averaging", choices=["on", "off"], default="on")
    p.add_argument("--hull", choices=["exact", "relaxed"], default="exact")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distpdvrp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a random instance")
    _instance_flags(p, with_file=False)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve-central", help="solve the fleet problem exactly")
    _instance_flags(p)
    p.add_argument("--method", choices=["bnb", "dp"], default="bnb")
    p.add_argument("--export-lp", metavar="PATH", help="also write the fleet MILP in LP format for other solvers")
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve_central)

    p = sub.add_parser("solve-distributed", help="run the distributed allocation scheme")
    _instance_flags(p)
    _algorithm_flags(p)
    p.add_argument("--delta", type=float, default=0.9)
    p.add_argument("--graph-seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--trace", help="write per-round JSON lines here")
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve_distributed)

    p = sub.add_parser("montecarlo", help="seeded sweep against the exact optimum")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vehicles", type=int, nargs="+", default=[3, 5, 10])
    p.add_argument("--pickups", type=int, nargs="+", default=[5])
    p.add_argument("--delta", type=float, nargs="+", default=[0.9])
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--area", type=float, nargs=4, default=list(DEFAULT_AREA))
    p.add_argument("--heterogeneous", action="store_true")
    p.add_argument("--probe-every", type=int, default=10)
    _algorithm_flags(p)
    p.add_argument("--out", help="CSV file for per-trial results")
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("evaluate", help="check a solution file against an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--solution", required=True)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
