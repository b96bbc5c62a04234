# ---
# jupyter:
#   jupytext:
#     formats: ipynb,py
#     text_representation:
#       extension: .py
#       format_name: light
#       format_version: '1.5'
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# # Mixed fleets and the choice of delta
#
# First a fleet with one large robot and several small ones. Small robots
# cannot lift every load, so each robot only plans over the requests it can
# carry. Then we vary `delta`, the total share handed out per request.

# +
import numpy as np

from distpdvrp import AgentConfig, build_comm_graph, generate_mixed_fleet_instance
from distpdvrp.evaluate import allowed_requests, check_solution
from distpdvrp.harness import TrialConfig, run_trial
from distpdvrp.instance import local_request_set
from distpdvrp.network import make_agents, run_synchronous

inst = generate_mixed_fleet_instance(seed=4, n_vehicles=4, n_pickups=3)
print("demands", inst.demand[1:inst.n_pickups + 1].round(2))
for v in inst.vehicles:
    print(f"robot {v.id}: capacity {v.capacity:.2f}, may serve requests {local_request_set(inst, v.id)}")
# -

run = run_synchronous(make_agents(inst, AgentConfig()), build_comm_graph("cycle", inst.n_vehicles))
sols = [r.solution for r in run.routes]
print("violations:", check_solution(inst, sols) or "none")
for s in sols:
    extra = set(s.visited_requests()) - set(allowed_requests(inst, s.vehicle))
    print(f"robot {s.vehicle}: route {s.route(inst.sigma)}, outside its set: {sorted(extra) or 'nothing'}")

# ## Delta
#
# The shares of each request always add up to `delta`, so in a fleet where
# every robot can carry every load some robot holds a positive share and the
# plan is feasible at every round. Smaller `delta` leaves less to hand out,
# which tends to push more robots to zero or below on each request.

for delta in (0.1, 0.5, 0.9):
    res = [run_trial(TrialConfig(seed=s, n_vehicles=4, n_pickups=3, delta=delta, iterations=100))
           for s in range(5)]
    print(f"delta={delta}: T_delta per seed {[r.t_delta for r in res]}, "
          f"mean planned error {np.mean([r.relative_error for r in res]):.0%}")
