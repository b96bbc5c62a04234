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

# # Two robots, two requests
#
# A hand-sized instance where the optimal plan is obvious: each robot drives
# straight along its own lane, picks up one load and drops it further on.
# We solve it exactly, then let the robots negotiate the split themselves by
# exchanging coverage prices with each other.

# +
import numpy as np

from distpdvrp import AgentConfig, two_robot_instance, run_distributed
from distpdvrp.bnb import solve_exact_dp
from distpdvrp.mission import playback

np.set_printoptions(precision=3, suppress=True)
inst = two_robot_instance()
for v in inst.vehicles:
    print(f"robot {v.id} starts at {v.start_position}, capacity {v.capacity}")
for r in inst.requests:
    print(f"vertex {r.id + 1}: {r.kind:8s} at {r.position}, demand {r.demand:+.1f}")
# -

# The exact solver enumerates, per robot, the cheapest route for every subset
# of pairs and then picks the best partition.

cost, plan = solve_exact_dp(inst)
print("optimal cost", cost)
print("plan", plan)

# ## Distributed allocation
#
# Every robot starts with an equal share `delta / N` of each request. In each
# round it prices its share with a small LP and moves the share towards robots
# that find the request cheaper.

run = run_distributed(inst, AgentConfig())
for t in (0, 1, 10, 50, 125, 250):
    print(f"t={t:3d}\n{run.allocations[t]}")

# After the last round each robot keeps the requests with a positive averaged
# share and computes its cheapest route through them.

print("thresholded allocation\n", run.y_end)
for r in run.routes:
    print(f"robot {r.vehicle}: {r.route}  cost {r.cost:.1f}")
print("planned cost", run.planned_cost)

# ## Execution
#
# The robots drive their routes at 0.2 m/s. Each task is confirmed with a
# shared ledger right before departure, so a task planned by two robots would
# be performed only once. Here the plans are already disjoint.

report = playback([r.route for r in run.routes], inst)
for i, events in report.timelines.items():
    print(f"robot {i}:", [(e.kind, e.vertex, round(e.time, 1)) for e in events])
print("actuated cost", report.actuated_cost, "makespan", round(report.makespan, 1))
