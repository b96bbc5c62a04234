"""Route execution with run-time deduplication of shared tasks.

Robots drive their planned routes as point masses at constant speed. Before
heading to a pickup, a robot asks the :class:`AuthLedger`; if another robot
already claimed it the robot skips the pickup and its delivery and goes straight
to its next granted location. Requests are served in simulated-time order, ties
broken by robot id.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .instance import PdvrpInstance

UNCLAIMED = "unclaimed"
GRANTED = "granted"
DONE = "done"


class UnknownTask(KeyError):
    pass


class AuthLedger:
    """Per-request status. Granting a pickup reserves its delivery for the same robot."""

    def __init__(self, n_requests: int, n_pickups: int):
        self.n_pickups = n_pickups
        self.status = [UNCLAIMED] * n_requests
        self.owner: list[int | None] = [None] * n_requests
        self.log: list[tuple[float, int, int, bool]] = []

    def _pair(self, task: int) -> tuple[int, int]:
        p = task % self.n_pickups
        return p, p + self.n_pickups

    def authorize(self, robot: int, task: int, time: float = 0.0) -> bool:
        if not 0 <= task < len(self.status):
            raise UnknownTask(task)
        p, d = self._pair(task)
        if self.owner[task] is None:
            self.status[p] = self.status[d] = GRANTED
            self.owner[p] = self.owner[d] = robot
            ok = True
        else:
            ok = self.owner[task] == robot and self.status[task] == GRANTED
        self.log.append((time, robot, task, ok))
        return ok

    def complete(self, robot: int, task: int) -> None:
        if self.owner[task] != robot or self.status[task] != GRANTED:
            raise RuntimeError(f"robot {robot} completes task {task} it does not hold")
        self.status[task] = DONE


@dataclass
class Event:
    time: float
    kind: str          # "start" | "arrive" | "skip" | "finish"
    vertex: int
    position: tuple[float, float]


@dataclass
class ExecutionReport:
    planned_cost: float
    actuated_cost: float
    timelines: dict[int, list[Event]]
    served: dict[int, int]            # request -> robot that performed it
    driven: dict[int, float]          # per-robot actuated distance cost

    @property
    def makespan(self) -> float:
        return max((tl[-1].time for tl in self.timelines.values() if tl), default=0.0)

    def polylines(self) -> dict[int, list[tuple[float, float]]]:
        return {i: [e.position for e in tl if e.kind != "skip"] for i, tl in self.timelines.items()}

    def to_dict(self) -> dict:
        return {
            "planned_cost": self.planned_cost,
            "actuated_cost": self.actuated_cost,
            "makespan": self.makespan,
            "served": {str(k): v for k, v in sorted(self.served.items())},
            "robots": {str(i): {"driven": self.driven[i],
                                "events": [e.__dict__ for e in tl],
                                "polyline": self.polylines()[i]}
                       for i, tl in sorted(self.timelines.items())},
        }

    def export(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, default=list)


def _positions(instance: PdvrpInstance, i: int) -> list[tuple[float, float]]:
    veh = instance.vehicles[i]
    pos = [tuple(veh.start_position)] + [tuple(r.position) for r in instance.requests]
    end = instance.end_point if instance.end_point is not None else (np.nan, np.nan)
    pos.append(tuple(end))
    return [(float(a), float(b)) for a, b in pos]


def playback(routes: Sequence[Sequence[int]], instance: PdvrpInstance,
             ledger: AuthLedger | None = None) -> ExecutionReport:
    """Discrete-event execution of one route per robot (vertex lists from s to sigma)."""
    nr, npk = instance.n_requests, instance.n_pickups
    sigma = instance.sigma
    ledger = ledger or AuthLedger(nr, npk)
    for i, route in enumerate(routes):
        if not route or route[0] != 0 or route[-1] != sigma:
            raise ValueError(f"robot {i}: route must run from s to sigma")
        seen = route[1:-1]
        if len(set(seen)) != len(seen):
            raise ValueError(f"robot {i}: route repeats a request")
        for v in seen:
            if v <= npk and v + npk not in seen or v > npk and v - npk not in seen:
                raise ValueError(f"robot {i}: request {v} without its partner")
            if v > npk and seen.index(v) < seen.index(v - npk):
                raise ValueError(f"robot {i}: delivery {v} before its pickup")

    planned = sum(float(sum(instance.costs[i][a, b] for a, b in zip(r[:-1], r[1:])))
                  for i, r in enumerate(routes))
    pos = [_positions(instance, i) for i in range(len(routes))]
    timelines = {i: [Event(0.0, "start", 0, pos[i][0])] for i in range(len(routes))}
    driven = {i: 0.0 for i in range(len(routes))}
    served: dict[int, int] = {}
    cursor = [1] * len(routes)
    here = [0] * len(routes)
    skipped: list[set[int]] = [set() for _ in routes]

    queue = [(0.0, i) for i in range(len(routes))]
    heapq.heapify(queue)
    while queue:
        now, i = heapq.heappop(queue)
        route = routes[i]
        # find the next location this robot may visit
        while True:
            v = route[cursor[i]]
            cursor[i] += 1
            if v == sigma:
                break
            if v in skipped[i]:
                continue
            if ledger.authorize(i, v - 1, now):
                break
            skipped[i].add(v)
            if v <= npk:
                skipped[i].add(v + npk)
            timelines[i].append(Event(now, "skip", v, pos[i][v]))
        c = instance.costs[i][here[i], v]
        t = instance.travel_times[i][here[i], v]
        driven[i] += float(c)
        where = pos[i][here[i]] if v == sigma and instance.virtual_end else pos[i][v]
        here[i] = v
        arrive = now + float(t)
        if v == sigma:
            timelines[i].append(Event(arrive, "finish", v, where))
            continue
        timelines[i].append(Event(arrive, "arrive", v, pos[i][v]))
        ledger.complete(i, v - 1)
        served[v - 1] = i
        heapq.heappush(queue, (arrive + float(instance.service[v]), i))

    return ExecutionReport(planned, float(sum(driven.values())), timelines, served, driven)
