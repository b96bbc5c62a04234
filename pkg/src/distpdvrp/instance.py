"""Pickup-and-delivery instances, task graphs and random generation.

Vertex numbering used throughout the package: ``0`` is the start ``s``,
``1..|R|`` are the requests (pickups first, then deliveries, so pickup ``j``
pairs with delivery ``j + |P|``) and ``|R| + 1`` is the end point ``sigma``.
Request *indices* (as opposed to vertex numbers) are 0-based: request ``r``
lives at vertex ``r + 1``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FORMAT_VERSION = 1
DEFAULT_SPEED = 0.2  # m/s
SERVICE_TIME_RANGE = (3.0, 5.0)  # s
DEFAULT_AREA = (0.0, 0.0, 50.0, 50.0)  # m; sized so the default step sizes move allocations


class InstanceError(ValueError):
    """Raised for malformed or infeasible-by-construction instances."""


@dataclass(frozen=True)
class Request:
    id: int
    kind: str  # "pickup" | "delivery"
    position: tuple[float, float]
    demand: float
    service_time: float
    pair_id: int


@dataclass(frozen=True)
class Vehicle:
    id: int
    start_position: tuple[float, float]
    capacity: float
    initial_load: float = 0.0
    speed: float = DEFAULT_SPEED

    def __post_init__(self):
        if self.capacity < 0:
            raise InstanceError(f"vehicle {self.id}: negative capacity")
        if self.initial_load < 0 or self.initial_load > self.capacity:
            raise InstanceError(f"vehicle {self.id}: initial load outside [0, capacity]")
        if self.speed <= 0:
            raise InstanceError(f"vehicle {self.id}: speed must be positive")


@dataclass(frozen=True, eq=False)
class PdvrpInstance:
    """Vehicles, paired requests and an end point.

    ``end_point=None`` means a virtual end: arcs into ``sigma`` cost nothing and
    take no time, so a vehicle simply stops after its last service.
    """

    vehicles: tuple[Vehicle, ...]
    requests: tuple[Request, ...]
    end_point: tuple[float, float] | None = None
    heterogeneous: bool = False

    def __post_init__(self):
        object.__setattr__(self, "vehicles", tuple(self.vehicles))
        object.__setattr__(self, "requests", tuple(self.requests))
        _validate_requests(self.requests)
        if not self.vehicles:
            raise InstanceError("instance needs at least one vehicle")
        if not self.heterogeneous:
            qmax = max(r.demand for r in self.requests)
            for v in self.vehicles:
                if v.capacity < qmax:
                    raise InstanceError(
                        f"vehicle {v.id} capacity {v.capacity} below max demand {qmax}; "
                        "enable heterogeneous mode")

    @property
    def n_vehicles(self) -> int:
        return len(self.vehicles)

    @property
    def n_pickups(self) -> int:
        return len(self.requests) // 2

    @property
    def n_requests(self) -> int:
        return len(self.requests)

    @property
    def n_vertices(self) -> int:
        return len(self.requests) + 2

    @property
    def sigma(self) -> int:
        return len(self.requests) + 1

    @property
    def virtual_end(self) -> bool:
        return self.end_point is None

    @cached_property
    def demand(self) -> np.ndarray:
        """Per-vertex demand, zero at ``s`` and ``sigma``."""
        q = np.zeros(self.n_vertices)
        q[1:-1] = [r.demand for r in self.requests]
        return q

    @cached_property
    def service(self) -> np.ndarray:
        d = np.zeros(self.n_vertices)
        d[1:-1] = [r.service_time for r in self.requests]
        return d

    def vertex_positions(self, i: int) -> np.ndarray:
        """Coordinates of ``s, 1..|R|, sigma`` as seen by vehicle ``i``."""
        pts = [self.vehicles[i].start_position]
        pts += [r.position for r in self.requests]
        pts.append(self.end_point if self.end_point is not None else (math.nan, math.nan))
        return np.array(pts, dtype=float)

    @cached_property
    def costs(self) -> np.ndarray:
        """``costs[i, j, k]``: Euclidean arc length for vehicle ``i``."""
        nv = self.n_vertices
        out = np.zeros((self.n_vehicles, nv, nv))
        for i in range(self.n_vehicles):
            p = self.vertex_positions(i)
            diff = p[:, None, :] - p[None, :, :]
            c = np.sqrt((diff ** 2).sum(axis=-1))
            if self.virtual_end:
                c[:, -1] = 0.0
                c[-1, :] = 0.0
            np.fill_diagonal(c, 0.0)
            out[i] = c
        out.setflags(write=False)
        return out

    @cached_property
    def travel_times(self) -> np.ndarray:
        speeds = np.array([v.speed for v in self.vehicles])
        t = self.costs / speeds[:, None, None]
        t.setflags(write=False)
        return t

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "heterogeneous": self.heterogeneous,
            "end_point": None if self.end_point is None else list(self.end_point),
            "vehicles": [
                {"start": list(v.start_position), "capacity": v.capacity,
                 "initial_load": v.initial_load, "speed": v.speed}
                for v in self.vehicles
            ],
            "pickups": [
                {"position": list(p.position), "demand": p.demand,
                 "service_time": p.service_time,
                 "delivery": {"position": list(d.position), "service_time": d.service_time}}
                for p, d in zip(self.requests[: self.n_pickups], self.requests[self.n_pickups:])
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PdvrpInstance":
        version = data.get("format_version")
        if version != FORMAT_VERSION:
            raise InstanceError(f"unsupported format_version {version!r}")
        vehicles = [
            Vehicle(i, tuple(v["start"]), float(v["capacity"]),
                    float(v.get("initial_load", 0.0)), float(v.get("speed", DEFAULT_SPEED)))
            for i, v in enumerate(data["vehicles"])
        ]
        pickups = data["pickups"]
        requests = make_requests(
            [tuple(p["position"]) for p in pickups],
            [tuple(p["delivery"]["position"]) for p in pickups],
            [float(p["demand"]) for p in pickups],
            [float(p["service_time"]) for p in pickups]
            + [float(p["delivery"]["service_time"]) for p in pickups],
        )
        end = data.get("end_point")
        return cls(tuple(vehicles), tuple(requests),
                   None if end is None else tuple(end), bool(data.get("heterogeneous", False)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PdvrpInstance":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json() + "\n")
        return path

    @classmethod
    def load(cls, path) -> "PdvrpInstance":
        return cls.from_json(Path(path).read_text())


def _validate_requests(requests: Sequence[Request]) -> None:
    n = len(requests)
    if n == 0 or n % 2:
        raise InstanceError("need |P| = |D| >= 1 paired requests")
    npk = n // 2
    for idx, r in enumerate(requests):
        if r.id != idx:
            raise InstanceError(f"request ids must be 0..{n - 1} in order")
        expected_kind = "pickup" if idx < npk else "delivery"
        if r.kind != expected_kind:
            raise InstanceError(f"request {idx} should be a {expected_kind}")
        pair = idx + npk if idx < npk else idx - npk
        if r.pair_id != pair or requests[pair].pair_id != idx:
            raise InstanceError(f"request {idx} is not paired with {pair}")
        if r.service_time < 0:
            raise InstanceError(f"request {idx}: negative service time")
        if idx < npk:
            if r.demand <= 0:
                raise InstanceError(f"pickup {idx} must have positive demand")
            if requests[pair].demand != -r.demand:
                raise InstanceError(f"delivery {pair} demand must equal minus pickup {idx}")


def make_requests(pickup_pos, delivery_pos, demands, service_times) -> list[Request]:
    """Pair ``pickup_pos[j]`` with ``delivery_pos[j]``; ``service_times`` has length ``2|P|``."""
    npk = len(pickup_pos)
    if len(delivery_pos) != npk or len(demands) != npk or len(service_times) != 2 * npk:
        raise InstanceError("inconsistent request list lengths")
    out = []
    for j in range(npk):
        out.append(Request(j, "pickup", tuple(map(float, pickup_pos[j])), float(demands[j]),
                           float(service_times[j]), j + npk))
    for j in range(npk):
        out.append(Request(j + npk, "delivery", tuple(map(float, delivery_pos[j])),
                           -float(demands[j]), float(service_times[j + npk]), j))
    return out


@dataclass(frozen=True)
class TaskGraph:
    """Admissible arcs over ``{s, sigma} u requests`` (optionally a local subset)."""

    n_requests: int
    requests: tuple[int, ...]  # request indices present (all of R unless local)
    vertices: tuple[int, ...] = field(init=False)
    edges: tuple[tuple[int, int], ...] = field(init=False)

    def __post_init__(self):
        sigma = self.n_requests + 1
        verts = (0,) + tuple(r + 1 for r in self.requests) + (sigma,)
        edges = tuple((j, k) for j in verts for k in verts
                      if j != k and j != sigma and k != 0)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "edges", edges)

    @property
    def sigma(self) -> int:
        return self.n_requests + 1

    def out_arcs(self, j: int) -> list[int]:
        """Positions in ``edges`` of arcs leaving vertex ``j``."""
        return [e for e, (a, _) in enumerate(self.edges) if a == j]

    def in_arcs(self, k: int) -> list[int]:
        return [e for e, (_, b) in enumerate(self.edges) if b == k]

    def check(self) -> None:
        sigma = self.sigma
        seen = set()
        for j, k in self.edges:
            if j == k or j == sigma or k == 0:
                raise InstanceError(f"inadmissible arc {(j, k)}")
            if (j, k) in seen:
                raise InstanceError(f"duplicate arc {(j, k)}")
            seen.add((j, k))
        nr = len(self.requests)
        if len(self.edges) != (nr + 1) ** 2 - nr:
            raise InstanceError("edge count does not match the admissible-arc definition")


def build_task_graph(instance: PdvrpInstance, requests: Iterable[int] | None = None) -> TaskGraph:
    """Task graph over all requests, or over ``requests`` (a local set R_i)."""
    if instance.n_pickups < 1:
        raise InstanceError("need at least one pickup/delivery pair")
    reqs = tuple(range(instance.n_requests)) if requests is None else tuple(sorted(requests))
    npk = instance.n_pickups
    present = set(reqs)
    for r in reqs:
        pair = r + npk if r < npk else r - npk
        if pair not in present:
            raise InstanceError(f"request {r} present without its pair {pair}")
    return TaskGraph(instance.n_requests, reqs)


def local_request_set(instance: PdvrpInstance, i: int) -> tuple[int, ...]:
    """Largest set of requests vehicle ``i`` can carry, kept closed under pairing."""
    cap = instance.vehicles[i].capacity
    npk = instance.n_pickups
    ok = [j for j in range(npk) if cap >= instance.requests[j].demand]
    return tuple(ok) + tuple(j + npk for j in ok)


def local_graph(instance: PdvrpInstance, i: int) -> TaskGraph:
    if not instance.heterogeneous:
        return build_task_graph(instance)
    return build_task_graph(instance, local_request_set(instance, i))


def uncovered_requests(instance: PdvrpInstance) -> list[int]:
    """Requests that no vehicle can serve (empty list means coverable)."""
    covered = set()
    for i in range(instance.n_vehicles):
        covered.update(local_request_set(instance, i))
    return [j for j in range(instance.n_requests) if j not in covered]


def check_coverable(instance: PdvrpInstance) -> None:
    missing = uncovered_requests(instance)
    if missing:
        raise InstanceError(f"requests {missing} cannot be served by any vehicle")


def generate_random_instance(
    seed: int,
    n_vehicles: int,
    n_pickups: int,
    area: tuple[float, float, float, float] = DEFAULT_AREA,
    capacity_range: tuple[float, float] = (5.0, 10.0),
    demand_range: tuple[float, float] = (1.0, 5.0),
    heterogeneous: bool = False,
    split_halves: bool = True,
    speed: float = DEFAULT_SPEED,
    virtual_end: bool = True,
) -> PdvrpInstance:
    """Uniform random instance in ``area = (xmin, ymin, xmax, ymax)``.

    Pickups fall in the right half of the area and deliveries in the left half
    unless ``split_halves`` is off. Capacities and demands are uniform in their
    ranges; service times are uniform in [3, 5] s.
    """
    if n_vehicles < 1 or n_pickups < 1:
        raise InstanceError("need at least one vehicle and one pickup")
    x0, y0, x1, y1 = map(float, area)
    if not (x1 > x0 and y1 > y0):
        raise InstanceError(f"empty area {area}")
    clo, chi = capacity_range
    qlo, qhi = demand_range
    if clo > chi or qlo > qhi or qlo <= 0 or clo < 0:
        raise InstanceError("inconsistent capacity/demand ranges")
    if not heterogeneous and qhi > clo:
        raise InstanceError("homogeneous mode needs demand upper bound <= capacity lower bound")

    rng = np.random.default_rng(seed)
    xm = 0.5 * (x0 + x1)
    if split_halves:
        pk = np.column_stack([rng.uniform(xm, x1, n_pickups), rng.uniform(y0, y1, n_pickups)])
        dl = np.column_stack([rng.uniform(x0, xm, n_pickups), rng.uniform(y0, y1, n_pickups)])
    else:
        pk = np.column_stack([rng.uniform(x0, x1, n_pickups), rng.uniform(y0, y1, n_pickups)])
        dl = np.column_stack([rng.uniform(x0, x1, n_pickups), rng.uniform(y0, y1, n_pickups)])
    starts = np.column_stack([rng.uniform(x0, x1, n_vehicles), rng.uniform(y0, y1, n_vehicles)])
    caps = rng.uniform(clo, chi, n_vehicles)
    demands = rng.uniform(qlo, qhi, n_pickups)
    service = rng.uniform(*SERVICE_TIME_RANGE, 2 * n_pickups)

    vehicles = tuple(Vehicle(i, tuple(map(float, starts[i])), float(caps[i]), 0.0, speed)
                     for i in range(n_vehicles))
    requests = make_requests(pk, dl, demands, service)
    end = None if virtual_end else (x0, y0)
    inst = PdvrpInstance(vehicles, tuple(requests), end, heterogeneous)
    if heterogeneous:
        check_coverable(inst)
    return inst


def generate_mixed_fleet_instance(seed: int, n_vehicles: int, n_pickups: int,
                                  area: tuple[float, float, float, float] = DEFAULT_AREA,
                                  big_capacity: float = 10.0, small_capacity: tuple[float, float] = (1.0, 4.0),
                                  demand_range: tuple[float, float] = (1.0, 8.0)) -> PdvrpInstance:
    """Heterogeneous instance: vehicle 0 can carry anything, the rest are small.

    Demands are redrawn until at least one exceeds some vehicle's capacity, so
    the local request sets genuinely differ.
    """
    if n_vehicles < 2:
        raise InstanceError("a mixed fleet needs at least two vehicles")
    base = generate_random_instance(seed, n_vehicles, n_pickups, area, capacity_range=(big_capacity, big_capacity),
                                    demand_range=(1.0, 1.0), heterogeneous=True)
    rng = np.random.default_rng([seed, 1])
    caps = np.concatenate([[big_capacity], rng.uniform(*small_capacity, n_vehicles - 1)])
    while True:
        demands = rng.uniform(*demand_range, n_pickups)
        if demands.max() > caps.min():
            break
    vehicles = tuple(Vehicle(v.id, v.start_position, float(c), 0.0, v.speed)
                     for v, c in zip(base.vehicles, caps))
    pk = [r.position for r in base.requests[:n_pickups]]
    dl = [r.position for r in base.requests[n_pickups:]]
    service = [r.service_time for r in base.requests]
    inst = PdvrpInstance(vehicles, tuple(make_requests(pk, dl, demands, service)), base.end_point, True)
    check_coverable(inst)
    return inst


def two_robot_instance() -> PdvrpInstance:
    """Two vehicles, two pickup/delivery pairs; vehicle 0 serves pair 0, vehicle 1 pair 1.

    Each vehicle starts right next to "its" pickup and that pickup's delivery
    lies straight ahead, far from the other pair.
    """
    vehicles = (Vehicle(0, (0.0, 0.0), 5.0), Vehicle(1, (0.0, 50.0), 5.0))
    requests = make_requests(
        pickup_pos=[(10.0, 0.0), (10.0, 50.0)],
        delivery_pos=[(30.0, 0.0), (30.0, 50.0)],
        demands=[1.0, 2.0],
        service_times=[4.0, 3.5, 3.0, 4.5],
    )
    return PdvrpInstance(vehicles, tuple(requests))
