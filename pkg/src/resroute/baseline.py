"""Centralized route guidance baselines.

Two planners built on A*:

* ``DynSP`` plans on a global snapshot of current mean link travel times,
  refreshed on a shared period-aligned clock, and replans each vehicle every
  period after its departure.  Plans may therefore run against weights up to
  one period old.
* ``DynResSP`` plans with a time-dependent A* whose link weights come from
  the per-link reservation ledgers, and announces every freshly planned path
  back into those ledgers, so later planners see the traffic that earlier
  plans have already committed.

Both follow the guidance-protocol interface of the simulation engine.
Replans take effect at a vehicle's next routing decision (a node), never
mid-link.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .network import RoadNetwork, standing_queue_time
from .reservation import PathReservation, ReservationEntry, ReservationLog, reserve_path


@dataclass(frozen=True)
class WeightSnapshot:
    """Frozen per-link travel-time weights, clamped to free-flow from below."""

    taken_at: int
    weights: dict[int, float]

    @classmethod
    def capture(
        cls, network: RoadNetwork, means: dict[int, float], taken_at: int
    ) -> "WeightSnapshot":
        weights = {}
        for lid, link in network.links.items():
            w = means.get(lid, link.t0)
            weights[lid] = w if w > link.t0 else link.t0
        return cls(taken_at, weights)


def _check_endpoints(network: RoadNetwork, origin: int, destination: int) -> None:
    if origin not in network.nodes:
        raise ValueError(f"unknown origin node {origin}")
    if destination not in network.nodes:
        raise ValueError(f"unknown destination node {destination}")


def astar(
    network: RoadNetwork, origin: int, destination: int, snapshot: WeightSnapshot
) -> list[int]:
    """Least-cost node path under snapshot weights, [] if unreachable.

    The heuristic is straight-line distance over the network's fastest
    free speed; cost ties in the frontier fall to the lower node id.
    """
    _check_endpoints(network, origin, destination)
    if origin == destination:
        return [origin]
    weights = snapshot.weights
    vmax = network.max_free_speed()

    g = {origin: 0.0}
    parent: dict[int, tuple[int, int]] = {}  # node -> (previous node, link id)
    done: set[int] = set()
    frontier = [(network.node_distance(origin, destination) / vmax, origin)]
    while frontier:
        _, node = heapq.heappop(frontier)
        if node in done:
            continue
        if node == destination:
            break
        done.add(node)
        base = g[node]
        for link in network.out_links[node]:
            to = link.to_node
            if to in done:
                continue
            cand = base + weights[link.id]
            if cand < g.get(to, float("inf")):
                g[to] = cand
                parent[to] = (node, link.id)
                h = network.node_distance(to, destination) / vmax
                heapq.heappush(frontier, (cand + h, to))
    if destination not in g:
        return []
    path = [destination]
    while path[-1] != origin:
        path.append(parent[path[-1]][0])
    path.reverse()
    return path


LinkCostAt = Callable[[object, float], float]


def _reservation_cost(logs: dict[int, ReservationLog]) -> LinkCostAt:
    def cost(link, t_enter: float) -> float:
        flow = logs[link.id].expected_flow(t_enter) + 1
        return standing_queue_time(link.t0, flow, link.capacity_hat)

    return cost


def time_dependent_astar(
    network: RoadNetwork,
    origin: int,
    destination: int,
    depart: float,
    logs: dict[int, ReservationLog],
    variant_cost: LinkCostAt | None = None,
) -> tuple[list[int], list[ReservationEntry]]:
    """Earliest-arrival path when link weights depend on the entry time.

    Relaxing a link entered at time t uses ``variant_cost(link, t)``,
    defaulting to the standing-queue time for the ledger's expected flow
    plus the planning vehicle itself.  Costs below free flow are clamped
    up to t0 so that leaving earlier never predicts a later arrival.
    Returns the node path together with per-link (enter, exit) times;
    ([origin], []) when origin == destination, ([], []) when unreachable.
    """
    _check_endpoints(network, origin, destination)
    if origin == destination:
        return [origin], []
    cost = variant_cost if variant_cost is not None else _reservation_cost(logs)
    vmax = network.max_free_speed()

    g = {origin: float(depart)}
    parent: dict[int, tuple[int, int]] = {}
    done: set[int] = set()
    frontier = [(network.node_distance(origin, destination) / vmax, origin)]
    while frontier:
        _, node = heapq.heappop(frontier)
        if node in done:
            continue
        if node == destination:
            break
        done.add(node)
        t_here = g[node]
        for link in network.out_links[node]:
            to = link.to_node
            if to in done:
                continue
            w = cost(link, t_here)
            if w < link.t0:
                w = link.t0
            cand = t_here + w
            if cand < g.get(to, float("inf")):
                g[to] = cand
                parent[to] = (node, link.id)
                h = network.node_distance(to, destination) / vmax
                heapq.heappush(frontier, (cand + h, to))
    if destination not in g:
        return [], []
    path = [destination]
    hops: list[int] = []
    while path[-1] != origin:
        prev, lid = parent[path[-1]]
        hops.append(lid)
        path.append(prev)
    path.reverse()
    hops.reverse()
    entries = []
    for i, lid in enumerate(hops):
        entries.append(ReservationEntry(lid, g[path[i]], g[path[i + 1]]))
    return path, entries


def replan_scheduler(vehicle, period: int, now: int) -> bool:
    """True exactly at the vehicle's departure and every full period after."""
    if period <= 0:
        raise ValueError("replan period must be positive")
    if now < vehicle.departure:
        return False
    return (now - vehicle.departure) % period == 0


def _replan_due(departure: int, planned_at: int, period: int, now: int) -> bool:
    """Has a scheduled replan time passed since the last plan was made?

    Scheduled times are departure + k * period.  A plan made late (at a
    routing decision after the scheduled second) covers the slot it follows.
    """
    return (now - departure) // period > (planned_at - departure) // period


@dataclass
class _Plan:
    path: list[int]
    planned_at: int
    index: int = 0
    reservation: PathReservation | None = None


class _PathFollower:
    """Shared plan bookkeeping: store a node path, hand out the next hop."""

    def __init__(self, period_s: int):
        if period_s <= 0:
            raise ValueError("period_s must be positive")
        self.period = int(period_s)
        self.engine = None
        self._plans: dict[int, _Plan] = {}

    def bind(self, engine) -> None:
        self.engine = engine

    def advance(self, now: int) -> None:
        pass

    def notify_arrival(self, vehicle, now: int) -> None:
        self._plans.pop(vehicle.id, None)

    def _needs_plan(self, vehicle, node: int, now: int) -> bool:
        plan = self._plans.get(vehicle.id)
        if plan is None:
            return True
        if _replan_due(vehicle.departure, plan.planned_at, self.period, now):
            return True
        # Off the stored path (should not happen on a static network).
        return plan.path[plan.index] != node

    def choose_next(self, vehicle, node: int, now: int) -> int | None:
        if self._needs_plan(vehicle, node, now):
            if not self._replan(vehicle, node, now):
                return None
        plan = self._plans[vehicle.id]
        nxt = plan.path[plan.index + 1]
        plan.index += 1
        return nxt

    def _replan(self, vehicle, node: int, now: int) -> bool:
        raise NotImplementedError


class DynSP(_PathFollower):
    """Periodic A* replanning over a shared snapshot of current mean times."""

    def __init__(self, period_s: int = 1800, snapshot_period_s: int | None = None):
        super().__init__(period_s)
        snap = period_s if snapshot_period_s is None else snapshot_period_s
        if snap <= 0:
            raise ValueError("snapshot_period_s must be positive")
        self.snapshot_period = int(snap)
        self.snapshot: WeightSnapshot | None = None

    def bind(self, engine) -> None:
        super().bind(engine)
        self._take_snapshot(0)

    def _take_snapshot(self, now: int) -> None:
        eng = self.engine
        clamped = np.maximum(eng.cur_mean, eng.t0_arr)
        weights = {lid: float(clamped[i]) for i, lid in enumerate(eng.link_ids)}
        self.snapshot = WeightSnapshot(now, weights)

    def advance(self, now: int) -> None:
        if now % self.snapshot_period == 0 and now != self.snapshot.taken_at:
            self._take_snapshot(now)

    def _replan(self, vehicle, node: int, now: int) -> bool:
        path = astar(self.engine.network, node, vehicle.destination, self.snapshot)
        if len(path) < 2:
            return False
        self._plans[vehicle.id] = _Plan(path, now)
        return True


class DynResSP(_PathFollower):
    """Reservation-aware replanning: plans against the ledgers, then books
    the planned itinerary back into them."""

    def __init__(self, period_s: int = 1800):
        super().__init__(period_s)

    def advance(self, now: int) -> None:
        if now % 60 == 0:
            for log in self.engine.reservation_logs.values():
                log.prune(now)

    def _replan(self, vehicle, node: int, now: int) -> bool:
        logs = self.engine.reservation_logs
        old = self._plans.get(vehicle.id)
        old_res = old.reservation if old else None
        if old_res is not None:
            # Release the vehicle's own future bookings before planning: the
            # planner already adds +1 for the vehicle itself, so leaving the
            # old booking in place would double-count it and make replanning
            # non-idempotent.
            reserve_path(logs, old_res, PathReservation(vehicle.id, ()), now)
        path, entries = time_dependent_astar(
            self.engine.network, node, vehicle.destination, now, logs
        )
        if len(path) < 2:
            if old_res is not None:
                for e in old_res.entries:  # restore what was released
                    if e.t_enter >= now:
                        logs[e.link].register(e.t_enter, e.t_exit)
            return False
        booking = PathReservation(vehicle.id, tuple(entries))
        reserve_path(logs, None, booking, now)
        self._plans[vehicle.id] = _Plan(path, now, reservation=booking)
        return True

    def notify_arrival(self, vehicle, now: int) -> None:
        plan = self._plans.pop(vehicle.id, None)
        if plan is not None and plan.reservation is not None:
            # Release slots the vehicle no longer needs: it beat its booking.
            reserve_path(
                self.engine.reservation_logs,
                plan.reservation,
                PathReservation(vehicle.id, ()),
                now,
            )
