"""Queue-based traffic simulation engine.

Time advances in fixed 1 s steps.  Each link holds a FIFO queue; a vehicle
entering a link at time t may leave it earliest at t + t0.  Outflow is
rate-limited by a credit accumulator per link: credit accrues at
capacity_hat / 3600 per second and is capped at one service quantum
max(1, capacity_hat / 3600), so a standing queue drains at exactly the
outflow capacity and the n-th vehicle of a pile-up leaves at
t0 + (n - 1) * 3600 / capacity_hat.

Step order is fixed: guidance protocols advance, departures are injected onto
their first link, credit accrues everywhere, then links are processed in
ascending link id.  A vehicle reaching the end of a link asks its guidance
protocol for the next hop at that moment; if no route is known it waits at
the head of the queue and retries next second.  There is no spillback: link
entry is never refused.

Guidance protocols implement:

    bind(engine)                       wiring, called once before the run
    advance(now)                       per-second bookkeeping
    choose_next(vehicle, node, now)    next node id, or None for "no route yet"
    notify_arrival(vehicle, now)       optional hook
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .network import RoadNetwork, standing_queue_time
from .reservation import ReservationLog


class ConsistencyError(RuntimeError):
    """A guidance protocol returned a next hop with no connecting link."""


@dataclass
class Vehicle:
    id: int
    origin: int
    destination: int
    departure: int
    protocol: str
    arrival: int | None = None
    traversed: list[tuple[int, int, int]] = field(default_factory=list)

    @property
    def travel_time(self) -> int | None:
        return None if self.arrival is None else self.arrival - self.departure


@dataclass
class MetricsLog:
    """Per-vehicle outcomes plus per-minute link travel-time samples."""

    per_vehicle: list[Vehicle] = field(default_factory=list)
    # (minute, link id) -> [sum of travel times, exit count]
    link_minutes: dict[tuple[int, int], list[float]] = field(default_factory=dict)

    def record_exit(self, link_id: int, t_enter: int, t_exit: int) -> None:
        key = (t_exit // 60, link_id)
        cell = self.link_minutes.get(key)
        if cell is None:
            self.link_minutes[key] = [float(t_exit - t_enter), 1]
        else:
            cell[0] += t_exit - t_enter
            cell[1] += 1

    def arrivals_series(self) -> list[tuple[int, str, int]]:
        """Dense (minute, protocol, cumulative arrived) rows."""
        protocols = sorted({v.protocol for v in self.per_vehicle})
        arrived = [v for v in self.per_vehicle if v.arrival is not None]
        if not protocols:
            return []
        last_minute = max((v.arrival // 60 for v in arrived), default=0)
        counts = {p: 0 for p in protocols}
        by_minute: dict[int, dict[str, int]] = {}
        for v in arrived:
            by_minute.setdefault(v.arrival // 60, {}).setdefault(v.protocol, 0)
            by_minute[v.arrival // 60][v.protocol] += 1
        rows = []
        for minute in range(last_minute + 1):
            for p in protocols:
                counts[p] += by_minute.get(minute, {}).get(p, 0)
                rows.append((minute, p, counts[p]))
        return rows

    def write_vehicles_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["vehicle_id", "protocol", "departure_s", "arrival_s", "travel_time_s"]
            )
            for v in sorted(self.per_vehicle, key=lambda v: v.id):
                if v.arrival is None:
                    writer.writerow([v.id, v.protocol, v.departure, "", ""])
                else:
                    writer.writerow(
                        [v.id, v.protocol, v.departure, v.arrival, v.travel_time]
                    )

    def write_arrivals_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["minute", "protocol", "cumulative_arrived"])
            for row in self.arrivals_series():
                writer.writerow(row)

    def write_links_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["minute", "link_id", "mean_travel_time_s", "exits"])
            for (minute, link_id) in sorted(self.link_minutes):
                total, count = self.link_minutes[(minute, link_id)]
                writer.writerow([minute, link_id, f"{total / count:.6f}", count])


class Engine:
    """Discrete 1 s step simulator over a road network."""

    def __init__(
        self,
        network: RoadNetwork,
        vehicles: list[Vehicle],
        protocols: dict[str, object],
        slot_length: float = 60.0,
        window: int = 60,
    ):
        self.network = network
        self.vehicles = {v.id: v for v in vehicles}
        self.protocols = protocols
        self.window = window
        self.time = 0

        self.link_ids = sorted(network.links)
        self.link_index = {lid: i for i, lid in enumerate(self.link_ids)}
        self.links_by_index = [network.links[lid] for lid in self.link_ids]
        n_links = len(self.link_ids)
        self.t0_arr = np.array([l.t0 for l in self.links_by_index])
        self.chat_arr = np.array([l.capacity_hat for l in self.links_by_index])
        # Credit is tracked in units of 1/3600 vehicle so that integral
        # capacities accrue exactly (one vehicle = 3600 units, accrual =
        # capacity_hat units per second).  The cap of one service quantum
        # means bursts never exceed one second of outflow, so a standing
        # queue drains at exactly capacity_hat.
        self._rate = self.chat_arr.copy()
        self._cap = np.maximum(3600.0, self._rate)
        self._credit = np.full(n_links, 3600.0)

        # FIFO of (vehicle id, t_enter, earliest_exit) per link index.
        self._queues: list[deque] = [deque() for _ in range(n_links)]
        self._queue_lens = np.zeros(n_links, dtype=np.int64)
        self._active: set[int] = set()

        # Sliding window of recent exits per link: deque of (t_exit, tt).
        self._samples: list[deque] = [deque() for _ in range(n_links)]
        self._sample_sum = np.zeros(n_links)
        self._sample_cnt = np.zeros(n_links, dtype=np.int64)
        self._sampled: set[int] = set()

        self.reservation_logs: dict[int, ReservationLog] = {
            lid: ReservationLog(lid, slot_length) for lid in self.link_ids
        }
        self.metrics = MetricsLog()
        self.cur_mean = self.t0_arr.copy()
        self.diagnostics = {
            "no_route_waits": 0,
            "reservation_clamps": 0,
            "forager_aborts": 0,
        }

        self._pending: list[Vehicle] = []
        self._retry: list[Vehicle] = []
        self._remaining = 0
        for v in sorted(vehicles, key=lambda v: (v.departure, v.id)):
            if v.protocol not in protocols:
                raise ValueError(f"vehicle {v.id}: unknown protocol {v.protocol!r}")
            self._pending.append(v)
            self._remaining += 1
        self._pending.reverse()  # pop() from the tail in departure order

        self._protocol_order = sorted(protocols)
        for pid in self._protocol_order:
            protocols[pid].bind(self)

    # -- observation helpers -------------------------------------------------

    def _evict_samples(self, li: int, now: int) -> None:
        dq = self._samples[li]
        horizon = now - self.window
        while dq and dq[0][0] < horizon:
            _, tt = dq.popleft()
            self._sample_sum[li] -= tt
            self._sample_cnt[li] -= 1
        if not dq:
            self._sample_sum[li] = 0.0
            self._sampled.discard(li)

    def current_mean_travel_time(self, link_id: int, window: int | None = None) -> float:
        """Mean experienced travel time of exits in the last `window` seconds.

        Falls back to the standing-queue estimate for the vehicles currently
        on the link, and to t0 when the link is idle.
        """
        if link_id not in self.link_index:
            raise KeyError(f"unknown link {link_id}")
        w = self.window if window is None else window
        if w > self.window:
            raise ValueError(f"window {w} exceeds the engine window {self.window}")
        li = self.link_index[link_id]
        now = self.time
        self._evict_samples(li, now)
        dq = self._samples[li]
        recent = [(t, tt) for (t, tt) in dq if t >= now - w]
        if recent:
            return sum(tt for _, tt in recent) / len(recent)
        qlen = self._queue_lens[li]
        link = self.links_by_index[li]
        if qlen > 0:
            return standing_queue_time(link.t0, float(qlen) + 1.0, link.capacity_hat)
        return link.t0

    def _refresh_cur_mean(self, now: int) -> None:
        arr = self.t0_arr.copy()
        for li in list(self._sampled):
            self._evict_samples(li, now)
            if self._sample_cnt[li] > 0:
                arr[li] = self._sample_sum[li] / self._sample_cnt[li]
        queued = self._queue_lens > 0
        if queued.any():
            no_samples = queued & (self._sample_cnt == 0)
            if no_samples.any():
                idx = np.flatnonzero(no_samples)
                arr[idx] = self.t0_arr[idx] + self._queue_lens[idx] * (
                    3600.0 / self.chat_arr[idx]
                )
        self.cur_mean = arr

    # -- state mutation -------------------------------------------------------

    def _protocol_for(self, vehicle: Vehicle):
        return self.protocols[vehicle.protocol]

    def _link_between(self, a: int, b: int):
        for link in self.network.out_links[a]:
            if link.to_node == b:
                return link
        return None

    def _push_onto(self, vehicle: Vehicle, link, now: int) -> None:
        li = self.link_index[link.id]
        self._queues[li].append((vehicle.id, now, now + link.t0))
        self._queue_lens[li] += 1
        self._active.add(li)

    def _arrive(self, vehicle: Vehicle, now: int) -> None:
        vehicle.arrival = now
        self._remaining -= 1
        self._protocol_for(vehicle).notify_arrival(vehicle, now)

    def _inject(self, now: int) -> None:
        while self._pending and self._pending[-1].departure <= now:
            v = self._pending.pop()
            if v.origin == v.destination:
                self.metrics.per_vehicle.append(v)
                self._arrive(v, now)
                continue
            nxt = self._protocol_for(v).choose_next(v, v.origin, now)
            if nxt is None:
                self.diagnostics["no_route_waits"] += 1
                self._retry.append(v)
                continue
            link = self._link_between(v.origin, nxt)
            if link is None:
                raise ConsistencyError(
                    f"protocol {v.protocol} proposed non-adjacent hop "
                    f"{v.origin} -> {nxt} for vehicle {v.id}"
                )
            self.metrics.per_vehicle.append(v)
            self._push_onto(v, link, now)

    def step(self) -> None:
        now = self.time
        self._refresh_cur_mean(now)
        for pid in self._protocol_order:
            self.protocols[pid].advance(now)
        self._inject(now)
        np.minimum(self._credit + self._rate, self._cap, out=self._credit)

        for li in sorted(self._active):
            queue = self._queues[li]
            link = self.links_by_index[li]
            while queue:
                vid, t_enter, earliest_exit = queue[0]
                if earliest_exit > now or self._credit[li] < 3600.0:
                    break
                vehicle = self.vehicles[vid]
                node = link.to_node
                if node == vehicle.destination:
                    nxt_link = None
                else:
                    nxt = self._protocol_for(vehicle).choose_next(vehicle, node, now)
                    if nxt is None:
                        self.diagnostics["no_route_waits"] += 1
                        break
                    nxt_link = self._link_between(node, nxt)
                    if nxt_link is None:
                        raise ConsistencyError(
                            f"protocol {vehicle.protocol} proposed non-adjacent hop "
                            f"{node} -> {nxt} for vehicle {vid}"
                        )
                queue.popleft()
                self._queue_lens[li] -= 1
                self._credit[li] -= 3600.0
                vehicle.traversed.append((link.id, t_enter, now))
                self.metrics.record_exit(link.id, t_enter, now)
                self._samples[li].append((now, float(now - t_enter)))
                self._sample_sum[li] += now - t_enter
                self._sample_cnt[li] += 1
                self._sampled.add(li)
                if node == vehicle.destination:
                    self._arrive(vehicle, now)
                else:
                    self._push_onto(vehicle, nxt_link, now)
            if not queue:
                self._active.discard(li)

        if self._retry:
            # Failed injections keep their original departure and are retried
            # ahead of later departures next second.
            self._pending.extend(reversed(self._retry))
            self._retry.clear()
        self.time = now + 1

    def run(self, horizon: int) -> MetricsLog:
        """Step until every vehicle has arrived or the horizon is reached."""
        while self.time <= horizon and self._remaining > 0:
            self.step()
        # Vehicles still pending never entered the network; they count as
        # stranded alongside vehicles still on a link.
        for v in reversed(self._pending):
            self.metrics.per_vehicle.append(v)
        self._pending.clear()
        self.diagnostics["reservation_clamps"] = sum(
            log.clamp_count for log in self.reservation_logs.values()
        )
        return self.metrics

    # -- introspection for tests ----------------------------------------------

    def queue_length(self, link_id: int) -> int:
        return int(self._queue_lens[self.link_index[link_id]])

    @property
    def remaining(self) -> int:
        return self._remaining
