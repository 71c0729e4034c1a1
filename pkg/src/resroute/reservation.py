"""Per-link reservation ledger with fixed time slots.

Each link keeps a count of announced presences per time slot (default slot
length 60 s).  A vehicle that expects to occupy a link during the half-open
interval [t_enter, t_exit) increments the count of every slot
[k * slot_length, (k+1) * slot_length) that the interval intersects.
``expected_flow`` reads the count of the single slot containing the query
time; the caller adds one for the querying vehicle itself before feeding the
figure to a travel-time function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class ReservationEntry:
    link: int
    t_enter: float
    t_exit: float


@dataclass(frozen=True)
class PathReservation:
    """A vehicle's announced itinerary: contiguous per-link time intervals."""

    vehicle: int
    entries: tuple[ReservationEntry, ...]

    def __post_init__(self):
        for a, b in zip(self.entries, self.entries[1:]):
            if a.t_exit != b.t_enter:
                raise ValueError(
                    f"path reservation not contiguous: {a.t_exit} != {b.t_enter}"
                )

    def next_link_at(self, node_position: int) -> ReservationEntry | None:
        if 0 <= node_position < len(self.entries):
            return self.entries[node_position]
        return None


class ReservationLog:
    """Slot-count ledger for one link."""

    __slots__ = ("link", "slot_length", "slots", "clamp_count")

    def __init__(self, link: int, slot_length: float = 60.0):
        if slot_length <= 0:
            raise ValueError("slot_length must be positive")
        self.link = link
        self.slot_length = slot_length
        self.slots: dict[int, int] = {}
        # Deregistrations of intervals never registered clamp at zero and are
        # counted here instead of going negative.
        self.clamp_count = 0

    def _slot_range(self, t_enter: float, t_exit: float) -> range:
        if not (math.isfinite(t_enter) and math.isfinite(t_exit)):
            raise ValueError("reservation times must be finite")
        if t_exit <= t_enter:
            raise ValueError(f"t_exit must exceed t_enter, got [{t_enter}, {t_exit})")
        first = math.floor(t_enter / self.slot_length)
        last = math.floor(t_exit / self.slot_length)
        if t_exit == last * self.slot_length:
            last -= 1
        return range(first, last + 1)

    def register(self, t_enter: float, t_exit: float) -> None:
        for k in self._slot_range(t_enter, t_exit):
            self.slots[k] = self.slots.get(k, 0) + 1

    def deregister(self, t_enter: float, t_exit: float) -> None:
        for k in self._slot_range(t_enter, t_exit):
            count = self.slots.get(k, 0)
            if count == 0:
                self.clamp_count += 1
            elif count == 1:
                del self.slots[k]
            else:
                self.slots[k] = count - 1

    def expected_flow(self, t: float) -> int:
        """Reservation count of the slot containing time t."""
        if not math.isfinite(t):
            raise ValueError("query time must be finite")
        return self.slots.get(math.floor(t / self.slot_length), 0)

    def prune(self, now: float) -> None:
        """Drop slots that ended more than one slot before `now`."""
        cutoff = math.floor(now / self.slot_length) - 1
        stale = [k for k in self.slots if k < cutoff]
        for k in stale:
            del self.slots[k]


def reserve_path(
    logs: dict[int, ReservationLog],
    old: PathReservation | None,
    new: PathReservation,
    now: float,
) -> None:
    """Replace a vehicle's future reservations.

    Every entry of `old` with t_enter >= now is deregistered (past and
    ongoing entries stay), then every entry of `new` is registered.  Applied
    in one go; with old == new the net slot counts are unchanged.
    """
    if old is not None:
        for entry in old.entries:
            if entry.t_enter >= now:
                logs[entry.link].deregister(entry.t_enter, entry.t_exit)
    for entry in new.entries:
        logs[entry.link].register(entry.t_enter, entry.t_exit)
