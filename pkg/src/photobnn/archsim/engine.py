"""Deterministic discrete-event core: time-ordered callbacks plus exclusive resources."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable, Iterable

from ..errors import PhotoBnnError

EVENT_KINDS = (
    "pass", "memory_read", "memory_write", "transfer", "reduction",
    "activation", "pooling", "readout", "tuning", "stall", "io",
)


class SimulationError(PhotoBnnError):
    """Raised for inconsistent simulation state (time going backwards, bad kinds)."""


@dataclass(frozen=True)
class SimEvent:
    """One occupancy of a resource: ``[timestamp, timestamp + duration)``."""

    timestamp: float
    duration: float
    kind: str
    resource_id: str
    payload: tuple = ()

    @property
    def end(self) -> float:
        return self.timestamp + self.duration

    def to_line(self) -> str:
        fields = " ".join(f"{k}={v}" for k, v in self.payload)
        return f"{self.timestamp!r} {self.resource_id} {self.kind} dur={self.duration!r} {fields}".rstrip()


class Resource:
    """A single-occupancy unit. Reservations are granted first come, first served."""

    __slots__ = ("name", "free_at", "busy_s", "count")

    def __init__(self, name: str):
        self.name = name
        self.free_at = 0.0
        self.busy_s = 0.0
        self.count = 0

    def reserve(self, earliest: float, duration: float) -> float:
        start = earliest if earliest > self.free_at else self.free_at
        self.free_at = start + duration
        self.busy_s += duration
        self.count += 1
        return start


class OverlapAudit:
    """Checks, event by event, that no resource is occupied twice at once.

    Events must arrive in non-decreasing timestamp order, which is how the
    engine dequeues them.
    """

    def __init__(self):
        self.last_end: dict[str, float] = {}
        self.last_time = 0.0
        self.violations: list[tuple[SimEvent, float]] = []
        self.time_reversals = 0

    def observe(self, ev: SimEvent) -> None:
        if ev.timestamp < self.last_time:
            self.time_reversals += 1
        self.last_time = ev.timestamp
        prev = self.last_end.get(ev.resource_id)
        if prev is not None and ev.timestamp < prev:
            self.violations.append((ev, prev))
        if prev is None or ev.end > prev:
            self.last_end[ev.resource_id] = ev.end

    @property
    def ok(self) -> bool:
        return not self.violations and not self.time_reversals


def audit_trace(events: Iterable[SimEvent]) -> OverlapAudit:
    audit = OverlapAudit()
    for ev in events:
        audit.observe(ev)
    return audit


class Engine:
    """Event queue ordered by ``(time, insertion sequence)``.

    ``occupy`` reserves a resource and logs the occupancy as a ``SimEvent``
    when it starts; ``on_start`` and ``on_done`` callbacks fire at the
    start and end times. Energy is charged to a named component at
    reservation time.
    """

    def __init__(self, keep_trace: bool = False):
        self.now = 0.0
        self._heap: list = []
        self._seq = 0
        self.resources: dict[str, Resource] = {}
        self.energy: dict[str, float] = {}
        self.kind_counts: dict[str, int] = {}
        self.event_count = 0
        self.audit = OverlapAudit()
        self.trace: list[SimEvent] | None = [] if keep_trace else None
        self.last_event_end = 0.0

    def resource(self, name: str) -> Resource:
        res = self.resources.get(name)
        if res is None:
            res = self.resources[name] = Resource(name)
        return res

    def charge(self, component: str, joules: float) -> None:
        self.energy[component] = self.energy.get(component, 0.0) + joules

    def at(self, time: float, fn: Callable[[], None]) -> None:
        if time < self.now:
            raise SimulationError(f"cannot schedule at {time!r} before now={self.now!r}")
        heapq.heappush(self._heap, (time, self._seq, fn))
        self._seq += 1

    def occupy(self, resource: str, earliest: float, duration: float, kind: str,
               payload: tuple = (), *, energy: tuple[str, float] | None = None,
               on_start: Callable[[float], None] | None = None,
               on_done: Callable[[float], None] | None = None) -> float:
        """Reserve ``resource`` for ``duration`` no earlier than ``earliest``; return the start."""
        if kind not in EVENT_KINDS:
            raise SimulationError(f"unknown event kind {kind!r}")
        if duration < 0:
            raise SimulationError("negative duration")
        start = self.resource(resource).reserve(max(earliest, self.now), duration)
        ev = SimEvent(start, duration, kind, resource, payload)
        if energy is not None:
            self.charge(*energy)

        def begin():
            self._log(ev)
            if on_start is not None:
                on_start(start)

        self.at(start, begin)
        if on_done is not None:
            self.at(ev.end, lambda: on_done(ev.end))
        return start

    def _log(self, ev: SimEvent) -> None:
        self.event_count += 1
        self.kind_counts[ev.kind] = self.kind_counts.get(ev.kind, 0) + 1
        self.audit.observe(ev)
        if ev.end > self.last_event_end:
            self.last_event_end = ev.end
        if self.trace is not None:
            self.trace.append(ev)

    def run(self) -> float:
        heap = self._heap
        while heap:
            time, _, fn = heapq.heappop(heap)
            self.now = time
            fn()
        return self.now


def format_trace(events: Iterable[SimEvent]) -> str:
    """Line-oriented trace: ``timestamp resource kind payload``."""
    return "".join(ev.to_line() + "\n" for ev in events)
