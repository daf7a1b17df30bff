"""Minimal discrete-event core: integer-nanosecond clock and a stable event heap."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from enum import Enum

NS_PER_S = 1_000_000_000


def to_ns(seconds: float) -> int:
    return int(round(seconds * NS_PER_S))


class EventKind(str, Enum):
    BEACON_GENERATED = "BeaconGenerated"
    CHANNEL_GRANTED = "ChannelGranted"
    TRANSMISSION_DONE = "TransmissionDone"
    PROCESSING_DONE = "ProcessingDone"
    DELIVERED = "Delivered"


@dataclass(frozen=True)
class SimEvent:
    time: int
    kind: EventKind
    vehicle_id: int
    message_id: int


class EventQueue:
    """Pops in non-decreasing time; equal times come out in insertion order."""

    def __init__(self):
        self._heap: list[tuple[int, int, SimEvent]] = []
        self._seq = 0
        self.now = 0

    def __len__(self):
        return len(self._heap)

    def push(self, event: SimEvent) -> None:
        if event.time < self.now:
            raise ValueError(f"event {event} scheduled in the past (now={self.now})")
        heapq.heappush(self._heap, (event.time, self._seq, event))
        self._seq += 1

    def peek_time(self) -> int | None:
        return self._heap[0][0] if self._heap else None

    def pop(self) -> SimEvent:
        t, _, ev = heapq.heappop(self._heap)
        if t < self.now:
            raise RuntimeError("event queue went back in time")
        self.now = t
        return ev


class Ticker:
    """Integer-ns service durations for a fractional-ns period without drift.

    The k-th duration is round((k+1)p) - round(kp), so m services always sum to
    round(m*p) and never stray more than half a tick from the exact total.
    """

    def __init__(self, period_s: float):
        self.period_ns = period_s * NS_PER_S
        self.count = 0

    def next(self) -> int:
        k = self.count
        self.count += 1
        return int(round((k + 1) * self.period_ns)) - int(round(k * self.period_ns))
