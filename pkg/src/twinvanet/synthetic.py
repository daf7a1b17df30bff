"""Synthetic taxi trajectories with planted hotspots, for tests and demos."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from .trajectory import GeoPoint, TrajectoryRecord


@dataclass(frozen=True)
class Hotspot:
    center: GeoPoint
    speed: float  # km/h
    stay: float  # s
    visits_per_cell: int


DEFAULT_HOTSPOTS = (
    Hotspot(GeoPoint(40.2421, 28.9711), speed=4.0, stay=600.0, visits_per_cell=30),
    Hotspot(GeoPoint(40.2221, 29.0170), speed=25.0, stay=120.0, visits_per_cell=16),
    Hotspot(GeoPoint(40.2137, 28.9937), speed=55.0, stay=10.0, visits_per_cell=6),
)


def hotspot_cells(center: GeoPoint, half: int = 1, spacing: float = 5e-4) -> list[GeoPoint]:
    """A symmetric (2*half+1)^2 grid of cell centres around ``center``."""
    return [GeoPoint(round(center.lat + i * spacing, 6), round(center.lon + j * spacing, 6))
            for i in range(-half, half + 1) for j in range(-half, half + 1)]


@dataclass
class SyntheticData:
    records: list[TrajectoryRecord]
    truth: dict[tuple[float, float], int]  # cell (lat, lon) -> hotspot index
    hotspots: tuple[Hotspot, ...]


def make_hotspot_trajectories(hotspots=DEFAULT_HOTSPOTS, n_taxis: int = 12, seed: int = 0,
                              noise: float = 0.05, with_noise_records: bool = True) -> SyntheticData:
    """Records spread over taxis so that every taxi's trip looks alike.

    Speed/stay carry +-``noise`` relative jitter. Optional extras: a handful of
    out-of-region fixes and one 500 km outlier trip elsewhere in the region,
    both of which the ingest stage is expected to drop.
    """
    rng = np.random.default_rng(seed)
    visits = []
    truth = {}
    for h_idx, h in enumerate(hotspots):
        for cell in hotspot_cells(h.center):
            truth[(cell.lat, cell.lon)] = h_idx
            for _ in range(h.visits_per_cell):
                visits.append((cell, h))
    order = rng.permutation(len(visits))
    t0 = datetime(2019, 1, 1, 8, 0, tzinfo=timezone.utc)
    records = []
    for i, idx in enumerate(order):
        cell, h = visits[idx]
        taxi = i % n_taxis
        ts = t0 + timedelta(seconds=60 * (i // n_taxis))
        records.append(TrajectoryRecord(
            taxi_id=f"T{taxi:03d}", timestamp=ts, position=cell,
            speed=float(h.speed * (1 + rng.uniform(-noise, noise))),
            stay=float(h.stay * (1 + rng.uniform(-noise, noise))),
            distance=float(rng.uniform(80, 120)),
        ))
    if with_noise_records:
        for j in range(5):
            records.append(TrajectoryRecord(f"T{j:03d}", t0 + timedelta(days=1, seconds=j), GeoPoint(41.0, 29.0),
                                            30.0, 100.0, 0.0))
        far = GeoPoint(40.15, 28.6)
        for j in range(len(records) // n_taxis):
            records.append(TrajectoryRecord("OUTLIER", t0 + timedelta(seconds=60 * j), far,
                                            120.0, 500_000.0 / 10, 0.0))
    return SyntheticData(records, truth, tuple(hotspots))
