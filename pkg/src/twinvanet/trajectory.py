"""Trajectory ingestion: parse, validate, filter and segment raw taxi GPS records."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from itertools import groupby
from typing import IO, Callable, Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

FIELDS = ("taxi_id", "timestamp", "lat", "lon", "speed_kmh", "distance_m", "stay_s")
DEFAULT_HEADER = ",".join(FIELDS)


class ParseError(ValueError):
    """A malformed row in strict mode."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} out of range")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} out of range")


@dataclass(frozen=True)
class BoundingBox:
    min_lon: float
    min_lat: float
    max_lon: float
    max_lat: float

    def __post_init__(self):
        if not (self.min_lon < self.max_lon and self.min_lat < self.max_lat):
            raise ValueError(f"degenerate bounding box {self}")

    def contains(self, p: GeoPoint) -> bool:
        # closed box: edges and corners are inside
        return self.min_lat <= p.lat <= self.max_lat and self.min_lon <= p.lon <= self.max_lon


# Bursa study region, (min_lon, min_lat, max_lon, max_lat)
BURSA_BBOX = BoundingBox(28.456847, 40.103140, 29.388351, 40.318912)


@dataclass(frozen=True)
class TrajectoryRecord:
    taxi_id: str
    timestamp: datetime
    position: GeoPoint
    speed: float
    distance: float
    stay: float

    def __post_init__(self):
        for name in ("speed", "distance", "stay"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {v}")

    @property
    def epoch(self) -> float:
        return self.timestamp.timestamp()


@dataclass(frozen=True)
class Trip:
    taxi_id: str
    records: tuple[TrajectoryRecord, ...]

    def __post_init__(self):
        if not self.records:
            raise ValueError("a trip needs at least one record")
        if any(r.taxi_id != self.taxi_id for r in self.records):
            raise ValueError("trip mixes taxi ids")
        ts = [r.epoch for r in self.records]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("trip records must be strictly increasing in time")

    def __len__(self):
        return len(self.records)

    @property
    def total_distance(self) -> float:
        return math.fsum(r.distance for r in self.records)

    @property
    def mean_speed(self) -> float:
        return math.fsum(r.speed for r in self.records) / len(self.records)


@dataclass
class SchemaConfig:
    """Maps file header names onto the seven record fields."""

    columns: dict[str, str] = field(default_factory=lambda: {f: f for f in FIELDS})
    delimiter: str = ","

    def header_for(self, fieldname: str) -> str:
        return self.columns[fieldname]


@dataclass
class RowError:
    line: int
    message: str


@dataclass
class ParseResult:
    records: list[TrajectoryRecord]
    errors: list[RowError]
    rows: int

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


def parse_timestamp(text: str) -> datetime:
    """ISO-8601 instant with an explicit UTC designator or offset; naive times are rejected."""
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        raise ValueError(f"timestamp {text!r} has no UTC offset")
    return dt.astimezone(timezone.utc)


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_row(row: list[str], index: dict[str, int]) -> TrajectoryRecord:
    def num(name):
        v = float(row[index[name]])
        if not math.isfinite(v):
            raise ValueError(f"{name} is not finite")
        return v

    taxi = row[index["taxi_id"]].strip()
    if not taxi:
        raise ValueError("empty taxi_id")
    ts = parse_timestamp(row[index["timestamp"]])
    # sub-second instants are truncated to the 1 s record resolution
    ts = ts.replace(microsecond=0)
    return TrajectoryRecord(
        taxi_id=taxi,
        timestamp=ts,
        position=GeoPoint(num("lat"), num("lon")),
        speed=num("speed_kmh"),
        distance=num("distance_m"),
        stay=num("stay_s"),
    )


def parse_records(stream: IO | str | bytes | Iterable[str], schema: SchemaConfig | None = None,
                  strict: bool = False) -> ParseResult:
    """Parse delimiter-separated trajectory text.

    Malformed rows are collected as ``RowError`` (with 1-based file line numbers)
    and skipped, unless ``strict`` is set, in which case the first one raises
    ``ParseError``.
    """
    schema = schema or SchemaConfig()
    if isinstance(stream, bytes):
        stream = stream.decode("utf-8")
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream, delimiter=schema.delimiter)

    header = next(reader, None)
    if header is None:
        return ParseResult([], [], 0)
    header = [h.strip() for h in header]
    try:
        index = {f: header.index(schema.header_for(f)) for f in FIELDS}
    except ValueError as exc:
        raise ParseError(1, f"header {header} is missing a required column") from exc

    records, errors, rows = [], [], 0
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        rows += 1
        try:
            if len(row) != len(header):
                raise ValueError(f"expected {len(header)} columns, got {len(row)}")
            records.append(_parse_row(row, index))
        except ValueError as exc:
            if strict:
                raise ParseError(line, str(exc)) from exc
            errors.append(RowError(line, str(exc)))
    if errors:
        log.warning("parse skipped=%d rows=%d", len(errors), rows)
    return ParseResult(records, errors, rows)


def read_records(path, schema: SchemaConfig | None = None, strict: bool = False) -> ParseResult:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_records(fh, schema, strict)


def serialize_records(records: Iterable[TrajectoryRecord], stream: IO[str] | None = None) -> str | None:
    """Write records in the default schema. ``repr`` keeps floats round-trip exact."""
    out = stream if stream is not None else io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(FIELDS)
    for r in records:
        w.writerow([r.taxi_id, format_timestamp(r.timestamp), repr(r.position.lat), repr(r.position.lon),
                    repr(r.speed), repr(r.distance), repr(r.stay)])
    if stream is None:
        return out.getvalue()
    return None


def filter_bbox(records: Iterable[TrajectoryRecord], bbox: BoundingBox = BURSA_BBOX) -> list[TrajectoryRecord]:
    return [r for r in records if bbox.contains(r.position)]


def filter_time(records: Iterable[TrajectoryRecord], start: datetime | None = None,
                end: datetime | None = None) -> list[TrajectoryRecord]:
    """Keep records with ``start <= timestamp < end``; either bound may be open."""
    return [r for r in records
            if (start is None or r.timestamp >= start) and (end is None or r.timestamp < end)]


def group_trips(records: Iterable[TrajectoryRecord], gap_threshold: float = 1800.0) -> list[Trip]:
    """Split each taxi's records into maximal runs with gaps <= ``gap_threshold`` seconds.

    Records sharing a taxi and timestamp are duplicates; only the first is kept
    so trips stay strictly ordered.
    """
    if gap_threshold <= 0:
        raise ValueError("gap_threshold must be positive")
    ordered = sorted(records, key=lambda r: (r.taxi_id, r.epoch))
    trips = []
    for taxi, group in groupby(ordered, key=lambda r: r.taxi_id):
        current: list[TrajectoryRecord] = []
        for r in group:
            if current and r.epoch == current[-1].epoch:
                log.debug("duplicate timestamp taxi=%s t=%s", taxi, r.timestamp)
                continue
            if current and r.epoch - current[-1].epoch > gap_threshold:
                trips.append(Trip(taxi, tuple(current)))
                current = []
            current.append(r)
        if current:
            trips.append(Trip(taxi, tuple(current)))
    return trips


def robust_z(values: Sequence[float]) -> np.ndarray:
    """Modified z-score 0.6745 * (x - median) / MAD.

    When more than half the values sit on the median (MAD = 0) the mean absolute
    deviation scaled by 1.253314 stands in; if that is zero too, nothing deviates.
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return x
    med = np.median(x)
    dev = np.abs(x - med)
    mad = np.median(dev)
    if mad > 0:
        return 0.6745 * (x - med) / mad
    meanad = dev.mean()
    if meanad == 0:
        return np.zeros_like(x)
    return (x - med) / (1.253314 * meanad)


TRIP_FEATURES: dict[str, Callable[[Trip], float]] = {
    "records": lambda t: float(len(t)),
    "total_distance": lambda t: t.total_distance,
    "mean_speed": lambda t: t.mean_speed,
}


@dataclass
class OutlierPolicy:
    cutoff: float = 3.5
    features: tuple[str, ...] = ("records", "total_distance", "mean_speed")

    def keep_mask(self, trips: Sequence[Trip]) -> np.ndarray:
        mask = np.ones(len(trips), dtype=bool)
        for name in self.features:
            z = robust_z([TRIP_FEATURES[name](t) for t in trips])
            mask &= np.abs(z) <= self.cutoff
        return mask


def remove_outlier_trips(trips: Sequence[Trip], policy: OutlierPolicy | None = None) -> list[Trip]:
    if not trips:
        return []
    policy = policy or OutlierPolicy()
    mask = policy.keep_mask(trips)
    kept = [t for t, keep in zip(trips, mask) if keep]
    if not kept:
        log.warning("outlier filter removed all %d trips", len(trips))
    return kept


def min_max_normalize(values: Sequence[float]) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return x
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    # clip guards the last ulp so outputs stay inside [0, 1]
    return np.clip((x - lo) / (hi - lo), 0.0, 1.0)
