"""Reverse geocoding of POI centroids against a Nominatim-compatible service."""

from __future__ import annotations

import csv
import logging
import os
import threading
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Callable, Protocol, Sequence

from .clustering import PoiCluster
from .trajectory import GeoPoint

log = logging.getLogger(__name__)

DEFAULT_URL = "https://nominatim.openstreetmap.org"
URL_ENV = "TWINVANET_GEOCODE_URL"


class GeocodeError(Exception):
    pass


class NotFound(GeocodeError):
    pass


class TransientError(GeocodeError):
    """Network failure or server-side error; worth retrying."""


class RateLimited(GeocodeError):
    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class OfflineError(GeocodeError):
    pass


@dataclass(frozen=True)
class Address:
    display: str
    components: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.display:
            raise ValueError("address display string is empty")


def cache_key(point: GeoPoint) -> tuple[float, float]:
    return (round(point.lat, 6), round(point.lon, 6))


class Provider(Protocol):
    network: bool

    def fetch(self, point: GeoPoint) -> Address: ...


class StubProvider:
    """Offline provider answering from a fixed coordinate table."""

    network = False

    def __init__(self, table: dict[tuple[float, float], str] | None = None):
        self.table = {cache_key(GeoPoint(*k)): v for k, v in (table or {}).items()}
        self.calls = 0

    @classmethod
    def from_file(cls, path) -> "StubProvider":
        table = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                lat, lon, name = line.split(",", 2)
                table[(float(lat), float(lon))] = name.strip().strip('"')
        return cls(table)

    def fetch(self, point: GeoPoint) -> Address:
        self.calls += 1
        try:
            return Address(self.table[cache_key(point)])
        except KeyError:
            raise NotFound(f"no stub address for {point.lat}, {point.lon}") from None


class NominatimProvider:
    """``GET {base}/reverse?lat=..&lon=..&format=jsonv2&zoom=..``."""

    network = True

    def __init__(self, user_agent: str, base_url: str | None = None, zoom: int = 18,
                 timeout: float = 10.0, session=None):
        if not user_agent:
            raise ValueError("a custom User-Agent is required for live geocoding")
        self.base_url = (base_url or os.environ.get(URL_ENV) or DEFAULT_URL).rstrip("/")
        self.user_agent = user_agent
        self.zoom = zoom
        self.timeout = timeout
        if session is None:
            import requests
            session = requests.Session()
        self.session = session
        self.calls = 0

    def fetch(self, point: GeoPoint) -> Address:
        import requests

        self.calls += 1
        params = {"lat": f"{point.lat:.8f}", "lon": f"{point.lon:.8f}", "format": "jsonv2", "zoom": self.zoom}
        try:
            resp = self.session.get(f"{self.base_url}/reverse", params=params,
                                    headers={"User-Agent": self.user_agent}, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransientError(str(exc)) from exc
        if resp.status_code == 429:
            ra = resp.headers.get("Retry-After")
            raise RateLimited("HTTP 429", float(ra) if ra and ra.replace(".", "", 1).isdigit() else None)
        if resp.status_code >= 500:
            raise TransientError(f"HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise GeocodeError(f"HTTP {resp.status_code}")
        data = resp.json()
        if not data or "error" in data or not data.get("display_name"):
            raise NotFound(data.get("error", "no address") if isinstance(data, dict) else "no address")
        comps = {k: str(v) for k, v in (data.get("address") or {}).items()}
        return Address(data["display_name"], comps)


@dataclass
class GeocodeCacheEntry:
    key: tuple[float, float]
    value: Address
    fetched_at: datetime


class GeocodeCache:
    """In-memory cache, optionally mirrored to an append-only CSV file."""

    def __init__(self, path=None):
        self.path = path
        self.entries: dict[tuple[float, float], GeocodeCacheEntry] = {}
        self._lock = threading.Lock()
        if path and os.path.exists(path):
            with open(path, newline="", encoding="utf-8") as fh:
                for row in csv.reader(fh):
                    if len(row) != 4:
                        continue
                    key = (float(row[0]), float(row[1]))
                    self.entries[key] = GeocodeCacheEntry(key, Address(row[3]), datetime.fromisoformat(row[2]))

    def get(self, point: GeoPoint) -> Address | None:
        e = self.entries.get(cache_key(point))
        return e.value if e else None

    def put(self, point: GeoPoint, address: Address, now: datetime | None = None) -> None:
        key = cache_key(point)
        entry = GeocodeCacheEntry(key, address, now or datetime.now(timezone.utc))
        with self._lock:
            self.entries[key] = entry
            if self.path:
                with open(self.path, "a", newline="", encoding="utf-8") as fh:
                    csv.writer(fh, quoting=csv.QUOTE_NONNUMERIC, lineterminator="\n").writerow(
                        [key[0], key[1], entry.fetched_at.isoformat(timespec="seconds"), address.display])

    def __len__(self):
        return len(self.entries)


class GeocodeClient:
    """Cache-first lookups with request spacing and bounded retries.

    One handle serializes its provider calls; it is not meant to be shared
    across threads.
    """

    def __init__(self, provider: Provider, cache: GeocodeCache | None = None, min_interval: float = 1.0,
                 max_attempts: int = 3, backoff: float = 1.0, offline: bool = False,
                 clock: Callable[[], float] = time.monotonic, sleep: Callable[[float], None] = time.sleep):
        self.provider = provider
        self.cache = cache if cache is not None else GeocodeCache()
        self.min_interval = min_interval
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.offline = offline
        self.clock = clock
        self.sleep = sleep
        self._last_call: float | None = None
        self.provider_calls = 0

    def _throttle(self):
        if self._last_call is not None:
            wait = self._last_call + self.min_interval - self.clock()
            if wait > 0:
                self.sleep(wait)
        self._last_call = self.clock()

    def reverse(self, point: GeoPoint) -> Address:
        hit = self.cache.get(point)
        if hit is not None:
            return hit
        if self.offline and getattr(self.provider, "network", True):
            raise OfflineError("network geocoding disabled in offline mode")
        last: GeocodeError | None = None
        for attempt in range(self.max_attempts):
            self._throttle()
            self.provider_calls += 1
            try:
                addr = self.provider.fetch(point)
            except RateLimited as exc:
                last = exc
                self.sleep(exc.retry_after if exc.retry_after is not None else self.backoff * 2 ** attempt)
                continue
            except TransientError as exc:
                last = exc
                log.warning("geocode retry attempt=%d error=%s", attempt + 1, exc)
                if attempt + 1 < self.max_attempts:
                    self.sleep(self.backoff * 2 ** attempt)
                continue
            self.cache.put(point, addr)
            return addr
        assert last is not None
        raise last


def reverse_geocode(point: GeoPoint, provider: Provider | GeocodeClient) -> Address:
    client = provider if isinstance(provider, GeocodeClient) else GeocodeClient(provider, min_interval=0.0)
    return client.reverse(point)


@dataclass
class AnnotateResult:
    clusters: list[PoiCluster]
    failures: dict[int, str]

    @property
    def resolved(self) -> int:
        return sum(1 for c in self.clusters if c.address)


def annotate_pois(clusters: Sequence[PoiCluster], client: GeocodeClient) -> AnnotateResult:
    """Attach addresses; a failing cluster is flagged unresolved and the batch carries on."""
    out, failures = [], {}
    for c in clusters:
        try:
            addr = client.reverse(c.centroid)
        except GeocodeError as exc:
            failures[c.label] = f"{type(exc).__name__}: {exc}"
            log.warning("geocode unresolved label=%d error=%s", c.label, exc)
            out.append(replace(c, address=None, unresolved=True))
        else:
            out.append(replace(c, address=addr.display, unresolved=False))
    return AnnotateResult(out, failures)
