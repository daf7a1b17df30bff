"""Beacon traffic at a single POI under physical, edge, cloud and hybrid twin deployments.

Message path per deployment:

* twins: uplink (WiFi: exclusive FIFO control-channel window then transmission;
  cellular: immediate transmission) -> server compute queue -> server reaction
  queue -> delivered. Both server stages are single FIFO servers, so a server
  acts on one message at a time.
* physical: the sender signs on its own processor, then holds the shared WiFi
  control channel for the access window, the broadcast, and the verification
  round in which each of the n-1 receivers verifies and acknowledges in turn.

Edge capacity admits vehicle ids ``< capacity``; other vehicles still contend
for the air interface but the RSU drops their beacons. Hybrid routes those
vehicles to the cloud instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum

import numpy as np

from .des import NS_PER_S, EventKind, EventQueue, SimEvent, Ticker, to_ns


class Deployment(str, Enum):
    PHYSICAL = "physical"
    EDGE = "edge"
    CLOUD = "cloud"
    HYBRID = "hybrid"


class LinkKind(str, Enum):
    WIFI = "wifi"
    CELLULAR = "cellular"


@dataclass(frozen=True)
class LinkParams:
    kind: LinkKind
    data_rate: float
    channel_access_window: float = 0.0

    def __post_init__(self):
        if not self.data_rate > 0:
            raise ValueError("data_rate must be positive")
        if self.channel_access_window < 0:
            raise ValueError("channel_access_window must be >= 0")


@dataclass(frozen=True)
class ServerParams:
    per_message_processing: float
    reaction_latency: float
    capacity: int | None = None

    def __post_init__(self):
        if self.per_message_processing < 0 or self.reaction_latency < 0:
            raise ValueError("server times must be >= 0")
        if self.capacity is not None and self.capacity < 1:
            raise ValueError("bounded capacity must be >= 1")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    deployment: Deployment = Deployment.CLOUD
    link: LinkKind = LinkKind.CELLULAR
    n_vehicles: int = 40
    beacon_interval: float = 0.1
    message_size: int = 310
    crypto_time: float = 0.00223
    # one beacon round: every vehicle emits exactly one beacon
    sim_duration: float = 0.1
    # keep running after sim_duration until every message settles
    drain: bool = True
    seed: int = 0
    wifi_rate: float = 6e6
    cellular_rate: float = 100e6
    wifi_window: float = 0.046
    edge_capacity: int = 40
    edge_reaction: float = 0.05
    cloud_reaction: float = 0.1
    edge_speedup: float = 3.0
    cloud_speedup: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "deployment", Deployment(self.deployment))
        object.__setattr__(self, "link", LinkKind(self.link))

    def validate(self) -> "ScenarioConfig":
        if isinstance(self.n_vehicles, bool) or int(self.n_vehicles) != self.n_vehicles or self.n_vehicles < 1:
            raise ConfigError(f"n_vehicles must be an integer >= 1, got {self.n_vehicles!r}")
        for name in ("beacon_interval", "crypto_time", "sim_duration", "wifi_rate", "cellular_rate",
                     "edge_speedup", "cloud_speedup"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v!r}")
        for name in ("wifi_window", "edge_reaction", "cloud_reaction"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be >= 0, got {v!r}")
        if not (isinstance(self.message_size, int) and self.message_size > 0):
            raise ConfigError(f"message_size must be a positive integer, got {self.message_size!r}")
        if self.edge_capacity < 1:
            raise ConfigError("edge_capacity must be >= 1")
        if self.deployment is Deployment.PHYSICAL and self.link is not LinkKind.WIFI:
            raise ConfigError("the physical network broadcasts V2V over WiFi only")
        return self

    def with_(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)

    def link_params(self) -> LinkParams:
        if self.link is LinkKind.WIFI:
            return LinkParams(LinkKind.WIFI, self.wifi_rate, self.wifi_window)
        return LinkParams(LinkKind.CELLULAR, self.cellular_rate, 0.0)

    def edge_server(self) -> ServerParams:
        return ServerParams(self.crypto_time / self.edge_speedup, self.edge_reaction, self.edge_capacity)

    def cloud_server(self) -> ServerParams:
        return ServerParams(self.crypto_time / self.cloud_speedup, self.cloud_reaction, None)

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.value if isinstance(v, Enum) else v
        return out


def transmission_time(message_size: float, link: LinkParams) -> float:
    """Serialization delay in seconds: bits over data rate."""
    return message_size * 8 / link.data_rate


def processing_time(deployment: Deployment | str, n_vehicles: int, config: ScenarioConfig | None = None) -> float:
    """Processing time of one beacon round (one message per vehicle), in seconds."""
    cfg = config or ScenarioConfig()
    deployment = Deployment(deployment)
    if n_vehicles < 1:
        raise ValueError("n_vehicles must be >= 1")
    if deployment is Deployment.PHYSICAL:
        return n_vehicles * cfg.crypto_time
    if deployment is Deployment.CLOUD:
        return n_vehicles * cfg.cloud_server().per_message_processing
    edge = cfg.edge_server()
    return min(n_vehicles, edge.capacity) * edge.per_message_processing


def computation_speed(deployment: Deployment | str, n_vehicles: int, config: ScenarioConfig | None = None) -> float:
    return 1.0 / processing_time(deployment, n_vehicles, config)


@dataclass
class SimMetrics:
    latencies: np.ndarray
    generated: int
    delivered: int
    dropped: int
    in_flight: int
    busy_time: dict[str, float]
    batches: int
    events: list[SimEvent] = field(default_factory=list, repr=False)
    wifi_intervals: list[tuple[int, int]] = field(default_factory=list, repr=False)

    @property
    def mean_latency(self) -> float:
        return latency_kpi(self)

    def percentile(self, q: float) -> float:
        if self.delivered == 0:
            return math.nan
        return float(np.percentile(self.latencies, q))

    def __eq__(self, other):
        if not isinstance(other, SimMetrics):
            return NotImplemented
        return (np.array_equal(self.latencies, other.latencies)
                and (self.generated, self.delivered, self.dropped, self.in_flight, self.batches)
                == (other.generated, other.delivered, other.dropped, other.in_flight, other.batches)
                and self.busy_time == other.busy_time)


class UndefinedKpi(ValueError):
    pass


def latency_kpi(metrics: SimMetrics) -> float:
    """Mean delivered-message latency in seconds."""
    if metrics.delivered == 0:
        raise UndefinedKpi("no delivered messages; latency is undefined")
    return math.fsum(metrics.latencies.tolist()) / metrics.delivered


def beacon_phases(n_vehicles: int, interval_ns: int, seed: int) -> list[int]:
    # each vehicle's phase depends only on (seed, vehicle id), so scenarios that
    # differ in n or deployment see the same offsets for shared vehicles
    return [int(np.random.default_rng([seed, v]).integers(interval_ns)) for v in range(n_vehicles)]


class _Server:
    def __init__(self, params: ServerParams):
        self.params = params
        self.compute = Ticker(params.per_message_processing)
        self.reaction_ns = to_ns(params.reaction_latency)
        self.cpu_free = 0
        self.react_free = 0
        self.busy = 0


class _Run:
    def __init__(self, cfg: ScenarioConfig, record: bool):
        self.cfg = cfg
        self.record = record
        self.q = EventQueue()
        self.link = cfg.link_params()
        self.tx = Ticker(transmission_time(cfg.message_size, self.link))
        self.window_ns = to_ns(self.link.channel_access_window)
        self.crypto_ns = to_ns(cfg.crypto_time)
        self.verify = Ticker(cfg.crypto_time * (cfg.n_vehicles - 1))
        self.channel_free = 0
        self.servers: dict[str, _Server] = {}
        if cfg.deployment in (Deployment.EDGE, Deployment.HYBRID):
            self.servers["edge"] = _Server(cfg.edge_server())
        if cfg.deployment in (Deployment.CLOUD, Deployment.HYBRID):
            self.servers["cloud"] = _Server(cfg.cloud_server())
        self.vehicle_busy = 0
        self.gen_time: dict[int, int] = {}
        self.route: dict[int, str | None] = {}
        self.durations: dict[int, tuple[int, int]] = {}
        self.latencies: list[int] = []
        self.dropped = 0
        self.events: list[SimEvent] = []
        self.wifi_intervals: list[tuple[int, int]] = []

    def server_for(self, vehicle: int) -> str | None:
        d = self.cfg.deployment
        if d is Deployment.CLOUD:
            return "cloud"
        if vehicle < self.cfg.edge_capacity:
            return "edge"
        return "cloud" if d is Deployment.HYBRID else None

    def at(self, t: int, kind: EventKind, v: int, m: int):
        self.q.push(SimEvent(t, kind, v, m))

    def on_generated(self, ev: SimEvent):
        t, v, m = ev.time, ev.vehicle_id, ev.message_id
        self.gen_time[m] = t
        tx = self.tx.next()
        verify = 0
        if self.cfg.deployment is Deployment.PHYSICAL:
            # signing uses the sender's own processor; same duration for everyone,
            # so channel requests keep generation order
            self.vehicle_busy += self.crypto_ns
            t = t + self.crypto_ns
            verify = self.verify.next() if self.cfg.n_vehicles > 1 else 0
        self.durations[m] = (tx, verify)
        if self.link.kind is LinkKind.WIFI:
            grant = max(t, self.channel_free)
            # the whole exclusive hold is reserved up front, FIFO by request
            self.channel_free = grant + self.window_ns + tx + verify
            self.at(grant, EventKind.CHANNEL_GRANTED, v, m)
        else:
            self.at(t, EventKind.CHANNEL_GRANTED, v, m)

    def on_granted(self, ev: SimEvent):
        tx, verify = self.durations[ev.message_id]
        start = ev.time + (self.window_ns if self.link.kind is LinkKind.WIFI else 0)
        done = start + tx
        if self.link.kind is LinkKind.WIFI:
            self.wifi_intervals.append((ev.time, done + verify))
        self.at(done, EventKind.TRANSMISSION_DONE, ev.vehicle_id, ev.message_id)

    def on_transmitted(self, ev: SimEvent):
        v, m = ev.vehicle_id, ev.message_id
        _, verify = self.durations.pop(m)
        if self.cfg.deployment is Deployment.PHYSICAL:
            # acknowledged broadcast: receivers verify in turn while the channel is held
            self.vehicle_busy += verify
            self.at(ev.time + verify, EventKind.PROCESSING_DONE, v, m)
            return
        name = self.server_for(v)
        if name is None:
            self.dropped += 1
            del self.gen_time[m]
            return
        self.route[m] = name
        srv = self.servers[name]
        start = max(ev.time, srv.cpu_free)
        dur = srv.compute.next()
        srv.cpu_free = start + dur
        srv.busy += dur
        self.at(srv.cpu_free, EventKind.PROCESSING_DONE, v, m)

    def on_processed(self, ev: SimEvent):
        if self.cfg.deployment is Deployment.PHYSICAL:
            self.at(ev.time, EventKind.DELIVERED, ev.vehicle_id, ev.message_id)
            return
        srv = self.servers[self.route[ev.message_id]]
        start = max(ev.time, srv.react_free)
        srv.react_free = start + srv.reaction_ns
        self.at(srv.react_free, EventKind.DELIVERED, ev.vehicle_id, ev.message_id)

    def on_delivered(self, ev: SimEvent):
        self.latencies.append(ev.time - self.gen_time.pop(ev.message_id))

    def run(self) -> SimMetrics:
        cfg = self.cfg
        interval_ns = to_ns(cfg.beacon_interval)
        horizon = to_ns(cfg.sim_duration)
        mid = 0
        for v, phase in enumerate(beacon_phases(cfg.n_vehicles, interval_ns, cfg.seed)):
            t = phase
            while t < horizon:
                self.at(t, EventKind.BEACON_GENERATED, v, mid)
                mid += 1
                t += interval_ns
        generated = mid
        handlers = {
            EventKind.BEACON_GENERATED: self.on_generated,
            EventKind.CHANNEL_GRANTED: self.on_granted,
            EventKind.TRANSMISSION_DONE: self.on_transmitted,
            EventKind.PROCESSING_DONE: self.on_processed,
            EventKind.DELIVERED: self.on_delivered,
        }
        while len(self.q):
            if not cfg.drain and self.q.peek_time() > horizon:
                break
            ev = self.q.pop()
            if self.record:
                self.events.append(ev)
            handlers[ev.kind](ev)

        busy = {name: s.busy / NS_PER_S for name, s in self.servers.items()}
        if cfg.deployment is Deployment.PHYSICAL:
            busy["vehicles"] = self.vehicle_busy / NS_PER_S
        rounds = max(1, math.ceil(horizon / interval_ns))
        lat = np.array(self.latencies, dtype=np.int64) / NS_PER_S
        delivered = len(self.latencies)
        return SimMetrics(
            latencies=lat,
            generated=generated,
            delivered=delivered,
            dropped=self.dropped,
            in_flight=generated - delivered - self.dropped,
            busy_time=busy,
            batches=rounds,
            events=self.events,
            wifi_intervals=self.wifi_intervals,
        )


def run_scenario(config: ScenarioConfig, record_events: bool = False) -> SimMetrics:
    """Run one deterministic simulation; ``record_events`` keeps the processed-event trace."""
    config.validate()
    return _Run(config, record_events).run()
