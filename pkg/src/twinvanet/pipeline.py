"""Phase-I chain: trajectories -> clean trips -> cell features -> clusters -> POIs."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import __version__
from .clustering import (LocationFeature, PoiCluster, build_features, compute_centroids, kmeans_fit, som_fit,
                         write_cluster_file, write_poi_table)
from .config import ClusterConfig, GeocodeConfig, IngestConfig, config_hash, to_plain
from .geocode import (GeocodeCache, GeocodeClient, NominatimProvider, StubProvider, annotate_pois)
from .trajectory import (BoundingBox, OutlierPolicy, TrajectoryRecord, filter_bbox, filter_time, group_trips,
                         parse_records, parse_timestamp, remove_outlier_trips)

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: str):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineResult:
    pois: list[PoiCluster]
    features: list[LocationFeature]
    kmeans_labels: np.ndarray
    som_labels: np.ndarray
    manifest: dict = field(default_factory=dict)
    geocode_failures: dict[int, str] = field(default_factory=dict)


def clean_records(records: Sequence[TrajectoryRecord], cfg: IngestConfig, counts: dict) -> list[TrajectoryRecord]:
    kept = filter_bbox(records, BoundingBox(*cfg.bbox))
    counts["in_bbox"] = len(kept)
    if cfg.start or cfg.end:
        kept = filter_time(kept, cfg.start and parse_timestamp(cfg.start), cfg.end and parse_timestamp(cfg.end))
        counts["in_time_range"] = len(kept)
    trips = group_trips(kept, cfg.gap_threshold)
    counts["trips"] = len(trips)
    trips = remove_outlier_trips(trips, OutlierPolicy(cutoff=cfg.outlier_cutoff))
    counts["trips_kept"] = len(trips)
    out = [r for t in trips for r in t.records]
    counts["records_kept"] = len(out)
    return out


def make_geocoder(cfg: GeocodeConfig) -> GeocodeClient | None:
    cache = GeocodeCache(cfg.cache)
    if cfg.stub:
        return GeocodeClient(StubProvider.from_file(cfg.stub), cache, min_interval=0.0, offline=cfg.offline)
    if cfg.offline:
        if not cfg.cache:
            return None
        # cache-only: misses surface as unresolved clusters
        return GeocodeClient(StubProvider(), cache, min_interval=0.0, offline=True)
    if not cfg.user_agent:
        return None
    provider = NominatimProvider(cfg.user_agent, cfg.url, cfg.zoom)
    return GeocodeClient(provider, cache, min_interval=cfg.min_interval)


def cluster_features(features: Sequence[LocationFeature], cfg: ClusterConfig):
    km = kmeans_fit(features, k=cfg.k, max_iter=cfg.max_iter, tol=cfg.tol, seed=cfg.seed, n_init=cfg.n_init)
    som = som_fit(features, grid=(cfg.k, 1), lr0=cfg.som_lr0, sigma0=cfg.som_sigma0, epochs=cfg.som_epochs,
                  seed=cfg.seed)
    return km, som


def pipeline(input_path, ingest_cfg: IngestConfig | None = None, cluster_cfg: ClusterConfig | None = None,
             geocode_cfg: GeocodeConfig | None = None, poi_out=None, cells_out=None,
             manifest_out=None) -> PipelineResult:
    ingest_cfg = ingest_cfg or IngestConfig()
    cluster_cfg = cluster_cfg or ClusterConfig()
    geocode_cfg = geocode_cfg or GeocodeConfig(offline=True)
    counts: dict[str, int] = {}

    try:
        with open(input_path, "rb") as fh:
            raw = fh.read()
        parsed = parse_records(raw.decode("utf-8"), strict=ingest_cfg.strict)
    except (OSError, ValueError) as exc:
        raise StageError("parse", str(exc)) from exc
    counts["rows"] = parsed.rows
    counts["records"] = len(parsed.records)
    counts["rejected_rows"] = len(parsed.errors)

    try:
        records = clean_records(parsed.records, ingest_cfg, counts)
    except ValueError as exc:
        raise StageError("clean", str(exc)) from exc

    features = build_features(records, cluster_cfg.cell_resolution)
    counts["cells"] = len(features)
    if not features:
        raise StageError("features", "no records survived ingestion; nothing to cluster")

    try:
        km, som = cluster_features(features, cluster_cfg)
    except ValueError as exc:
        raise StageError("cluster", str(exc)) from exc
    km_labels, som_labels = km.assignments, som.predict(features)
    labels = km_labels if cluster_cfg.method == "kmeans" else som_labels
    pois = compute_centroids(labels, features)
    counts["pois"] = len(pois)

    failures: dict[int, str] = {}
    client = make_geocoder(geocode_cfg)
    if client is not None:
        res = annotate_pois(pois, client)
        pois, failures = res.clusters, res.failures
        counts["geocoded"] = res.resolved
        counts["provider_calls"] = client.provider_calls

    manifest = {
        "tool_version": __version__,
        "input_sha256": hashlib.sha256(raw).hexdigest(),
        "config_hash": config_hash([ingest_cfg, cluster_cfg, geocode_cfg]),
        "ingest": to_plain(ingest_cfg),
        "cluster": to_plain(cluster_cfg),
        "geocode": to_plain(geocode_cfg),
        "counts": counts,
        "kmeans_inertia": km.inertia,
    }
    if poi_out:
        write_poi_table(poi_out, pois)
    if cells_out:
        write_cluster_file(cells_out, features, km_labels, som_labels)
    if manifest_out:
        with open(manifest_out, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    log.info("pipeline done " + " ".join(f"{k}={v}" for k, v in counts.items()))
    return PipelineResult(pois, features, km_labels, som_labels, manifest, failures)
