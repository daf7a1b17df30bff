"""POI extraction from taxi trajectories and V2X twin-deployment simulation."""

__version__ = "0.1.0"

from .trajectory import (BURSA_BBOX, BoundingBox, GeoPoint, TrajectoryRecord, Trip, filter_bbox,
                         group_trips, min_max_normalize, parse_records, remove_outlier_trips)
from .clustering import (LocationFeature, PoiCluster, assign_labels, build_features, compute_centroids,
                         kmeans_fit, som_fit)
from .twin_sim import (Deployment, LinkKind, ScenarioConfig, SimMetrics, computation_speed, latency_kpi,
                       processing_time, run_scenario, transmission_time)
from .kpi import KpiReport, emit_latency_series, emit_table, sweep
