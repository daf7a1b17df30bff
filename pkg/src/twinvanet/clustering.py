"""Per-location features and the two clusterers (K-Means, 1-D self-organizing map)."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .trajectory import GeoPoint, TrajectoryRecord, min_max_normalize


@dataclass(frozen=True)
class LocationFeature:
    cell: GeoPoint
    mean_speed_norm: float
    mean_stay_norm: float
    visits_norm: float
    raw_visit_count: int
    member_points: tuple[GeoPoint, ...]
    mean_speed: float = 0.0
    mean_stay: float = 0.0

    @property
    def vector(self) -> tuple[float, float, float]:
        return (self.mean_speed_norm, self.mean_stay_norm, self.visits_norm)


def build_features(records: Iterable[TrajectoryRecord], cell_resolution: int = 4) -> list[LocationFeature]:
    """Aggregate records into grid cells keyed by coordinates rounded to ``cell_resolution`` decimals.

    Cells come out sorted by (lat, lon) so downstream seeds see a stable order.
    """
    if not 3 <= cell_resolution <= 6:
        raise ValueError(f"cell_resolution must be in [3, 6], got {cell_resolution}")
    cells: dict[tuple[float, float], list[TrajectoryRecord]] = defaultdict(list)
    for r in records:
        key = (round(r.position.lat, cell_resolution), round(r.position.lon, cell_resolution))
        cells[key].append(r)
    if not cells:
        return []

    keys = sorted(cells)
    visits = [len(cells[k]) for k in keys]
    speeds = [math.fsum(r.speed for r in cells[k]) / len(cells[k]) for k in keys]
    stays = [math.fsum(r.stay for r in cells[k]) / len(cells[k]) for k in keys]
    sp_n, st_n, vi_n = min_max_normalize(speeds), min_max_normalize(stays), min_max_normalize(visits)
    return [
        LocationFeature(
            cell=GeoPoint(*k),
            mean_speed_norm=float(sp_n[i]),
            mean_stay_norm=float(st_n[i]),
            visits_norm=float(vi_n[i]),
            raw_visit_count=visits[i],
            member_points=tuple(r.position for r in cells[k]),
            mean_speed=speeds[i],
            mean_stay=stays[i],
        )
        for i, k in enumerate(keys)
    ]


def feature_matrix(features) -> np.ndarray:
    if isinstance(features, np.ndarray):
        X = features.astype(float, copy=False)
    else:
        features = list(features)
        if features and isinstance(features[0], LocationFeature):
            X = np.array([f.vector for f in features], dtype=float)
        else:
            X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - C[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


# -- K-Means -----------------------------------------------------------------

@dataclass
class KMeansModel:
    k: int
    centroids_feat: np.ndarray
    assignments: np.ndarray
    inertia: float
    iterations_run: int
    seed: int
    inertia_history: list[float] = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        return assign_labels(self, X)


def kmeans_plusplus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = _sq_dists(X, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))
        centers[j] = X[idx]
        closest = np.minimum(closest, _sq_dists(X, centers[j:j + 1])[:, 0])
    return centers


def _lloyd(X, centers, max_iter, tol):
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        d = _sq_dists(X, centers)
        labels = d.argmin(axis=1)
        history.append(float(d[np.arange(len(X)), labels].sum()))
        new = centers.copy()
        for j in range(len(centers)):
            members = X[labels == j]
            # an emptied cluster keeps its previous centre
            if len(members):
                new[j] = members.mean(axis=0)
        shift = np.sqrt(((new - centers) ** 2).sum(axis=1)).max()
        centers = new
        if shift < tol:
            break
    d = _sq_dists(X, centers)
    labels = d.argmin(axis=1)
    inertia = float(d[np.arange(len(X)), labels].sum())
    history.append(inertia)
    return centers, labels, inertia, it, history


def _hartigan(X, labels, k, max_passes=100):
    """Single-point transfers until no move lowers the inertia.

    Every Lloyd fixed point that survives this is also Hartigan-stable, which
    rules out many of the shallow local minima Lloyd alone stops in.
    Returns the refined labels and whether anything moved.
    """
    labels = labels.copy()
    scale = float((X ** 2).sum()) or 1.0
    moved_any = False
    for _ in range(max_passes):
        # sums are rebuilt each pass so float drift cannot feed a move cycle
        counts = np.bincount(labels, minlength=k).astype(float)
        sums = np.zeros((k, X.shape[1]))
        np.add.at(sums, labels, X)
        moved = False
        for i in range(len(X)):
            a = labels[i]
            if counts[a] <= 1:
                continue
            d = ((X[i] - sums / np.maximum(counts, 1)[:, None]) ** 2).sum(axis=1)
            removal = counts[a] / (counts[a] - 1) * d[a]
            added = counts / (counts + 1) * d
            added[a] = np.inf
            b = int(added.argmin())
            if removal - added[b] > 1e-12 * scale:
                sums[a] -= X[i]
                sums[b] += X[i]
                counts[a] -= 1
                counts[b] += 1
                labels[i] = b
                moved = moved_any = True
        if not moved:
            break
    return labels, moved_any


def _fit_once(X, centers, max_iter, tol):
    centers, labels, inertia, iters, history = _lloyd(X, centers, max_iter, tol)
    refined, moved = _hartigan(X, labels, len(centers))
    if moved:
        start = np.array([X[refined == j].mean(axis=0) if (refined == j).any() else centers[j]
                          for j in range(len(centers))])
        centers, labels, inertia, more, tail = _lloyd(X, start, max_iter, tol)
        iters += more
        history += tail
    return centers, labels, inertia, iters, history


def kmeans_fit(features, k: int = 10, max_iter: int = 300, tol: float = 1e-6, seed: int = 0,
               n_init: int = 10) -> KMeansModel:
    """Lloyd's algorithm from k-means++ seeds, polished by Hartigan transfers.

    The best of ``n_init`` restarts wins.
    """
    X = feature_matrix(features)
    if X.shape[0] < k:
        raise ValueError(f"k-means needs at least k={k} features, got {X.shape[0]}")
    if k < 1 or n_init < 1:
        raise ValueError("k and n_init must be >= 1")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        run = _fit_once(X, kmeans_plusplus(X, k, rng), max_iter, tol)
        if best is None or run[2] < best[2]:
            best = run
    centers, labels, inertia, iters, history = best
    return KMeansModel(k, centers, labels, inertia, iters, seed, history)


# -- SOM ---------------------------------------------------------------------

@dataclass
class SomGrid:
    shape: tuple[int, int]
    weights: np.ndarray
    lr0: float = 0.5
    sigma0: float = 0.1
    epochs: int = 100
    seed: int = 0

    @property
    def positions(self) -> np.ndarray:
        rows, cols = self.shape
        return np.array([(i // cols, i % cols) for i in range(rows * cols)], dtype=float)

    def predict(self, X) -> np.ndarray:
        return assign_labels(self, X)


def neighborhood(positions: np.ndarray, bmu: int, sigma: float) -> np.ndarray:
    d2 = ((positions - positions[bmu]) ** 2).sum(axis=1)
    return np.exp(-d2 / (2.0 * sigma * sigma))


def decay(value0: float, t: int, epochs: int) -> float:
    return value0 * math.exp(-t / epochs)


def som_fit(features, grid: tuple[int, int] = (10, 1), lr0: float = 0.5, sigma0: float = 0.1,
            epochs: int = 100, seed: int = 0) -> SomGrid:
    """Online SOM training with Gaussian neighbourhood and per-epoch exponential decay.

    Node weights start from k-means++-spread input samples; samples are visited
    in a fresh seeded permutation every epoch.
    """
    X = feature_matrix(features)
    if X.shape[0] == 0:
        raise ValueError("som_fit needs at least one feature")
    rng = np.random.default_rng(seed)
    nodes = grid[0] * grid[1]
    som = SomGrid(tuple(grid), kmeans_plusplus(X, nodes, rng), lr0, sigma0, epochs, seed)
    pos = som.positions
    w = som.weights
    for t in range(epochs):
        lr = decay(lr0, t, epochs)
        sigma = decay(sigma0, t, epochs)
        for i in rng.permutation(X.shape[0]):
            x = X[i]
            diff = w - x
            bmu = int(np.einsum("ij,ij->i", diff, diff).argmin())
            h = neighborhood(pos, bmu, sigma)
            w += (lr * h)[:, None] * (x - w)
    return som


def assign_labels(model: KMeansModel | SomGrid, features) -> np.ndarray:
    """Nearest centroid / best-matching unit; ties go to the lowest index."""
    X = feature_matrix(features)
    C = model.centroids_feat if isinstance(model, KMeansModel) else model.weights
    return _sq_dists(X, C).argmin(axis=1)


# -- POIs --------------------------------------------------------------------

@dataclass
class PoiCluster:
    label: int
    centroid: GeoPoint
    member_count: int
    n_cells: int
    mean_speed_norm: float
    mean_stay_norm: float
    visits_norm: float
    address: str | None = None
    unresolved: bool = False


def compute_centroids(labels: Sequence[int], features: Sequence[LocationFeature]) -> list[PoiCluster]:
    """Unweighted mean of all member GeoPoints per label; empty labels are omitted."""
    if len(labels) != len(features):
        raise ValueError("labels and features differ in length")
    groups: dict[int, list[LocationFeature]] = defaultdict(list)
    for lab, f in zip(labels, features):
        groups[int(lab)].append(f)
    out = []
    for lab in sorted(groups):
        cells = groups[lab]
        pts = [p for f in cells for p in f.member_points]
        if not pts:
            continue
        out.append(PoiCluster(
            label=lab,
            centroid=GeoPoint(math.fsum(p.lat for p in pts) / len(pts),
                              math.fsum(p.lon for p in pts) / len(pts)),
            member_count=len(pts),
            n_cells=len(cells),
            mean_speed_norm=math.fsum(f.mean_speed_norm for f in cells) / len(cells),
            mean_stay_norm=math.fsum(f.mean_stay_norm for f in cells) / len(cells),
            visits_norm=math.fsum(f.visits_norm for f in cells) / len(cells),
        ))
    return out


CLUSTER_HEADER = ["cell_lat", "cell_lon", "label_kmeans", "label_som", "speed_norm", "stay_norm", "visits_norm"]
POI_HEADER = ["label", "centroid_lat", "centroid_lon", "member_count", "address"]


def write_cluster_file(path, features: Sequence[LocationFeature], km_labels, som_labels) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CLUSTER_HEADER)
        for f, a, b in zip(features, km_labels, som_labels):
            w.writerow([repr(f.cell.lat), repr(f.cell.lon), int(a), int(b),
                        repr(f.mean_speed_norm), repr(f.mean_stay_norm), repr(f.visits_norm)])


def write_poi_table(path, clusters: Sequence[PoiCluster]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POI_HEADER)
        for c in clusters:
            w.writerow([c.label, f"{c.centroid.lat:.8f}", f"{c.centroid.lon:.8f}", c.member_count,
                        c.address or ""])


def read_poi_table(path) -> list[PoiCluster]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [PoiCluster(label=int(r["label"]),
                       centroid=GeoPoint(float(r["centroid_lat"]), float(r["centroid_lon"])),
                       member_count=int(r["member_count"]), n_cells=0,
                       mean_speed_norm=math.nan, mean_stay_norm=math.nan, visits_norm=math.nan,
                       address=r["address"] or None)
            for r in rows]
