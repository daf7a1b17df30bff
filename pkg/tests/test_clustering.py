import itertools
import math
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from twinvanet.clustering import (KMeansModel, assign_labels, build_features, compute_centroids, decay,
                                  kmeans_fit, neighborhood, som_fit)
from twinvanet.trajectory import BURSA_BBOX, GeoPoint, TrajectoryRecord

T0 = datetime(2019, 1, 1, tzinfo=timezone.utc)


def rec(lat, lon, speed=10.0, stay=5.0):
    return TrajectoryRecord("1", T0, GeoPoint(lat, lon), speed, 1.0, stay)


def brute_force_2partition(X):
    """Minimum inertia over every assignment of points to two non-empty groups."""
    best = math.inf
    n = len(X)
    for bits in itertools.product((0, 1), repeat=n - 1):
        labels = np.array((0,) + bits)
        if labels.min() == labels.max():
            continue
        inertia = sum(((X[labels == j] - X[labels == j].mean(axis=0)) ** 2).sum() for j in (0, 1))
        best = min(best, inertia)
    return best


class TestFeatures:
    def test_quantization_collision(self):
        f = build_features([rec(40.22001, 29.01002), rec(40.22004, 29.00998)], 4)
        assert len(f) == 1
        assert (f[0].cell.lat, f[0].cell.lon) == (40.22, 29.01) and f[0].raw_visit_count == 2

    def test_single_cell_all_zero(self):
        f = build_features([rec(40.2, 29.0, 30, 100)], 4)
        assert f[0].vector == (0.0, 0.0, 0.0)

    def test_visit_endpoints(self):
        f = build_features([rec(40.2, 29.0), rec(40.3, 29.1), rec(40.3, 29.1), rec(40.3, 29.1)], 4)
        assert sorted(x.visits_norm for x in f) == [0.0, 1.0]

    def test_empty(self):
        assert build_features([], 4) == []

    def test_resolution_range(self):
        with pytest.raises(ValueError):
            build_features([rec(40.2, 29.0)], 7)

    def test_members_match_counts(self):
        rs = [rec(40.2 + 0.001 * (i % 3), 29.0) for i in range(10)]
        for f in build_features(rs, 4):
            assert f.raw_visit_count == len(f.member_points)
            assert all(0 <= v <= 1 for v in f.vector)


class TestKMeans:
    def test_k1_closed_form(self):
        X = np.random.default_rng(3).normal(size=(20, 3))
        m = kmeans_fit(X, k=1, seed=0)
        assert np.allclose(m.centroids_feat[0], X.mean(axis=0))
        assert m.inertia == pytest.approx(X.var(axis=0).sum() * len(X), rel=1e-12)

    def test_two_triples_match_exhaustive(self):
        X = np.array([[0, 0, 0], [0.1, 0, 0], [0, 0.1, 0], [5, 5, 5], [5.1, 5, 5], [5, 5.1, 5]], float)
        m = kmeans_fit(X, k=2, seed=1)
        assert m.inertia == pytest.approx(brute_force_2partition(X), rel=1e-12)
        assert len(set(m.assignments[:3])) == 1 and len(set(m.assignments[3:])) == 1
        assert m.assignments[0] != m.assignments[3]

    def test_duplication_doubles_inertia(self):
        X = np.array([[0, 0, 0], [0.1, 0, 0], [0, 0.1, 0], [5, 5, 5], [5.1, 5, 5], [5, 5.1, 5]], float)
        a = kmeans_fit(X, k=2, seed=1)
        b = kmeans_fit(np.vstack([X, X]), k=2, seed=1)
        order = lambda c: c[np.lexsort(c.T[::-1])]
        assert np.allclose(order(a.centroids_feat), order(b.centroids_feat))
        assert b.inertia == pytest.approx(2 * a.inertia, rel=1e-12)

    def test_too_few_points(self):
        with pytest.raises(ValueError, match="k=10.*got 3"):
            kmeans_fit(np.zeros((3, 3)), k=10)

    @settings(max_examples=40, deadline=None)
    @given(arrays(float, st.tuples(st.integers(10, 40), st.just(3)), elements=st.floats(0, 1)),
           st.integers(1, 5), st.integers(0, 2**31))
    def test_inertia_non_increasing(self, X, k, seed):
        m = kmeans_fit(X, k=k, seed=seed, n_init=1)
        h = np.array(m.inertia_history)
        assert np.all(np.diff(h) <= 1e-12 * max(1.0, h[0]))
        assert m.inertia >= 0 and np.all(m.assignments < k)

    @settings(max_examples=30, deadline=None)
    @given(arrays(float, st.tuples(st.integers(3, 12), st.just(3)), elements=st.floats(0, 1)),
           st.integers(0, 2**31))
    def test_no_single_point_move_improves(self, X, seed):
        m = kmeans_fit(X, k=2, seed=seed, n_init=1)
        lab = m.assignments

        def inertia(lab):
            return sum(((X[lab == j] - X[lab == j].mean(axis=0)) ** 2).sum() for j in (0, 1) if (lab == j).any())

        base = inertia(lab)
        for i in range(len(X)):
            moved = lab.copy()
            moved[i] = 1 - moved[i]
            if (moved == lab[i]).any():
                assert inertia(moved) >= base - 1e-9

    def test_bit_deterministic(self):
        X = np.random.default_rng(0).random((50, 3))
        a, b = kmeans_fit(X, k=4, seed=9), kmeans_fit(X, k=4, seed=9)
        assert np.array_equal(a.centroids_feat, b.centroids_feat) and a.inertia == b.inertia


class TestSom:
    def test_single_input_contracts_to_closed_form(self, monkeypatch):
        x = np.array([[0.3, 0.7, 0.1]])
        w0 = np.array([[1.0, 0.0, 0.5]])
        monkeypatch.setattr("twinvanet.clustering.kmeans_plusplus", lambda X, k, rng: w0.copy())
        som = som_fit(x, grid=(1, 1), lr0=0.5, epochs=10, seed=0)
        shrink = math.prod(1 - 0.5 * math.exp(-t / 10) for t in range(10))
        assert np.allclose(som.weights - x, (w0 - x) * shrink, rtol=1e-12, atol=0)

    def test_neighbour_influence_vanishes(self):
        pos = np.array([[i, 0] for i in range(10)], float)
        h = neighborhood(pos, 4, 0.1)
        assert h[4] == 1.0
        assert h[3] == pytest.approx(math.exp(-50), rel=1e-12) and h[3] < 1e-21
        assert h[5] == h[3] and np.all(h[[0, 1, 2, 6, 7, 8, 9]] <= h[3])

    @settings(max_examples=20, deadline=None)
    @given(arrays(float, st.tuples(st.integers(1, 15), st.just(3)), elements=st.floats(-5, 5)),
           st.integers(0, 1000))
    def test_weights_stay_in_input_box(self, X, seed):
        som = som_fit(X, grid=(4, 1), epochs=5, seed=seed)
        # init draws from the inputs, so the hull of init ∪ inputs is the input hull
        assert np.all(som.weights >= X.min(axis=0) - 1e-12) and np.all(som.weights <= X.max(axis=0) + 1e-12)

    def test_deterministic(self):
        X = np.random.default_rng(1).random((30, 3))
        a, b = som_fit(X, seed=4, epochs=10), som_fit(X, seed=4, epochs=10)
        assert np.array_equal(a.weights, b.weights)

    def test_empty(self):
        with pytest.raises(ValueError):
            som_fit(np.zeros((0, 3)))


class TestAssign:
    def model(self, C):
        C = np.asarray(C, float)
        return KMeansModel(len(C), C, np.zeros(0, int), 0.0, 0, 0)

    def test_exact_centroid(self):
        m = self.model([[0, 0, 0], [1, 1, 1], [2, 2, 2]])
        assert assign_labels(m, [[1, 1, 1]]).tolist() == [1]

    def test_tie_lowest_index(self):
        m = self.model([[0, 0, 0], [2, 0, 0]])
        assert assign_labels(m, [[1, 0, 0]]).tolist() == [0]

    @given(arrays(float, (12, 3), elements=st.floats(-10, 10)), arrays(float, (4, 3), elements=st.floats(-10, 10)),
           st.integers(-8, 8))
    def test_brute_force_and_pow2_scaling(self, X, C, e):
        m = self.model(C)
        labels = assign_labels(m, X)
        for x, lab in zip(X, labels):
            d = [float(((x - c) ** 2).sum()) for c in C]
            assert lab == d.index(min(d))
        s = 2.0 ** e
        assert np.array_equal(assign_labels(self.model(C * s), X * s), labels)
        assert np.array_equal(assign_labels(m, X), labels)


class TestCentroids:
    def test_arithmetic_mean(self):
        f = build_features([rec(40.0, 29.0), rec(40.2, 29.2)], 4)
        (c,) = compute_centroids([0, 0], f)
        assert c.centroid.lat == pytest.approx(40.1, abs=1e-12) and c.centroid.lon == pytest.approx(29.1, abs=1e-12)

    def test_single_member(self):
        f = build_features([rec(40.24213565, 28.97109287)], 6)
        (c,) = compute_centroids([3], f)
        assert c.label == 3 and c.member_count == 1
        assert (c.centroid.lat, c.centroid.lon) == (f[0].member_points[0].lat, f[0].member_points[0].lon)

    def test_reference_poi_centroid(self):
        # a published POI centroid in central Bursa
        pts = [(40.24213565 + d, 28.97109287 - d) for d in (-1e-4, 0.0, 1e-4)]
        f = build_features([rec(a, b) for a, b in pts], 6)
        (c,) = compute_centroids([3] * len(f), f)
        assert c.centroid.lat == pytest.approx(40.24213565, abs=1e-9)
        assert c.centroid.lon == pytest.approx(28.97109287, abs=1e-9)

    def test_empty_labels_omitted(self):
        f = build_features([rec(40.0, 29.0), rec(40.2, 29.2)], 4)
        assert [c.label for c in compute_centroids([0, 5], f)] == [0, 5]

    @given(st.lists(st.tuples(st.floats(BURSA_BBOX.min_lat, BURSA_BBOX.max_lat),
                              st.floats(BURSA_BBOX.min_lon, BURSA_BBOX.max_lon)), min_size=1, max_size=30),
           st.integers(1, 4))
    def test_centroids_inside_bbox(self, pts, k):
        f = build_features([rec(a, b) for a, b in pts], 6)
        labels = [i % k for i in range(len(f))]
        for c in compute_centroids(labels, f):
            assert BURSA_BBOX.contains(c.centroid)
