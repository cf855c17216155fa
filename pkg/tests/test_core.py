"""Core spatial primitives against brute-force oracles."""

import numpy as np
import pytest

from pcup import core
from pcup.errors import (
    CountTooLarge,
    DimensionMismatch,
    EmptyInput,
    KTooLarge,
    NonFinite,
    RateTooLarge,
)

from synthdata import gen, random_cloud


def brute_knn(positions: np.ndarray, queries: np.ndarray, k: int):
    """Reference: full distance matrix, stable argsort (ties to low index)."""
    p = positions.astype(np.float64)
    q = queries.astype(np.float64)
    d = np.sqrt(((q[:, None, :] - p[None, :, :]) ** 2).sum(axis=2))
    order = np.argsort(d, axis=1, kind="stable")[:, :k]
    return order.astype(np.int64), np.take_along_axis(d, order, axis=1)


class TestColoredPointCloud:
    def test_basic_shape_and_dtype(self):
        c = random_cloud(10, 0)
        assert c.n == 10
        assert c.positions.dtype == np.float32
        assert c.attributes.dtype == np.float32

    def test_take_copies_rows(self):
        c = random_cloud(10, 1)
        sub = c.take([3, 7])
        assert sub.n == 2
        assert np.array_equal(sub.positions[0], c.positions[3])
        sub.positions[0] = 0
        assert not np.array_equal(sub.positions[0], c.positions[3])

    def test_rejects_bad_inputs(self):
        with pytest.raises(EmptyInput):
            core.ColoredPointCloud(np.zeros((0, 3)), np.zeros((0, 3)))
        with pytest.raises(DimensionMismatch):
            core.ColoredPointCloud(np.zeros((4, 2)), np.zeros((4, 2)))
        with pytest.raises(DimensionMismatch):
            core.ColoredPointCloud(np.zeros((4, 3)), np.zeros((5, 3)))
        with pytest.raises(NonFinite):
            core.ColoredPointCloud(np.full((2, 3), np.nan), np.zeros((2, 3)))
        with pytest.raises(ValueError):
            core.ColoredPointCloud(np.zeros((2, 3)), np.full((2, 3), 1.5))


class TestKnn:
    def test_matches_brute_force_random(self):
        for seed in range(10):
            g = gen(seed)
            n = int(g.integers(5, 400))
            pos = g.random((n, 3)).astype(np.float32)
            q = g.random((7, 3)).astype(np.float32)
            k = int(g.integers(1, min(n, 9) + 1))
            index = core.build_index(pos)
            want_i, want_d = brute_knn(pos, q, k)
            got_i, got_d = core.knn_batch(index, q, k)
            assert np.array_equal(got_i, want_i)
            assert np.array_equal(got_d, want_d)
            for row in range(q.shape[0]):
                ns = core.knn(index, q[row], k)
                assert np.array_equal(ns.indices, want_i[row])
                assert np.array_equal(ns.distances, want_d[row])

    def test_tie_rule_on_lattice(self):
        # Queries at cell centers are equidistant from 4 lattice corners;
        # ties must resolve toward ascending point index.
        ax = np.arange(4, dtype=np.float32)
        xx, yy = np.meshgrid(ax, ax, indexing="ij")
        pos = np.stack([xx.ravel(), yy.ravel(), np.zeros(16, np.float32)], axis=1)
        q = np.array([[0.5, 0.5, 0.0], [1.5, 2.5, 0.0]], dtype=np.float32)
        index = core.build_index(pos)
        want_i, want_d = brute_knn(pos, q, 6)
        got_i, got_d = core.knn_batch(index, q, 6)
        assert np.array_equal(got_i, want_i)
        assert np.array_equal(got_d, want_d)

    def test_duplicate_points(self):
        pos = np.array([[1, 1, 1]] * 5 + [[2, 2, 2]] * 3, dtype=np.float32)
        index = core.build_index(pos)
        ns = core.knn(index, [1, 1, 1], 5)
        assert np.array_equal(ns.indices, [0, 1, 2, 3, 4])
        assert np.all(ns.distances == 0)
        got_i, _ = core.knn_batch(index, pos[:2], 6)
        assert np.array_equal(got_i[0], [0, 1, 2, 3, 4, 5])

    def test_query_point_includes_itself(self):
        c = random_cloud(50, 3)
        index = core.build_index(c.positions)
        ns = core.knn(index, c.positions[17], 1)
        assert ns.indices[0] == 17
        assert ns.distances[0] == 0.0

    def test_k_equals_n(self):
        c = random_cloud(30, 4)
        index = core.build_index(c.positions)
        want_i, want_d = brute_knn(c.positions, c.positions[:5], 30)
        got_i, got_d = core.knn_batch(index, c.positions[:5], 30)
        assert np.array_equal(got_i, want_i)
        assert np.array_equal(got_d, want_d)

    def test_k_too_large(self):
        index = core.build_index(np.zeros((4, 3), np.float32))
        with pytest.raises(KTooLarge):
            core.knn(index, [0, 0, 0], 5)
        with pytest.raises(KTooLarge):
            core.knn_batch(index, np.zeros((2, 3)), 5)

    def test_rejects_non_finite_query(self):
        index = core.build_index(np.zeros((4, 3), np.float32))
        with pytest.raises(NonFinite):
            core.knn(index, [np.inf, 0, 0], 2)


class TestFarthestPointSample:
    def test_collinear_hand_case(self):
        pos = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]], dtype=np.float32)
        assert np.array_equal(core.farthest_point_sample(pos, 3, 0), [0, 3, 1])
        assert np.array_equal(core.farthest_point_sample(pos, 4, 0), [0, 3, 1, 2])

    def test_square_tie_goes_to_low_index(self):
        pos = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=np.float32)
        # From 0 the farthest is 3; then 1 and 2 tie at distance 1.
        assert np.array_equal(core.farthest_point_sample(pos, 3, 0), [0, 3, 1])

    def test_duplicates_never_repicked(self):
        pos = np.ones((5, 3), dtype=np.float32)
        sel = core.farthest_point_sample(pos, 5, 0)
        assert sorted(sel.tolist()) == [0, 1, 2, 3, 4]

    def test_greedy_max_min_property(self):
        for seed in range(8):
            g = gen(seed)
            pts = g.random((int(g.integers(10, 200)), 3)).astype(np.float32).astype(np.float64)
            count = int(g.integers(2, min(len(pts), 20)))
            sel = core.farthest_point_sample(pts.astype(np.float32), count, 0)
            assert len(set(sel.tolist())) == count
            mind = ((pts - pts[sel[0]]) ** 2).sum(axis=1)
            for t in range(1, count):
                chosen = sel[t]
                assert mind[chosen] >= mind.max() - 1e-9
                mind = np.minimum(mind, ((pts - pts[chosen]) ** 2).sum(axis=1))
                mind[sel[: t + 1]] = -1.0

    def test_start_is_first_and_validated(self):
        c = random_cloud(20, 5)
        sel = core.farthest_point_sample(c.positions, 4, start=7)
        assert sel[0] == 7
        with pytest.raises(ValueError):
            core.farthest_point_sample(c.positions, 4, start=20)
        with pytest.raises(CountTooLarge):
            core.farthest_point_sample(c.positions, 21)


class TestDownsample:
    def test_exact_counts(self):
        assert core.downsample_count(1000, 4) == 250
        assert core.downsample_count(1001, 4) == 250
        assert core.downsample_count(1000, 3.5) == 285
        assert core.downsample_count(7, 1) == 7

    def test_indices_sorted_distinct_deterministic(self):
        for seed in range(6):
            idx = core.downsample_indices(500, 4, seed)
            assert idx.shape == (125,)
            assert np.all(np.diff(idx) > 0)
            assert np.array_equal(idx, core.downsample_indices(500, 4, seed))
        assert not np.array_equal(
            core.downsample_indices(500, 4, 1), core.downsample_indices(500, 4, 2)
        )

    def test_cloud_pairing(self):
        c = random_cloud(100, 6)
        sparse = core.random_downsample(c, 4, 9)
        assert sparse.n == 25
        idx = core.downsample_indices(100, 4, 9)
        assert np.array_equal(sparse.positions, c.positions[idx])
        assert np.array_equal(sparse.attributes, c.attributes[idx])

    def test_rate_errors(self):
        with pytest.raises(RateTooLarge):
            core.downsample_indices(10, 20, 0)
        with pytest.raises(ValueError):
            core.downsample_indices(10, 0.5, 0)


def test_bounding_box():
    pos = np.array([[0, -1, 2], [3, 4, -5], [1, 1, 1]], dtype=np.float32)
    mins, maxs = core.bounding_box(pos)
    assert np.array_equal(mins, [0, -1, -5])
    assert np.array_equal(maxs, [3, 4, 2])
