"""Patch division, training pairs, regrouping."""

import numpy as np
import pytest

from pcup import core
from pcup.errors import CloudTooSmall, InsufficientPoints, PatchLargerThanCloud
from pcup.partition import (
    PartitionConfig,
    extract_training_pair,
    partition,
    patch_count,
    regroup,
)

from synthdata import gen, random_cloud, two_clusters


class TestPatchCount:
    def test_large_cloud_value(self):
        assert patch_count(3_817_422, 3, 256) == 44736

    def test_single_patch(self):
        assert patch_count(256, 1, 256) == 1

    def test_overlap_three(self):
        assert patch_count(1000, 3, 256) == 12

    def test_cloud_smaller_than_patch(self):
        with pytest.raises(PatchLargerThanCloud):
            patch_count(255, 3, 256)

    def test_monotonicity(self):
        for seed in range(5):
            g = gen(seed)
            n = int(g.integers(300, 5000))
            c = float(g.uniform(1, 4))
            m = int(g.integers(8, 257))
            base = patch_count(n, c, m)
            assert patch_count(n + 100, c, m) >= base
            assert patch_count(n, c + 0.5, m) >= base
            if n >= 2 * m:
                assert patch_count(n, c, 2 * m) <= base


class TestPartition:
    def test_single_patch_is_whole_cloud(self):
        cloud = random_cloud(256, 0)
        patches = partition(cloud, PartitionConfig(m=256, c=1.0, rate=4))
        assert len(patches) == 1
        assert sorted(patches[0].source_indices.tolist()) == list(range(256))

    def test_counts_sizes_and_coverage(self):
        cloud = random_cloud(1024, 1)
        cfg = PartitionConfig(m=256, c=3.0, rate=4)
        patches = partition(cloud, cfg)
        assert len(patches) == 12
        covered = set()
        for p in patches:
            assert p.cloud.n == 256
            assert len(set(p.source_indices.tolist())) == 256
            covered.update(p.source_indices.tolist())
        assert covered == set(range(1024))

    def test_coverage_grows_with_overlap(self):
        # More overlap means more of the cloud lands in some patch. Full
        # coverage is not guaranteed at any fixed c, but on uniform
        # fixtures c=2 reaches ~98% and c=4 reaches every point.
        def coverage(cloud, c):
            patches = partition(cloud, PartitionConfig(m=64, c=c, rate=4))
            covered = set()
            for p in patches:
                covered.update(p.source_indices.tolist())
            return len(covered) / cloud.n

        for seed in range(4):
            g = gen(seed)
            n = int(g.integers(300, 3000))
            cloud = random_cloud(n, seed + 100)
            fractions = [coverage(cloud, c) for c in (1.0, 2.0, 4.0)]
            assert fractions[0] <= fractions[1] <= fractions[2]
            assert fractions[1] >= 0.95
            assert fractions[2] == 1.0

    def test_two_separated_clusters(self):
        cloud = two_clusters(256, gap=50.0, seed=2)
        patches = partition(cloud, PartitionConfig(m=256, c=1.0, rate=4))
        assert len(patches) == 2
        sets = [frozenset(p.source_indices.tolist()) for p in patches]
        assert frozenset(range(256)) in sets
        assert frozenset(range(256, 512)) in sets

    def test_patch_members_are_nearest_to_seed(self):
        cloud = random_cloud(500, 3)
        cfg = PartitionConfig(m=32, c=2.0, rate=4)
        patches = partition(cloud, cfg)
        index = core.build_index(cloud.positions)
        for p in patches[:5]:
            ns = core.knn(index, cloud.positions[p.seed_index], 32)
            assert np.array_equal(p.source_indices, ns.indices)
            assert p.source_indices[0] == p.seed_index

    def test_deterministic(self):
        cloud = random_cloud(400, 4)
        cfg = PartitionConfig(m=32, c=2.0, rate=4, fps_start=5)
        a = partition(cloud, cfg)
        b = partition(cloud, cfg)
        assert len(a) == len(b)
        for pa, pb in zip(a, b):
            assert np.array_equal(pa.source_indices, pb.source_indices)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PartitionConfig(m=4)
        with pytest.raises(ValueError):
            PartitionConfig(c=0.5)
        with pytest.raises(ValueError):
            PartitionConfig(rate=0)


class TestExtractTrainingPair:
    def test_shapes_and_membership(self):
        dense = random_cloud(3000, 5)
        cfg = PartitionConfig(m=256, c=3.0, rate=4)
        pair = extract_training_pair(dense, seed=17, cfg=cfg, rng=0)
        assert pair.dense.n == 1024
        assert pair.sparse.cloud.n == 256
        # sparse indices address the dense half exactly
        assert np.array_equal(
            pair.sparse.cloud.positions,
            pair.dense.positions[pair.sparse.source_indices],
        )
        assert np.array_equal(
            pair.sparse.cloud.attributes,
            pair.dense.attributes[pair.sparse.source_indices],
        )

    def test_dense_half_is_nearest_to_seed(self):
        dense = random_cloud(2000, 6)
        cfg = PartitionConfig(m=64, c=1.0, rate=4)
        seed = 123
        pair = extract_training_pair(dense, seed, cfg, rng=1)
        index = core.build_index(dense.positions)
        ns = core.knn(index, dense.positions[seed], 256)
        assert np.array_equal(pair.dense.positions, dense.positions[ns.indices])
        assert np.array_equal(pair.dense.positions[0], dense.positions[seed])

    def test_rate_one_degenerate(self):
        dense = random_cloud(300, 7)
        cfg = PartitionConfig(m=64, c=1.0, rate=1)
        pair = extract_training_pair(dense, 0, cfg, rng=2)
        assert pair.sparse.cloud.n == pair.dense.n == 64
        assert np.array_equal(pair.sparse.cloud.positions, pair.dense.positions)

    def test_cloud_too_small(self):
        dense = random_cloud(1000, 8)
        with pytest.raises(CloudTooSmall):
            extract_training_pair(dense, 0, PartitionConfig(m=256, c=3.0, rate=4), rng=0)

    def test_deterministic_in_rng(self):
        dense = random_cloud(600, 9)
        cfg = PartitionConfig(m=32, c=1.0, rate=4)
        a = extract_training_pair(dense, 5, cfg, rng=11)
        b = extract_training_pair(dense, 5, cfg, rng=11)
        c = extract_training_pair(dense, 5, cfg, rng=12)
        assert np.array_equal(a.sparse.source_indices, b.sparse.source_indices)
        assert not np.array_equal(a.sparse.source_indices, c.sparse.source_indices)


class TestRegroup:
    def test_single_patch_identity_up_to_order(self):
        cloud = random_cloud(128, 10)
        out = regroup([cloud], 128)
        want = {tuple(row) for row in cloud.positions.tolist()}
        got = {tuple(row) for row in out.positions.tolist()}
        assert got == want

    def test_subset_and_count(self):
        clouds = [random_cloud(256, s) for s in range(12)]
        out = regroup(clouds, 1024)
        assert out.n == 1024
        union = {tuple(r) for c in clouds for r in c.positions.tolist()}
        assert all(tuple(r) in union for r in out.positions.tolist())

    def test_duplicate_patch_spreads_first(self):
        cloud = random_cloud(100, 11)
        out = regroup([cloud, cloud], 100)
        # With every point duplicated, a full-size selection must never
        # need both copies of any point.
        got = [tuple(r) for r in out.positions.tolist()]
        assert len(set(got)) == 100

    def test_insufficient_points(self):
        cloud = random_cloud(50, 12)
        with pytest.raises(InsufficientPoints):
            regroup([cloud], 51)
        with pytest.raises(InsufficientPoints):
            regroup([], 1)

    def test_attributes_follow_positions(self):
        cloud = random_cloud(80, 13)
        out = regroup([cloud], 40)
        lookup = {tuple(p): tuple(a) for p, a in
                  zip(cloud.positions.tolist(), cloud.attributes.tolist())}
        for p, a in zip(out.positions.tolist(), out.attributes.tolist()):
            assert lookup[tuple(p)] == tuple(a)
