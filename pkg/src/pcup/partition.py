"""Overlapped patch partitioning, training-pair extraction, and regrouping.

A large cloud is divided into N = ceil(n*c/m) patches of m points each,
where the overlap ratio c >= 1 makes the patches over-cover the cloud so
that patch borders are seen more than once. Patch seeds come from
farthest point sampling, memberships from k-nearest-neighbor gathering
around each seed. After per-patch up-sampling the patches are regrouped
by concatenation plus FPS back down to the exact target count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import core
from .core import ColoredPointCloud, RngSeed
from .errors import CloudTooSmall, InsufficientPoints, PatchLargerThanCloud


@dataclass
class PartitionConfig:
    """Knobs for patch division.

    m: points per patch. c: overlap ratio >= 1. rate: up-sampling rate.
    fps_start: index of the first FPS seed.
    """

    m: int = 256
    c: float = 3.0
    rate: int = 4
    fps_start: int = 0

    def __post_init__(self):
        if self.m < 8:
            raise ValueError(f"patch size m must be >= 8, got {self.m}")
        if self.c < 1:
            raise ValueError(f"overlap ratio c must be >= 1, got {self.c}")
        if self.rate < 1:
            raise ValueError(f"rate must be >= 1, got {self.rate}")


@dataclass
class Patch:
    """m points cut out of a parent cloud.

    source_indices[i] locates point i of `cloud` in the parent;
    seed_index is the parent index of the seed the patch grew from.
    """

    cloud: ColoredPointCloud
    seed_index: int
    source_indices: np.ndarray = field(repr=False)


@dataclass
class TrainingPair:
    """A sparse patch with its dense ground truth.

    sparse.cloud holds m points drawn from `dense` (m*R points); the
    sparse patch's source_indices point into `dense`, so exact membership
    is available by construction.
    """

    sparse: Patch
    dense: ColoredPointCloud


def patch_count(n: int, c: float, m: int) -> int:
    """Number of overlapped patches for an n-point cloud: ceil(n*c/m), at least 1."""
    if n < m:
        raise PatchLargerThanCloud(f"cloud has {n} points, patch size is {m}")
    if float(c).is_integer():
        count = -((-n * int(c)) // m)
    else:
        count = math.ceil(n * c / m)
    return max(count, 1)


def partition(cloud: ColoredPointCloud, cfg: PartitionConfig) -> list[Patch]:
    """Divide a cloud into overlapped m-point patches.

    Seeds are FPS-selected, so they spread uniformly; each patch is the
    m nearest cloud points to its seed (the seed itself comes first).
    Deterministic for a fixed fps_start.
    """
    n = cloud.n
    count = patch_count(n, cfg.c, cfg.m)
    seeds = core.farthest_point_sample(cloud.positions, count, cfg.fps_start)
    index = core.build_index(cloud.positions)
    members, _ = core.knn_batch(index, cloud.positions[seeds], cfg.m)
    patches = []
    for row, seed in enumerate(seeds):
        idx = members[row]
        patches.append(Patch(cloud.take(idx), int(seed), idx))
    return patches


def extract_training_pair(
    dense: ColoredPointCloud, seed: int, cfg: PartitionConfig, rng: RngSeed
) -> TrainingPair:
    """Cut one (sparse, dense) training pair out of a ground-truth cloud.

    The dense half is the m*R nearest neighbors of `seed` in the ground
    truth; the sparse half randomly down-samples it by R. The sparse
    patch's indices refer to the dense half, with the seed sitting at
    dense index 0.
    """
    need = cfg.m * cfg.rate
    if dense.n < need:
        raise CloudTooSmall(f"need {need} points for m={cfg.m}, R={cfg.rate}; cloud has {dense.n}")
    if not 0 <= seed < dense.n:
        raise ValueError(f"seed index {seed} out of range for {dense.n} points")
    index = core.build_index(dense.positions)
    ns = core.knn(index, dense.positions[seed], need)
    dense_part = dense.take(ns.indices)
    keep = core.downsample_indices(need, cfg.rate, rng)
    sparse = Patch(dense_part.take(keep), 0, keep)
    return TrainingPair(sparse, dense_part)


def regroup(
    patches, target_count: int, fps_start: int = 0
) -> ColoredPointCloud:
    """Merge up-sampled patches into one cloud of exactly target_count points.

    Patch points are concatenated in order and FPS-reduced; overlap
    duplicates lose out naturally because their min-distance to the
    selected set is zero.
    """
    clouds = list(patches)
    if not clouds:
        raise InsufficientPoints("no patches to regroup")
    total = sum(c.n for c in clouds)
    if total < target_count:
        raise InsufficientPoints(f"patches supply {total} points, target is {target_count}")
    positions = np.concatenate([c.positions for c in clouds], axis=0)
    attributes = np.concatenate([c.attributes for c in clouds], axis=0)
    keep = core.farthest_point_sample(positions, target_count, fps_start)
    return ColoredPointCloud(positions[keep], attributes[keep])
