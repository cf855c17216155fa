"""Coarse up-sampling: pluggable patch geometry and distance-weighted colors.

Geometry and attributes are handled separately. A GeometryUpsampler
produces m*R dense positions from m sparse ones; gdwai() then paints the
dense positions by inverse-distance-weighted interpolation of the sparse
colors. Learned geometry networks are deliberately out of scope; the
baseline up-sampler only has to keep new points near the surface so that
attribute interpolation has sensible neighborhoods.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import core
from .core import RngSeed
from .errors import DimensionMismatch, TooFewPoints
from .partition import Patch


@dataclass
class GdwaiConfig:
    """k1: sparse neighbors per dense point; epsilon: distance regularizer."""

    k1: int = 2
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.k1 < 1:
            raise ValueError(f"k1 must be >= 1, got {self.k1}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")


class GeometryUpsampler:
    """Interface: m sparse positions -> m*R dense positions.

    Implementations must return exactly m*R finite positions.
    trainable_parameters() returns None for non-learned up-samplers.
    """

    def upsample(self, positions: np.ndarray, rate: int, seed: RngSeed) -> np.ndarray:
        raise NotImplementedError

    def trainable_parameters(self):
        return None


class BaselineGeometryUpsampler(GeometryUpsampler):
    """Midpoint-with-jitter interpolation on nearest-neighbor edges."""

    def upsample(self, positions: np.ndarray, rate: int, seed: RngSeed) -> np.ndarray:
        return upsample_geometry_baseline(positions, rate, seed)


class GroundTruthGeometryUpsampler(GeometryUpsampler):
    """Pass-through of reference coordinates, for attribute-only studies.

    Holds a dense reference cloud's positions; a patch's dense geometry is
    the m*R reference points nearest the patch seed. The first sparse
    position is taken to be the seed (partition() orders patches that way).
    """

    def __init__(self, reference_positions: np.ndarray):
        self._index = core.build_index(reference_positions)

    def upsample(self, positions: np.ndarray, rate: int, seed: RngSeed) -> np.ndarray:
        pos = np.asarray(positions, dtype=np.float32)
        need = pos.shape[0] * rate
        ns = core.knn(self._index, pos[0], need)
        return self._index.positions[ns.indices]


def upsample_geometry_baseline(positions: np.ndarray, rate: int, seed: RngSeed) -> np.ndarray:
    """Up-sample m positions to m*rate by midpoint interpolation with jitter.

    The originals are kept verbatim at the front. Each new point picks a
    source point and one of its 4 nearest neighbors round-robin, and lands
    at the segment midpoint displaced along the segment by a uniform
    random offset of up to +-5% of the segment length.
    """
    pos = np.asarray(positions, dtype=np.float32)
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise DimensionMismatch(f"positions must be (m, 3), got {pos.shape}")
    m = pos.shape[0]
    if rate == 1:
        return pos.copy()
    if m < 2:
        raise TooFewPoints(f"need at least 2 points to interpolate, got {m}")

    nbh = min(4, m - 1)
    index = core.build_index(pos)
    idx, _ = core.knn_batch(index, pos, nbh + 1)
    # Drop each point's own entry; coincident points make the self index
    # land anywhere in the tied block, so locate it explicitly.
    neighbors = np.empty((m, nbh), dtype=np.int64)
    for i in range(m):
        row = idx[i]
        self_at = np.nonzero(row == i)[0]
        row = np.delete(row, self_at[0]) if self_at.size else row[:-1]
        neighbors[i] = row[:nbh]

    extra = m * (rate - 1)
    rng = np.random.Generator(np.random.PCG64(seed))
    offsets = rng.uniform(-0.05, 0.05, size=extra).astype(np.float32)
    t = np.arange(extra)
    src = t % m
    slot = (t // m) % nbh
    nbr = neighbors[src, slot]
    a = pos[src]
    seg = pos[nbr] - a
    fresh = a + seg * (0.5 + offsets[:, None])
    return np.concatenate([pos, fresh], axis=0)


def gdwai(dense_positions: np.ndarray, sparse: Patch, cfg: GdwaiConfig) -> np.ndarray:
    """Interpolate colors onto dense positions from a sparse patch.

    Each dense point takes the weighted average of its k1 nearest sparse
    colors with weights 1/(d + epsilon). A dense point within epsilon of a
    sparse point copies that color bit-exactly. Output is float32 in [0,1].
    """
    dense = np.asarray(dense_positions, dtype=np.float32)
    if dense.ndim != 2 or dense.shape[1] != 3:
        raise DimensionMismatch(f"dense positions must be (p, 3), got {dense.shape}")
    m = sparse.cloud.n
    if cfg.k1 > m:
        raise DimensionMismatch(f"k1={cfg.k1} exceeds sparse patch size {m}")

    index = core.build_index(sparse.cloud.positions)
    idx, dist = core.knn_batch(index, dense, cfg.k1)
    colors = sparse.cloud.attributes[idx].astype(np.float64)

    w = 1.0 / (dist + cfg.epsilon)
    w /= w.sum(axis=1, keepdims=True)
    out = (colors * w[:, :, None]).sum(axis=1)
    out = np.clip(out, 0.0, 1.0).astype(np.float32)

    exact = dist[:, 0] <= cfg.epsilon
    if np.any(exact):
        out[exact] = sparse.cloud.attributes[idx[exact, 0]]
    return out
