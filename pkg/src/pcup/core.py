"""Core point-cloud type and spatial primitives.

Positions are float32 (n, 3) arrays, attributes float32 (n, 3) in [0, 1].
Neighbor queries follow one ordering rule everywhere: ascending distance,
ties broken by ascending source index. Distances are computed in float64
from the stored float32 coordinates so that library results and the
brute-force scan used in tests agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    CountTooLarge,
    DimensionMismatch,
    EmptyInput,
    KTooLarge,
    NonFinite,
    RateTooLarge,
)

# Seeds are plain unsigned ints fed to numpy's PCG64, which is stable
# across platforms and releases.
RngSeed = int

# Relative slack used to decide whether a neighbor-set boundary is a tie
# that needs the exact fallback path. Float64 distances computed from
# identical float32 inputs agree to ~1e-15 relative, so 1e-9 is generous.
_TIE_RTOL = 1e-9


def _check_positions(positions) -> np.ndarray:
    pos = np.asarray(positions, dtype=np.float32)
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise DimensionMismatch(f"positions must be (n, 3), got {pos.shape}")
    if pos.shape[0] == 0:
        raise EmptyInput("point set is empty")
    if not np.all(np.isfinite(pos)):
        raise NonFinite("positions contain NaN or infinity")
    return pos


class ColoredPointCloud:
    """A point set with one RGB attribute triple per point.

    Parameters
    ----------
    positions : array-like, shape (n, 3)
        Cartesian coordinates, stored as float32.
    attributes : array-like, shape (n, 3)
        Per-point colors in [0, 1], stored as float32.
    """

    __slots__ = ("positions", "attributes")

    def __init__(self, positions, attributes):
        pos = _check_positions(positions)
        att = np.asarray(attributes, dtype=np.float32)
        if att.shape != pos.shape:
            raise DimensionMismatch(
                f"attributes shape {att.shape} does not match positions {pos.shape}"
            )
        if not np.all(np.isfinite(att)):
            raise NonFinite("attributes contain NaN or infinity")
        if att.min() < 0.0 or att.max() > 1.0:
            raise ValueError("attributes must lie in [0, 1]")
        self.positions = pos
        self.attributes = att

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def take(self, indices) -> "ColoredPointCloud":
        """Sub-cloud at the given point indices (rows are copied)."""
        idx = np.asarray(indices, dtype=np.int64)
        return ColoredPointCloud(self.positions[idx], self.attributes[idx])

    def __repr__(self) -> str:
        return f"ColoredPointCloud(n={self.n})"


@dataclass
class NeighborSet:
    """Result of one k-nearest-neighbor query.

    indices are sorted by (distance, index); distances are float64
    Euclidean lengths matching the ordering.
    """

    indices: np.ndarray
    distances: np.ndarray


class SpatialIndex:
    """k-d tree over a fixed position array; build once, query many."""

    __slots__ = ("positions", "_pos64", "_tree")

    def __init__(self, positions):
        self.positions = _check_positions(positions)
        self._pos64 = self.positions.astype(np.float64)
        self._tree = cKDTree(self._pos64)

    @property
    def n(self) -> int:
        return self.positions.shape[0]


def build_index(positions) -> SpatialIndex:
    """Build a spatial index over (n, 3) positions."""
    return SpatialIndex(positions)


def _exact_scan(pos64: np.ndarray, q64: np.ndarray, k: int):
    """Brute-force (distance, index) ordering over all points."""
    d = np.sqrt(((pos64 - q64) ** 2).sum(axis=1))
    order = np.lexsort((np.arange(d.shape[0]), d))[:k]
    return order.astype(np.int64), d[order]


def knn(index: SpatialIndex, query, k: int) -> NeighborSet:
    """k nearest neighbors of a single query position.

    Results are identical to a brute-force scan: sorted by distance,
    exact ties resolved toward the smaller point index. When the query
    coincides with an indexed point, that point appears in its own
    neighbor set.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > index.n:
        raise KTooLarge(f"k={k} exceeds point count {index.n}")
    q64 = np.asarray(query, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(q64)):
        raise NonFinite("query position is not finite")
    if k == index.n:
        idx, dist = _exact_scan(index._pos64, q64, k)
        return NeighborSet(idx, dist)
    d, _ = index._tree.query(q64, k=k)
    dk = float(np.max(d))
    cand = index._tree.query_ball_point(q64, r=dk * (1.0 + _TIE_RTOL))
    cand = np.asarray(cand, dtype=np.int64)
    dd = np.sqrt(((index._pos64[cand] - q64) ** 2).sum(axis=1))
    order = np.lexsort((cand, dd))[:k]
    return NeighborSet(cand[order], dd[order])


def knn_batch(index: SpatialIndex, queries, k: int):
    """Vectorized knn over (q, 3) queries.

    Returns (indices, distances) arrays of shape (q, k), row i equal to
    knn(index, queries[i], k). The tree answers the bulk query; rows where
    the k-th/(k+1)-th boundary is a near-tie are re-resolved exactly.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > index.n:
        raise KTooLarge(f"k={k} exceeds point count {index.n}")
    q64 = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(q64)):
        raise NonFinite("query positions are not finite")
    nq = q64.shape[0]
    if k == index.n:
        out_i = np.empty((nq, k), dtype=np.int64)
        out_d = np.empty((nq, k), dtype=np.float64)
        for row in range(nq):
            out_i[row], out_d[row] = _exact_scan(index._pos64, q64[row], k)
        return out_i, out_d

    kq = min(k + 1, index.n)
    _, cand = index._tree.query(q64, k=kq)
    cand = cand.reshape(nq, kq).astype(np.int64)
    diff = index._pos64[cand] - q64[:, None, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    # Sort each row by (distance, index): stable sort on index first,
    # then stable sort on the permuted distances.
    rows = np.arange(nq)[:, None]
    p1 = np.argsort(cand, axis=1, kind="stable")
    cand = cand[rows, p1]
    dist = dist[rows, p1]
    p2 = np.argsort(dist, axis=1, kind="stable")
    cand = cand[rows, p2]
    dist = dist[rows, p2]

    out_i = cand[:, :k].copy()
    out_d = dist[:, :k].copy()
    if kq > k:
        # A boundary tie means the tree's candidate set may be missing a
        # lower-index member; redo those rows with the exact single-query
        # path.
        tied = dist[:, k] <= dist[:, k - 1] * (1.0 + _TIE_RTOL)
        for row in np.nonzero(tied)[0]:
            ns = knn(index, q64[row], k)
            out_i[row] = ns.indices
            out_d[row] = ns.distances
    return out_i, out_d


def farthest_point_sample(positions, count: int, start: int = 0) -> np.ndarray:
    """Greedy max-min sampling of `count` point indices.

    Starting from `start`, each step picks the point whose distance to the
    already selected set is largest; exact ties go to the smaller index.
    Deterministic for a fixed start.
    """
    pos = _check_positions(positions)
    n = pos.shape[0]
    if count < 1:
        raise ValueError("count must be >= 1")
    if count > n:
        raise CountTooLarge(f"count={count} exceeds point count {n}")
    if not 0 <= start < n:
        raise ValueError(f"start index {start} out of range for {n} points")
    pts = pos.astype(np.float64)
    # |x - p|^2 expanded so each step is one matrix-vector product; the
    # greedy loop dominates regrouping, where n reaches the hundreds of
    # thousands. Cancellation noise only matters for exact ties, and
    # identical rows still produce identical values.
    norms = np.einsum("ij,ij->i", pts, pts)
    sel = np.empty(count, dtype=np.int64)
    sel[0] = start
    p = pts[start]
    mind = norms - 2.0 * (pts @ p) + p @ p
    # Selected entries are parked at -inf so argmax can never re-pick
    # them, even when every remaining point is at distance zero.
    mind[start] = -np.inf
    for t in range(1, count):
        nxt = int(np.argmax(mind))
        sel[t] = nxt
        p = pts[nxt]
        np.minimum(mind, norms - 2.0 * (pts @ p) + p @ p, out=mind)
        mind[nxt] = -np.inf
    return sel


def downsample_count(n: int, rate: float) -> int:
    """Number of points kept when down-sampling n points by `rate`."""
    if float(rate).is_integer():
        return n // int(rate)
    return int(np.floor(n / float(rate)))


def downsample_indices(n: int, rate: float, seed: RngSeed) -> np.ndarray:
    """Uniform without-replacement choice of floor(n / rate) indices.

    Indices come back sorted ascending; the draw is a pure function of
    (n, rate, seed).
    """
    if rate < 1.0:
        raise ValueError(f"rate must be >= 1, got {rate}")
    count = downsample_count(n, rate)
    if count < 1:
        raise RateTooLarge(f"rate {rate} leaves no points out of {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    idx = rng.choice(n, size=count, replace=False)
    idx.sort()
    return idx.astype(np.int64)


def random_downsample(cloud: ColoredPointCloud, rate: float, seed: RngSeed) -> ColoredPointCloud:
    """Uniform random down-sampling of a cloud by the given rate."""
    return cloud.take(downsample_indices(cloud.n, rate, seed))


def bounding_box(positions) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned (min, max) corners as float64 triples."""
    pos = _check_positions(positions).astype(np.float64)
    return pos.min(axis=0), pos.max(axis=0)
