"""Network definitions: shared MLP/RDB blocks and the two attribute nets.

The coarse interpolation net (dlai_forward) lifts sparse colors through
four conv+RDB stages with neighborhood max-regrouping, carries the
features onto the dense positions by inverse-distance-weighted k-NN
aggregation, and regresses colors. The enhancement net (aem_forward)
predicts residual color offsets on the dense cloud from neighborhood
attribute features gated by learned geometry weights.

Forward functions come in two layers: *_graph builds a Tensor graph from
precomputed neighbor indices (training reuses these across epochs), and
the public wrappers take plain arrays, do the neighbor queries, and
return plain arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import core
from ..errors import KTooLarge, ShapeMismatch
from ..partition import Patch
from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class NetworkConfig:
    """Shared knobs for both attribute networks.

    k1: sparse neighbors used by coarse interpolation and aggregation.
    k2: dense neighbors used by the enhancement net.
    width: feature width C of the enhancement net.
    dlai_channels: per-stage widths of the coarse net.
    m, rate: patch size and up-sampling rate the nets are built for.
    """

    k1: int = 2
    k2: int = 32
    width: int = 64
    dlai_channels: tuple = (32, 64, 128, 128)
    rdb_layers: int = 3
    rdb_growth: int = 32
    m: int = 256
    rate: int = 4
    epsilon: float = 1e-8

    def __post_init__(self):
        self.dlai_channels = tuple(int(c) for c in self.dlai_channels)
        ints = (self.k1, self.k2, self.width, self.rdb_layers, self.rdb_growth,
                self.m, self.rate, *self.dlai_channels)
        if any(v < 1 for v in ints):
            raise ValueError("all network dimensions must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.k2 > self.m * self.rate:
            raise KTooLarge(f"k2={self.k2} exceeds dense patch size {self.m * self.rate}")


class ParameterStore:
    """Ordered name -> float32 array map with per-parameter Adam state."""

    def __init__(self):
        self._params: dict[str, np.ndarray] = {}
        self.moment1: dict[str, np.ndarray] = {}
        self.moment2: dict[str, np.ndarray] = {}
        self.steps: dict[str, int] = {}

    def add(self, name: str, value: np.ndarray):
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        arr = np.ascontiguousarray(value, dtype=np.float32)
        self._params[name] = arr
        self.moment1[name] = np.zeros_like(arr)
        self.moment2[name] = np.zeros_like(arr)
        self.steps[name] = 0

    def names(self) -> list[str]:
        return list(self._params)

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> np.ndarray:
        return self._params[name]

    def assign(self, name: str, value: np.ndarray):
        """Replace a parameter's values; the shape is locked at add()."""
        old = self._params[name]
        arr = np.ascontiguousarray(value, dtype=old.dtype)
        if arr.shape != old.shape:
            raise ShapeMismatch(f"{name}: {arr.shape} vs {old.shape}")
        self._params[name] = arr

    def tensors(self, dtype=None) -> dict[str, Tensor]:
        """Fresh leaf Tensors over the stored arrays (optionally cast)."""
        if dtype is None:
            return {name: Tensor(arr) for name, arr in self._params.items()}
        return {name: Tensor(arr.astype(dtype)) for name, arr in self._params.items()}

    def copy(self) -> "ParameterStore":
        dup = ParameterStore()
        for name, arr in self._params.items():
            dup.add(name, arr.copy())
            dup.moment1[name] = self.moment1[name].copy()
            dup.moment2[name] = self.moment2[name].copy()
            dup.steps[name] = self.steps[name]
        return dup


@dataclass
class LossReport:
    """Scalar losses for one evaluation: attribute MAE and geometry CD."""

    attribute_mae: float
    chamfer: float = 0.0


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(np.float32)


def init_linear(store: ParameterStore, prefix: str, fan_in: int, fan_out: int,
                rng: np.random.Generator, zero: bool = False):
    if zero:
        store.add(f"{prefix}.w", np.zeros((fan_in, fan_out), dtype=np.float32))
    else:
        store.add(f"{prefix}.w", _glorot(rng, fan_in, fan_out))
    store.add(f"{prefix}.b", np.zeros(fan_out, dtype=np.float32))


def init_mlp(store: ParameterStore, prefix: str, in_dim: int, widths,
             rng: np.random.Generator, zero_final: bool = False):
    dims = [in_dim, *widths]
    last = len(widths) - 1
    for i in range(len(widths)):
        init_linear(store, f"{prefix}.l{i}", dims[i], dims[i + 1], rng,
                    zero=zero_final and i == last)


def init_rdb(store: ParameterStore, prefix: str, width: int, layers: int,
             growth: int, rng: np.random.Generator):
    for i in range(layers):
        init_linear(store, f"{prefix}.conv{i}", width + i * growth, growth, rng)
    init_linear(store, f"{prefix}.fuse", width + layers * growth, width, rng)


def linear(params: dict[str, Tensor], prefix: str, x: Tensor) -> Tensor:
    return ad.add(ad.matmul(x, params[f"{prefix}.w"]), params[f"{prefix}.b"])


def mlp_forward(params, x, widths, prefix: str = "mlp") -> Tensor:
    """Shared-weight (1x1) MLP: ReLU between layers, linear final layer.

    params may be a ParameterStore or a dict of Tensors; widths is the
    per-layer output width list used at init time.
    """
    if isinstance(params, ParameterStore):
        params = params.tensors()
    x = x if isinstance(x, Tensor) else Tensor(x)
    n = len(widths)
    for i in range(n):
        w = params[f"{prefix}.l{i}.w"]
        if x.data.shape[-1] != w.data.shape[0]:
            raise ShapeMismatch(
                f"{prefix}.l{i}: input width {x.data.shape[-1]}, expected {w.data.shape[0]}"
            )
        x = linear(params, f"{prefix}.l{i}", x)
        if i < n - 1:
            x = ad.relu(x)
    return x


def rdb_forward(params, x, layers: int = 3, growth: int = 32,
                prefix: str = "rdb") -> Tensor:
    """Residual dense block over the channel axis.

    Each conv consumes the concatenation of the block input and every
    previous conv output; a linear fusion maps back to the input width
    and the block input is added back on.
    """
    if isinstance(params, ParameterStore):
        params = params.tensors()
    x = x if isinstance(x, Tensor) else Tensor(x)
    feats = [x]
    for i in range(layers):
        cat = feats[0] if len(feats) == 1 else ad.concat(feats, axis=-1)
        feats.append(ad.relu(linear(params, f"{prefix}.conv{i}", cat)))
    fused = linear(params, f"{prefix}.fuse", ad.concat(feats, axis=-1))
    return ad.add(fused, x)


# ---------------------------------------------------------------------------
# Coarse interpolation network


def init_dlai(store: ParameterStore, cfg: NetworkConfig, rng: np.random.Generator,
              zero_head: bool = True):
    prev = 3
    for i, width in enumerate(cfg.dlai_channels):
        init_linear(store, f"dlai.stage{i}.in", prev, width, rng)
        init_rdb(store, f"dlai.stage{i}.rdb", width, cfg.rdb_layers, cfg.rdb_growth, rng)
        prev = width
    init_mlp(store, "dlai.head", prev, (prev, 3), rng, zero_final=zero_head)


def dlai_graph(params: dict[str, Tensor], sparse_attrs: Tensor,
               regroup_idx: np.ndarray, agg_idx: np.ndarray,
               agg_weights: np.ndarray, cfg: NetworkConfig) -> Tensor:
    """Tensor-level coarse net given precomputed neighbor data.

    regroup_idx: (m, k1) sparse-internal neighbors (self included).
    agg_idx: (p, k1) sparse neighbors of each dense point.
    agg_weights: (p, k1, 1) normalized inverse-distance weights.
    """
    x = sparse_attrs
    for i in range(len(cfg.dlai_channels)):
        x = ad.relu(linear(params, f"dlai.stage{i}.in", x))
        x = rdb_forward(params, x, cfg.rdb_layers, cfg.rdb_growth,
                        prefix=f"dlai.stage{i}.rdb")
        x = ad.max_axis(ad.gather(x, regroup_idx), axis=1)
    carried = ad.sum_axis(ad.mul(ad.gather(x, agg_idx), agg_weights), axis=1)
    return mlp_forward(params, carried, (cfg.dlai_channels[-1], 3), prefix="dlai.head")


def dlai_neighbor_data(sparse_positions: np.ndarray, dense_positions: np.ndarray,
                       cfg: NetworkConfig):
    """(regroup_idx, agg_idx, agg_weights) for dlai_graph."""
    index = core.build_index(sparse_positions)
    regroup_idx, _ = core.knn_batch(index, sparse_positions, cfg.k1)
    agg_idx, dist = core.knn_batch(index, dense_positions, cfg.k1)
    w = 1.0 / (dist + cfg.epsilon)
    w /= w.sum(axis=1, keepdims=True)
    return regroup_idx, agg_idx, w[:, :, None].astype(np.float32)


def dlai_forward(store: ParameterStore, sparse: Patch, dense_positions: np.ndarray,
                 cfg: NetworkConfig, clamp: bool = True) -> np.ndarray:
    """Interpolate colors onto dense positions with the learned coarse net."""
    dense = np.asarray(dense_positions, dtype=np.float32)
    if dense.ndim != 2 or dense.shape[1] != 3:
        raise ShapeMismatch(f"dense positions must be (p, 3), got {dense.shape}")
    if cfg.k1 > sparse.cloud.n:
        raise KTooLarge(f"k1={cfg.k1} exceeds sparse patch size {sparse.cloud.n}")
    nbr = dlai_neighbor_data(sparse.cloud.positions, dense, cfg)
    out = dlai_graph(store.tensors(), Tensor(sparse.cloud.attributes), *nbr, cfg)
    attrs = out.data
    return np.clip(attrs, 0.0, 1.0) if clamp else attrs


# ---------------------------------------------------------------------------
# Attribute enhancement network


def init_aem(store: ParameterStore, cfg: NetworkConfig, rng: np.random.Generator,
             zero_head: bool = True):
    c = cfg.width
    init_mlp(store, "aem.wgeo", 3, (c, c), rng)
    init_mlp(store, "aem.feat", 3, (c, c), rng)
    init_mlp(store, "aem.local", c + 6, (c, c), rng)
    init_mlp(store, "aem.pool", c + 6, (c, c), rng)
    init_linear(store, "aem.mix", c, c, rng)
    init_mlp(store, "aem.head", c, (c, 3), rng, zero_final=zero_head)


def aem_graph(params: dict[str, Tensor], coarse: Tensor, nbr_idx: np.ndarray,
              pos_diff: np.ndarray, cfg: NetworkConfig) -> Tensor:
    """Tensor-level enhancement net.

    nbr_idx: (p, k2) dense-internal neighbors (self included).
    pos_diff: (p, k2, 3) center-minus-neighbor position offsets.
    """
    c = cfg.width
    p = coarse.data.shape[0]
    w = mlp_forward(params, Tensor(pos_diff), (c, c), prefix="aem.wgeo")
    feat = mlp_forward(params, coarse, (c, c), prefix="aem.feat")
    grouped_feat = ad.gather(feat, nbr_idx)
    nbr_attrs = ad.gather(coarse, nbr_idx)
    center = ad.reshape(coarse, (p, 1, 3))
    local_attrs = ad.concat([ad.sub(nbr_attrs, center), nbr_attrs], axis=-1)
    cat = ad.concat([grouped_feat, local_attrs], axis=-1)
    pooled = ad.max_axis(mlp_forward(params, cat, (c, c), prefix="aem.pool"), axis=1)
    gated = linear(params, "aem.mix", ad.mul(w, mlp_forward(params, cat, (c, c), prefix="aem.local")))
    fused = ad.add(pooled, ad.mean_axis(gated, axis=1))
    offsets = mlp_forward(params, fused, (c, 3), prefix="aem.head")
    return ad.add(offsets, coarse)


def aem_neighbor_data(dense_positions: np.ndarray, cfg: NetworkConfig):
    """(nbr_idx, pos_diff) for aem_graph."""
    dense = np.asarray(dense_positions, dtype=np.float32)
    index = core.build_index(dense)
    nbr_idx, _ = core.knn_batch(index, dense, cfg.k2)
    pos_diff = dense[:, None, :] - dense[nbr_idx]
    return nbr_idx, pos_diff


def aem_forward(store: ParameterStore, coarse_attrs: np.ndarray,
                dense_positions: np.ndarray, cfg: NetworkConfig,
                clamp: bool = False) -> np.ndarray:
    """Refine coarse colors with learned residual offsets.

    With a zero-initialized offset head the offsets are exactly zero and
    the input comes back bit-identical.
    """
    coarse = np.asarray(coarse_attrs, dtype=np.float32)
    dense = np.asarray(dense_positions, dtype=np.float32)
    if coarse.ndim != 2 or coarse.shape[1] != 3:
        raise ShapeMismatch(f"coarse attributes must be (p, 3), got {coarse.shape}")
    if coarse.shape[0] != dense.shape[0]:
        raise ShapeMismatch(
            f"{coarse.shape[0]} attributes vs {dense.shape[0]} positions"
        )
    if cfg.k2 > dense.shape[0]:
        raise KTooLarge(f"k2={cfg.k2} exceeds dense point count {dense.shape[0]}")
    nbr_idx, pos_diff = aem_neighbor_data(dense, cfg)
    out = aem_graph(store.tensors(), Tensor(coarse), nbr_idx, pos_diff, cfg)
    return np.clip(out.data, 0.0, 1.0) if clamp else out.data
