"""Losses, optimizer, augmentation, training loop, and gradient checking.

Training follows a two-stage shape: a geometry stage driven by Chamfer
distance that only applies when the configured geometry up-sampler is
learnable (the shipped ones are not, so it is skipped), then an attribute
stage that minimizes mean absolute color error on training pairs whose
dense geometry is the ground truth, making the prediction/target
correspondence index-exact.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .. import coarse as coarse_mod
from .. import metrics
from ..core import RngSeed
from ..errors import EmptyDataset, ShapeMismatch
from ..partition import Patch, TrainingPair
from . import autodiff as ad
from .autodiff import Tensor
from .nets import (
    LossReport,
    NetworkConfig,
    ParameterStore,
    aem_graph,
    aem_neighbor_data,
    dlai_graph,
    dlai_neighbor_data,
    init_aem,
    init_dlai,
    init_linear,
    init_mlp,
    init_rdb,
    linear,
    mlp_forward,
    rdb_forward,
)


def mae_loss(pred, target):
    """Mean of |pred - target| over all entries.

    Tensor in, Tensor out (for training graphs); arrays in, float out.
    """
    if isinstance(pred, Tensor):
        t = target if isinstance(target, Tensor) else Tensor(np.asarray(target))
        if pred.data.shape != t.data.shape:
            raise ShapeMismatch(f"{pred.data.shape} vs {t.data.shape}")
        return ad.mean_all(ad.abs_(ad.sub(pred, t)))
    p = np.asarray(pred)
    t = np.asarray(target)
    if p.shape != t.shape:
        raise ShapeMismatch(f"{p.shape} vs {t.shape}")
    return float(np.abs(p - t).mean())


def chamfer_loss(pred_positions, target_positions) -> float:
    """Symmetric squared Chamfer distance (same computation the metrics use)."""
    return metrics.chamfer(pred_positions, target_positions)


def adam_step(store: ParameterStore, grads: dict[str, np.ndarray],
              lr: float = 0.001, betas: tuple[float, float] = (0.9, 0.999),
              eps: float = 1e-8) -> ParameterStore:
    """One Adam update with bias correction, in place; returns the store."""
    b1, b2 = betas
    for name, g in grads.items():
        p = store[name]
        g = np.asarray(g, dtype=p.dtype)
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: grad {g.shape} vs param {p.shape}")
        t = store.steps[name] + 1
        store.steps[name] = t
        m = store.moment1[name]
        v = store.moment2[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        p -= lr * mhat / (np.sqrt(vhat) + eps)
    return store


def augment_transform(pair: TrainingPair, scale: float, noise: np.ndarray) -> TrainingPair:
    """Apply one shared (noise, scale) transform to both halves of a pair.

    noise is per-dense-point; the sparse half inherits its points' noise
    through source_indices, so sparse membership in dense survives
    bit-exactly. Attributes are untouched.
    """
    from ..core import ColoredPointCloud

    dense_pos = (pair.dense.positions + np.asarray(noise, dtype=np.float32)) * np.float32(scale)
    dense = ColoredPointCloud(dense_pos, pair.dense.attributes)
    keep = pair.sparse.source_indices
    sparse_cloud = ColoredPointCloud(dense_pos[keep], pair.sparse.cloud.attributes)
    return TrainingPair(Patch(sparse_cloud, pair.sparse.seed_index, keep), dense)


def augment(pair: TrainingPair, rng: RngSeed) -> TrainingPair:
    """Randomly jitter and rescale a training pair.

    Per-point Gaussian position noise with sigma = 0.5% of the dense
    bounding-box diagonal, then a global uniform scale in [0.8, 1.25].
    """
    gen = np.random.Generator(np.random.PCG64(rng))
    scale = float(gen.uniform(0.8, 1.25))
    mins = pair.dense.positions.min(axis=0)
    maxs = pair.dense.positions.max(axis=0)
    sigma = 0.005 * float(np.linalg.norm(maxs - mins))
    noise = gen.normal(0.0, sigma, size=pair.dense.positions.shape) if sigma > 0 else np.zeros_like(pair.dense.positions)
    return augment_transform(pair, scale, noise.astype(np.float32))


def init_params(cfg: NetworkConfig, method: str, seed: RngSeed,
                zero_heads: bool = True) -> ParameterStore:
    """Fresh parameters for the selected attribute path plus the enhancer."""
    if method not in ("gdwai", "dlai"):
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.Generator(np.random.PCG64(seed))
    store = ParameterStore()
    if method == "dlai":
        init_dlai(store, cfg, rng, zero_head=zero_heads)
    init_aem(store, cfg, rng, zero_head=zero_heads)
    return store


def _pair_constants(pair: TrainingPair, cfg: NetworkConfig, method: str) -> dict:
    dense_pos = pair.dense.positions
    consts = {
        "target": pair.dense.attributes,
        "aem": aem_neighbor_data(dense_pos, cfg),
    }
    if method == "dlai":
        consts["sparse_attrs"] = pair.sparse.cloud.attributes
        consts["dlai"] = dlai_neighbor_data(pair.sparse.cloud.positions, dense_pos, cfg)
    else:
        gcfg = coarse_mod.GdwaiConfig(k1=cfg.k1, epsilon=cfg.epsilon)
        consts["coarse"] = coarse_mod.gdwai(dense_pos, pair.sparse, gcfg)
    return consts


def _pair_loss(tensors: dict[str, Tensor], consts: dict, cfg: NetworkConfig,
               method: str) -> Tensor:
    if method == "dlai":
        coarse_t = dlai_graph(tensors, Tensor(consts["sparse_attrs"]), *consts["dlai"], cfg)
    else:
        coarse_t = Tensor(consts["coarse"])
    pred = aem_graph(tensors, coarse_t, *consts["aem"], cfg)
    return mae_loss(pred, consts["target"])


def train(pairs, cfg: NetworkConfig, epochs: int = 400, batch: int | None = None,
          lr: float = 0.001, rng: RngSeed = 0, method: str = "gdwai",
          geometry=None, use_augment: bool = False,
          on_epoch: Callable[[int, LossReport], None] | None = None) -> ParameterStore:
    """Train the attribute networks on (sparse, dense ground truth) pairs.

    Stage 1 (geometry, Chamfer) only runs for a learnable geometry
    up-sampler; none ships here, so it is skipped. Stage 2 minimizes
    attribute MAE with Adam, batching gradients over `batch` pairs
    (default 40, or 28 for rates above 12). Deterministic for a fixed
    rng; per-epoch mean losses go to on_epoch.
    """
    pairs = list(pairs)
    if not pairs:
        raise EmptyDataset("no training pairs")
    if batch is None:
        batch = 40 if cfg.rate <= 12 else 28
    if geometry is not None and geometry.trainable_parameters() is not None:
        raise NotImplementedError("no learnable geometry up-sampler ships with this package")

    seq = np.random.SeedSequence(rng)
    init_seed, shuffle_seed = seq.spawn(2)
    store = init_params(cfg, method, init_seed)
    shuffle = np.random.Generator(np.random.PCG64(shuffle_seed))

    consts = None
    if not use_augment:
        consts = [_pair_constants(p, cfg, method) for p in pairs]

    for epoch in range(epochs):
        if use_augment:
            consts = [
                _pair_constants(augment(p, np.random.SeedSequence([rng, epoch, i])), cfg, method)
                for i, p in enumerate(pairs)
            ]
        order = shuffle.permutation(len(pairs))
        losses = []
        for lo in range(0, len(order), batch):
            chunk = order[lo:lo + batch]
            acc: dict[str, np.ndarray] = {}
            for pi in chunk:
                tensors = store.tensors()
                loss = _pair_loss(tensors, consts[pi], cfg, method)
                loss.backward()
                losses.append(float(loss.data))
                for name, t in tensors.items():
                    if t.grad is None:
                        continue
                    if name in acc:
                        acc[name] += t.grad
                    else:
                        acc[name] = t.grad
            scale = 1.0 / len(chunk)
            adam_step(store, {name: g * scale for name, g in acc.items()}, lr=lr)
        if on_epoch is not None:
            on_epoch(epoch, LossReport(attribute_mae=float(np.mean(losses)), chamfer=0.0))
    return store


# ---------------------------------------------------------------------------
# Gradient verification


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float((np.abs(analytic - numeric) / denom).max())


def _toy_cfg() -> NetworkConfig:
    return NetworkConfig(k1=2, k2=4, width=8, dlai_channels=(8, 8, 8, 8),
                         rdb_layers=3, rdb_growth=8, m=8, rate=2)


def _toy_case(network_id: str, seed: RngSeed):
    """(store, loss_fn) where loss_fn(tensors) -> scalar Tensor."""
    rng = np.random.Generator(np.random.PCG64(seed))
    store = ParameterStore()
    cfg = _toy_cfg()
    if network_id == "linear":
        init_linear(store, "lin", 4, 3, rng)
        x = rng.standard_normal((5, 4))
        w = rng.standard_normal((5, 3))

        def loss_fn(tensors):
            return ad.mean_all(ad.mul(linear(tensors, "lin", Tensor(x)), w))

    elif network_id == "mlp":
        init_mlp(store, "mlp", 5, (8, 6), rng)
        x = rng.standard_normal((4, 5))
        w = rng.standard_normal((4, 6))

        def loss_fn(tensors):
            return ad.mean_all(ad.mul(mlp_forward(tensors, Tensor(x), (8, 6)), w))

    elif network_id == "rdb":
        init_rdb(store, "rdb", 8, 3, 8, rng)
        x = rng.standard_normal((4, 8))
        w = rng.standard_normal((4, 8))

        def loss_fn(tensors):
            return ad.mean_all(ad.mul(rdb_forward(tensors, Tensor(x), 3, 8), w))

    elif network_id == "dlai":
        init_dlai(store, cfg, rng, zero_head=False)
        sparse_pos = rng.random((cfg.m, 3)).astype(np.float32)
        dense_pos = rng.random((cfg.m * cfg.rate, 3)).astype(np.float32)
        attrs = rng.random((cfg.m, 3))
        w = rng.standard_normal((cfg.m * cfg.rate, 3))
        nbr = dlai_neighbor_data(sparse_pos, dense_pos, cfg)
        nbr = (nbr[0], nbr[1], nbr[2].astype(np.float64))

        def loss_fn(tensors):
            return ad.mean_all(ad.mul(dlai_graph(tensors, Tensor(attrs), *nbr, cfg), w))

    elif network_id == "aem":
        init_aem(store, cfg, rng, zero_head=False)
        # zero-init biases meet the exact-zero self offsets in pos_diff at
        # relu's corner, where no finite-difference step is valid; move to
        # a generic parameter point first
        for name in store.names():
            store.assign(name, store[name]
                         + rng.uniform(-0.05, 0.05, store[name].shape))
        dense_pos = rng.random((cfg.m * cfg.rate, 3)).astype(np.float32)
        coarse = rng.random((cfg.m * cfg.rate, 3))
        w = rng.standard_normal((cfg.m * cfg.rate, 3))
        nbr_idx, pos_diff = aem_neighbor_data(dense_pos, cfg)
        pos_diff = pos_diff.astype(np.float64)

        def loss_fn(tensors):
            return ad.mean_all(ad.mul(
                aem_graph(tensors, Tensor(coarse), nbr_idx, pos_diff, cfg), w))

    else:
        raise ValueError(f"unknown network id {network_id!r}")
    return store, loss_fn


def gradient_check(network_id: str, rng: RngSeed = 0, eps: float = 1e-5) -> float:
    """Worst relative error between analytic and central-difference gradients.

    Runs the named network's toy problem in float64 with random (nonzero)
    parameters and perturbs every parameter element by +-eps.  The default
    step is small enough that it does not cross relu corners or flip pooling
    winners on the toy data, yet leaves ample float64 headroom.
    """
    store, loss_fn = _toy_case(network_id, rng)
    arrays = {name: store[name].astype(np.float64) for name in store.names()}

    tensors = {name: Tensor(a) for name, a in arrays.items()}
    loss_fn(tensors).backward()

    worst = 0.0
    for name, base in arrays.items():
        analytic = tensors[name].grad
        if analytic is None:
            analytic = np.zeros_like(base)
        numeric = np.zeros_like(base)
        flat = base.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            hi = float(loss_fn({n: Tensor(a) for n, a in arrays.items()}).data)
            flat[i] = keep - eps
            lo = float(loss_fn({n: Tensor(a) for n, a in arrays.items()}).data)
            flat[i] = keep
            num_flat[i] = (hi - lo) / (2 * eps)
        worst = max(worst, _rel_err(analytic, numeric))
    return worst
