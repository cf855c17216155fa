"""End-to-end cloud up-sampling: partition, per-patch work, regroup.

Each patch is processed independently (geometry up-sample, coarse color
interpolation, optional learned enhancement), so patches fan out across a
thread pool. Per-patch random seeds derive from the pipeline seed and the
patch's position in the partition, making the output independent of the
thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import coarse as coarse_mod
from . import core, partition
from .core import ColoredPointCloud, RngSeed
from .errors import MissingCheckpoint
from .neural.nets import NetworkConfig, ParameterStore, aem_forward, dlai_forward


@dataclass
class PipelineConfig:
    """Everything one up-sampling run needs besides the cloud itself.

    method selects the coarse color path ("gdwai" or "dlai"); enhance
    turns the learned refinement pass on. threads caps patch-level
    parallelism (1 = serial).
    """

    rate: int = 4
    method: str = "gdwai"
    enhance: bool = False
    m: int = 256
    c: float = 3.0
    k1: int = 2
    k2: int = 32
    epsilon: float = 1e-8
    fps_start: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.method not in ("gdwai", "dlai"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")

    def partition_config(self) -> partition.PartitionConfig:
        return partition.PartitionConfig(m=self.m, c=self.c, rate=self.rate,
                                         fps_start=self.fps_start)

    def network_config(self, width: int = 64) -> NetworkConfig:
        return NetworkConfig(k1=self.k1, k2=self.k2, width=width, m=self.m,
                             rate=self.rate, epsilon=self.epsilon)


def _upsample_patch(patch: partition.Patch, cfg: PipelineConfig,
                    geometry: coarse_mod.GeometryUpsampler,
                    store: ParameterStore | None, net_cfg: NetworkConfig | None,
                    seed) -> ColoredPointCloud:
    dense_pos = geometry.upsample(patch.cloud.positions, cfg.rate, seed)
    if cfg.method == "dlai":
        attrs = dlai_forward(store, patch, dense_pos, net_cfg, clamp=True)
    else:
        gcfg = coarse_mod.GdwaiConfig(k1=cfg.k1, epsilon=cfg.epsilon)
        attrs = coarse_mod.gdwai(dense_pos, patch, gcfg)
    if cfg.enhance:
        attrs = aem_forward(store, attrs, dense_pos, net_cfg, clamp=True)
    return ColoredPointCloud(dense_pos, attrs)


def upsample_cloud(cloud: ColoredPointCloud, cfg: PipelineConfig,
                   geometry: coarse_mod.GeometryUpsampler | None = None,
                   store: ParameterStore | None = None,
                   net_cfg: NetworkConfig | None = None,
                   seed: RngSeed = 0) -> ColoredPointCloud:
    """Up-sample a whole cloud to exactly cloud.n * cfg.rate points.

    geometry defaults to the midpoint-jitter baseline. store carries the
    trained parameters and is required when method="dlai" or enhance is
    on; net_cfg must then describe the same network the store was built
    for (upsample's callers get both from one checkpoint).
    """
    if cfg.method == "dlai" or cfg.enhance:
        if store is None:
            raise MissingCheckpoint("the selected method needs trained parameters")
        if net_cfg is None:
            net_cfg = cfg.network_config()
    if geometry is None:
        geometry = coarse_mod.BaselineGeometryUpsampler()
    patches = partition.partition(cloud, cfg.partition_config())
    seeds = [np.random.SeedSequence([int(seed), i]) for i in range(len(patches))]

    def work(i: int) -> ColoredPointCloud:
        return _upsample_patch(patches[i], cfg, geometry, store, net_cfg, seeds[i])

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            up = list(pool.map(work, range(len(patches))))
    else:
        up = [work(i) for i in range(len(patches))]
    return partition.regroup(up, cloud.n * cfg.rate, cfg.fps_start)
