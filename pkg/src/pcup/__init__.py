"""Patch-based up-sampling of large colored point clouds.

The pipeline divides a cloud into overlapped fixed-size patches, up-samples
each patch's geometry, interpolates colors onto the new points (distance
weights or a learned network), optionally refines them with a residual
enhancement network, and regroups everything to exactly n*R points.
"""

from . import metrics, plots
from .coarse import (
    BaselineGeometryUpsampler,
    GdwaiConfig,
    GeometryUpsampler,
    GroundTruthGeometryUpsampler,
    gdwai,
    upsample_geometry_baseline,
)
from .core import (
    ColoredPointCloud,
    NeighborSet,
    SpatialIndex,
    build_index,
    bounding_box,
    downsample_count,
    downsample_indices,
    farthest_point_sample,
    knn,
    knn_batch,
    random_downsample,
)
from .errors import PcupError
from .io import (
    DatasetManifest,
    ManifestEntry,
    PlyHeaderInfo,
    build_sparse_versions,
    load_manifest,
    read_ply,
    read_ply_header,
    save_manifest,
    write_ply,
)
from .metrics import MetricReport, evaluate_pair
from .neural import (
    NetworkConfig,
    ParameterStore,
    aem_forward,
    dlai_forward,
    gradient_check,
    load_checkpoint,
    save_checkpoint,
    train,
)
# The partition *function* stays in its module (pcup.partition.partition);
# re-exporting it here would shadow the submodule name.
from .partition import (
    PartitionConfig,
    Patch,
    TrainingPair,
    extract_training_pair,
    patch_count,
    regroup,
)
from .pipeline import PipelineConfig, upsample_cloud

__version__ = "0.1.0"

__all__ = [
    "BaselineGeometryUpsampler",
    "ColoredPointCloud",
    "DatasetManifest",
    "GdwaiConfig",
    "GeometryUpsampler",
    "GroundTruthGeometryUpsampler",
    "ManifestEntry",
    "MetricReport",
    "NeighborSet",
    "NetworkConfig",
    "ParameterStore",
    "PartitionConfig",
    "Patch",
    "PcupError",
    "PipelineConfig",
    "PlyHeaderInfo",
    "SpatialIndex",
    "TrainingPair",
    "aem_forward",
    "bounding_box",
    "build_index",
    "build_sparse_versions",
    "dlai_forward",
    "downsample_count",
    "downsample_indices",
    "evaluate_pair",
    "extract_training_pair",
    "farthest_point_sample",
    "gdwai",
    "gradient_check",
    "knn",
    "knn_batch",
    "load_checkpoint",
    "load_manifest",
    "metrics",
    "patch_count",
    "plots",
    "random_downsample",
    "read_ply",
    "read_ply_header",
    "regroup",
    "save_checkpoint",
    "save_manifest",
    "train",
    "upsample_cloud",
    "upsample_geometry_baseline",
    "write_ply",
]
