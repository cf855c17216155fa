"""Minimal autodiff engine, attribute networks, training, checkpoints."""

from .autodiff import Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .nets import (
    LossReport,
    NetworkConfig,
    ParameterStore,
    aem_forward,
    dlai_forward,
    init_aem,
    init_dlai,
    mlp_forward,
    rdb_forward,
)
from .training import (
    adam_step,
    augment,
    chamfer_loss,
    gradient_check,
    init_params,
    mae_loss,
    train,
)

__all__ = [
    "Tensor",
    "LossReport",
    "NetworkConfig",
    "ParameterStore",
    "aem_forward",
    "dlai_forward",
    "mlp_forward",
    "rdb_forward",
    "init_aem",
    "init_dlai",
    "init_params",
    "mae_loss",
    "chamfer_loss",
    "adam_step",
    "augment",
    "train",
    "gradient_check",
    "load_checkpoint",
    "save_checkpoint",
]
