from .chain import (
    AnnealSchedule,
    CodeConfig,
    coded_features,
    hard_binarize,
    loss_and_gradients,
    soft_binarize,
)
from .inference import estimate_depth_map_cnn, predict_patch_scales
from .network import NetworkConfig, forward, init_params
from .training import TrainConfig, TrainResult, evaluate, load_model, train

__all__ = [
    "AnnealSchedule",
    "CodeConfig",
    "NetworkConfig",
    "TrainConfig",
    "TrainResult",
    "coded_features",
    "estimate_depth_map_cnn",
    "evaluate",
    "forward",
    "hard_binarize",
    "init_params",
    "load_model",
    "loss_and_gradients",
    "predict_patch_scales",
    "soft_binarize",
    "train",
]
