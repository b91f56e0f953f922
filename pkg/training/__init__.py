"""
Training: loss terms, SGD with momentum, checkpoints, the multi-loss
trainer and the alpha sweep.
"""

from training.checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from training.losses import LossTerms, cross_entropy, mse_saliency, multi_loss
from training.optimizer import SGDState, lr_at, sgd_step
from training.state import TrainState
from training.sweep import SweepPoint, parse_alphas, sweep_alpha
from training.trainer import (
    EpochResult,
    MultiLossTrainer,
    TrainConfig,
    TrainResult,
    evaluate_classification,
    predict_maps,
)

__all__ = [
    "EpochResult",
    "LossTerms",
    "MultiLossTrainer",
    "SGDState",
    "SweepPoint",
    "TrainConfig",
    "TrainResult",
    "TrainState",
    "cross_entropy",
    "evaluate_classification",
    "load_checkpoint",
    "lr_at",
    "mse_saliency",
    "multi_loss",
    "parse_alphas",
    "predict_maps",
    "read_checkpoint",
    "save_checkpoint",
    "sgd_step",
    "sweep_alpha",
]
