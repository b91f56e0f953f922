"""
Training objective: classification cross-entropy, saliency MSE and their
combination L = alpha * L_C + L_S.
"""

from dataclasses import dataclass

import numpy as np

from engine import ops
from engine.errors import ContractError, ShapeError
from engine.tensor import Tensor
from networks.saliency_map import SaliencyMap


@dataclass
class LossTerms:
    total: Tensor
    classification: Tensor
    saliency: Tensor

    def values(self):
        return {
            "loss_total": self.total.item(),
            "loss_class": self.classification.item(),
            "loss_sal": self.saliency.item(),
        }

    def is_finite(self):
        return all(np.isfinite(v) for v in self.values().values())


def _as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    if isinstance(value, SaliencyMap):
        return Tensor(value.values)
    return Tensor(value)


def cross_entropy(y, t, n=None) -> Tensor:
    """
    -log(y[t]) with y clamped at 1e-12; ``y`` may be one probability row or
    a batch [N, n], in which case the mean over rows is returned.
    """
    probs = _as_tensor(y)
    if probs.ndim == 1:
        probs = ops.reshape(probs, (1, probs.shape[0]))
    if n is not None and probs.shape[1] != n:
        raise ContractError(f"probability rows have {probs.shape[1]} entries, expected {n}")
    return ops.cross_entropy(probs, np.atleast_1d(np.asarray(t, dtype=np.int64)))


def mse_saliency(Y, T) -> Tensor:
    prediction = _as_tensor(Y)
    target = _as_tensor(T)
    if prediction.shape != target.shape:
        raise ContractError(f"saliency map shapes differ: {prediction.shape} vs {target.shape}")
    try:
        return ops.mse(prediction, target)
    except ShapeError as exc:
        raise ContractError(str(exc)) from exc


def multi_loss(y, Y, t, T, alpha) -> LossTerms:
    if alpha < 0:
        raise ContractError(f"alpha must be >= 0, got {alpha}")
    classification = cross_entropy(y, t)
    saliency = mse_saliency(Y, T)
    total = ops.add(ops.scale(classification, float(alpha)), saliency)
    return LossTerms(total=total, classification=classification, saliency=saliency)
