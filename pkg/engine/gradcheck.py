"""Central finite-difference checks for analytic gradients."""

from typing import Callable, Dict, Iterable

import numpy as np

from engine.tensor import Graph, Tensor

PERTURBATION = 1e-5


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||), 0 when both vanish."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def numerical_gradient(loss_fn: Callable[[], Tensor], tensor: Tensor, eps: float = PERTURBATION) -> np.ndarray:
    """Perturb each element of ``tensor`` in place and difference ``loss_fn()``."""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    out = grad.reshape(-1)
    for idx in range(flat.size):
        original = flat[idx]
        flat[idx] = original + eps
        plus = loss_fn().item()
        flat[idx] = original - eps
        minus = loss_fn().item()
        flat[idx] = original
        out[idx] = (plus - minus) / (2.0 * eps)
    return grad


def analytic_gradients(loss_fn: Callable[[], Tensor], tensors: Iterable[Tensor]) -> Dict[int, np.ndarray]:
    tensors = list(tensors)
    for t in tensors:
        t.zero_grad()
    with Graph() as graph:
        loss = loss_fn()
    graph.backward(loss)
    return {
        id(t): (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for t in tensors
    }


def gradient_check(
    loss_fn: Callable[[], Tensor], named_tensors: Dict[str, Tensor], eps: float = PERTURBATION
) -> Dict[str, float]:
    """
    Relative error between backprop and central differences for every
    named tensor. ``loss_fn`` must be a pure function of the tensors' data
    (batchnorm running statistics are the caller's concern).
    """
    analytic = analytic_gradients(loss_fn, named_tensors.values())
    return {
        name: relative_error(analytic[id(t)], numerical_gradient(loss_fn, t, eps))
        for name, t in named_tensors.items()
    }
