from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from engine.errors import ContractError


def lr_at(l, i, decay_constant=1e-5) -> float:
    """Inverse-time decay: l / (1 + decay_constant * i)."""
    if i < 0:
        raise ContractError(f"iteration must be >= 0, got {i}")
    return float(l) / (1.0 + float(decay_constant) * float(i))


@dataclass
class SGDState:
    """Momentum buffers keyed by parameter name."""

    velocity: Dict[str, np.ndarray] = field(default_factory=dict)

    def buffer(self, name, like):
        v = self.velocity.get(name)
        if v is None:
            v = self.velocity[name] = np.zeros_like(like)
        elif v.shape != like.shape:
            raise ContractError(f"momentum buffer {name}: {v.shape} != parameter {like.shape}")
        return v


def sgd_step(params, grads, state: SGDState, lr, momentum=0.9, weight_decay=0.0, no_decay=()):
    """
    Classical momentum SGD with L2 weight decay, in place:
    v <- momentum * v + (g + weight_decay * p);  p <- p - lr * v.

    ``params`` maps names to Tensors, ``grads`` names to arrays (a missing
    gradient counts as zero), ``lr`` is a float or a per-name mapping.
    """
    for name, tensor in params.items():
        p = tensor.data
        g = grads.get(name)
        step = np.zeros_like(p) if g is None else np.asarray(g, dtype=np.float64)
        if step.shape != p.shape:
            raise ContractError(f"gradient for {name}: {step.shape} != parameter {p.shape}")
        if weight_decay and name not in no_decay:
            step = step + weight_decay * p
        v = state.buffer(name, p)
        v *= momentum
        v += step
        rate = lr[name] if isinstance(lr, dict) else lr
        p -= rate * v
    return params
