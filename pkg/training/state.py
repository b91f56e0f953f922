from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from engine.errors import ContractError
from training.optimizer import SGDState

TRACE_KEYS = ("loss_total", "loss_class", "loss_sal")


@dataclass
class TrainState:
    """
    Everything that must survive a restart besides the weights. Best-metric
    fields only ever move in their improving direction.
    """

    epoch: int = 0
    iteration: int = 0
    best_mca: float = -np.inf
    best_mse: float = np.inf
    best_epoch: int = -1
    epochs_since_mca: int = 0
    epochs_since_mse: int = 0
    optimizer: SGDState = field(default_factory=SGDState)
    traces: Dict[str, List[float]] = field(default_factory=lambda: {k: [] for k in TRACE_KEYS})
    # model entries left at their initial values by a partial load
    missing: List[str] = field(default_factory=list)

    def advance(self, steps=1):
        if steps < 1:
            raise ContractError("iteration counter must strictly increase")
        self.iteration += steps

    def observe(self, val_mca, val_mse, tolerance=1e-6):
        """
        Update best metrics and stagnation counters after an epoch; returns
        which metrics improved.
        """
        improved_mca = val_mca > self.best_mca + tolerance
        improved_mse = val_mse < self.best_mse - tolerance
        if improved_mca:
            self.best_mca = float(val_mca)
            self.epochs_since_mca = 0
        else:
            self.epochs_since_mca += 1
        if improved_mse:
            self.best_mse = float(val_mse)
            self.epochs_since_mse = 0
        else:
            self.epochs_since_mse += 1
        return improved_mca, improved_mse

    def stagnant(self, patience):
        return self.epochs_since_mca >= patience and self.epochs_since_mse >= patience

    def scalars(self) -> Dict[str, float]:
        return {
            "epoch": float(self.epoch),
            "iteration": float(self.iteration),
            "best_mca": float(self.best_mca),
            "best_mse": float(self.best_mse),
            "best_epoch": float(self.best_epoch),
            "epochs_since_mca": float(self.epochs_since_mca),
            "epochs_since_mse": float(self.epochs_since_mse),
        }

    def load_scalars(self, values: Dict[str, float]):
        self.epoch = int(values["epoch"])
        self.iteration = int(values["iteration"])
        self.best_mca = float(values["best_mca"])
        self.best_mse = float(values["best_mse"])
        self.best_epoch = int(values["best_epoch"])
        self.epochs_since_mca = int(values["epochs_since_mca"])
        self.epochs_since_mse = int(values["epochs_since_mse"])
