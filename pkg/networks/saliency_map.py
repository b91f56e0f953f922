from dataclasses import dataclass

import numpy as np

from engine.errors import ShapeError


@dataclass
class SaliencyMap:
    """Single-channel h x w map: a prediction Y or a ground-truth heatmap T."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or 0 in self.values.shape:
            raise ShapeError(f"saliency map must be a non-empty 2-D array, got {self.values.shape}")

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape


def normalize_map(saliency: SaliencyMap) -> SaliencyMap:
    """Min-max normalize to [0, 1]; a constant map becomes all zeros."""
    values = saliency.values
    lo = values.min()
    span = values.max() - lo
    if span == 0.0:
        return SaliencyMap(np.zeros_like(values))
    return SaliencyMap((values - lo) / span)
