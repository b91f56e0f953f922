"""Progressive de-blur schedule shown to observers while fixations are recorded."""

import math

import numpy as np
from scipy import ndimage

from engine.errors import ContractError

INITIAL_VARIANCE = 10.0
VARIANCE_STEP = 1.0
INTERVAL_S = 0.5


def blur_schedule(initial_variance=INITIAL_VARIANCE, step=VARIANCE_STEP, interval_s=INTERVAL_S):
    """
    ``[(time_s, variance), ...]`` from ``initial_variance`` down by ``step``
    every ``interval_s`` seconds, ending at variance 0 (unblurred).
    """
    if initial_variance <= 0 or step <= 0 or interval_s <= 0:
        raise ContractError("initial_variance, step and interval_s must be positive")
    steps = math.ceil(initial_variance / step - 1e-12)
    schedule = [(k * interval_s, max(initial_variance - k * step, 0.0)) for k in range(steps + 1)]
    schedule[-1] = (steps * interval_s, 0.0)
    return schedule


def apply_gaussian_blur(image: np.ndarray, variance: float) -> np.ndarray:
    """
    Separable Gaussian blur over the two spatial axes of an [H,W] or
    [C,H,W] image, kernel truncated at 3 sigma, reflective borders.
    Variance 0 returns an unchanged copy.
    """
    image = np.asarray(image, dtype=np.float64)
    if variance < 0:
        raise ContractError(f"variance must be >= 0, got {variance}")
    if variance == 0:
        return image.copy()
    sigma = math.sqrt(variance)
    sigmas = (sigma, sigma) if image.ndim == 2 else (0.0,) * (image.ndim - 2) + (sigma, sigma)
    return ndimage.gaussian_filter(image, sigma=sigmas, mode="reflect", truncate=3.0)


def blur_sequence(image: np.ndarray, schedule=None):
    """The images an observer would see at each schedule step."""
    schedule = blur_schedule() if schedule is None else schedule
    return [(t, v, apply_gaussian_blur(image, v)) for t, v in schedule]
