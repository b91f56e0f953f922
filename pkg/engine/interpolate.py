import numpy as np

from engine.errors import ShapeError


def interpolation_matrix(in_size: int, out_size: int) -> np.ndarray:
    """
    Row-stochastic (out_size, in_size) matrix of 1-D linear interpolation
    weights under the align-corners convention: target index ``i`` samples
    source coordinate ``i * (in_size - 1) / (out_size - 1)``.
    """
    if in_size < 1:
        raise ShapeError(f"input extent must be >= 1, got {in_size}")
    if out_size < 1:
        raise ShapeError(f"output extent must be >= 1, got {out_size}")

    matrix = np.zeros((out_size, in_size), dtype=np.float64)
    if in_size == 1:
        matrix[:, 0] = 1.0
        return matrix
    if out_size == 1:
        matrix[0, 0] = 1.0
        return matrix

    for i in range(out_size):
        src = i * (in_size - 1) / (out_size - 1)
        lo = min(int(np.floor(src)), in_size - 2)
        frac = src - lo
        matrix[i, lo] += 1.0 - frac
        matrix[i, lo + 1] += frac
    return matrix


def resize_bilinear(array: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize the last two axes of ``array`` with align-corners bilinear weights."""
    array = np.asarray(array, dtype=np.float64)
    if array.ndim < 2:
        raise ShapeError(f"resize needs at least 2 axes, got shape {array.shape}")
    h, w = array.shape[-2:]
    rows = interpolation_matrix(h, out_h)
    cols = interpolation_matrix(w, out_w)
    return np.matmul(rows, np.matmul(array, cols.T))
