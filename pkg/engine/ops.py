"""
Differentiable operations on ``Tensor``.

Every op computes its forward result with numpy and, when a graph is
active and any input is tracked, records a closure that maps the upstream
gradient to one gradient per input (None for inputs without gradient).
"""

from typing import Sequence

import numpy as np

from engine.errors import ContractError, DegenerateStatisticsError, ShapeError
from engine.interpolate import interpolation_matrix
from engine.tensor import Tensor, make_output

LOG_CLAMP = 1e-12
BN_EPSILON = 1e-5
BN_MOMENTUM = 0.1


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# --- elementwise and reductions -------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_output("add", (a, b), a.data + b.data, backward_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def backward_fn(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return make_output("sub", (a, b), a.data - b.data, backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def backward_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_output("mul", (a, b), a.data * b.data, backward_fn)


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)

    def backward_fn(g):
        return (g * factor,)

    return make_output("scale", (a,), a.data * factor, backward_fn)


def sum(a: Tensor) -> Tensor:
    def backward_fn(g):
        return (np.full(a.shape, float(g)),)

    return make_output("sum", (a,), np.sum(a.data), backward_fn)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}") from exc

    def backward_fn(g):
        return (g.reshape(a.shape),)

    return make_output("reshape", (a,), out.copy(), backward_fn)


def flatten(a: Tensor) -> Tensor:
    return reshape(a, (a.shape[0], -1))


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    reference = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(reference) or any(
            t.shape[d] != reference[d] for d in range(len(reference)) if d != axis
        ):
            raise ShapeError(f"concat along axis {axis}: {reference} vs {t.shape}")
    extents = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + extents)

    def backward_fn(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    return make_output(
        "concat", tensors, np.concatenate([t.data for t in tensors], axis=axis), backward_fn
    )


# --- activations and dense layers ---------------------------------------------


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward_fn(g):
        return (g * mask,)

    return make_output("relu", (x,), np.where(mask, x.data, 0.0), backward_fn)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    if x.ndim != 2 or weight.ndim != 2 or bias.ndim != 1:
        raise ShapeError(
            f"linear expects x[N,D], weight[M,D], bias[M]; got {x.shape}, {weight.shape}, {bias.shape}"
        )
    if x.shape[1] != weight.shape[1] or weight.shape[0] != bias.shape[0]:
        raise ShapeError(
            f"linear shape mismatch: x{x.shape} weight{weight.shape} bias{bias.shape}"
        )

    def backward_fn(g):
        return g @ weight.data, g.T @ x.data, g.sum(axis=0)

    return make_output("linear", (x, weight, bias), x.data @ weight.data.T + bias.data, backward_fn)


def softmax(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"softmax expects [N,n], got {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)

    def backward_fn(g):
        return (probs * (g - np.sum(g * probs, axis=1, keepdims=True)),)

    return make_output("softmax", (x,), probs, backward_fn)


# --- losses --------------------------------------------------------------------


def cross_entropy(probs: Tensor, targets) -> Tensor:
    """Mean over rows of -log(max(p[row, target], 1e-12))."""
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if probs.ndim != 2 or probs.shape[0] != targets.shape[0]:
        raise ShapeError(f"cross_entropy: probs {probs.shape} vs {targets.shape[0]} targets")
    n_classes = probs.shape[1]
    if np.any(targets < 0) or np.any(targets >= n_classes):
        raise ContractError(f"class index out of range [0, {n_classes}): {targets.tolist()}")

    rows = np.arange(targets.shape[0])
    picked = probs.data[rows, targets]
    clamped = np.maximum(picked, LOG_CLAMP)
    value = -np.mean(np.log(clamped))

    def backward_fn(g):
        grad = np.zeros_like(probs.data)
        live = picked > LOG_CLAMP
        grad[rows[live], targets[live]] = -float(g) / (targets.shape[0] * picked[live])
        return (grad,)

    return make_output("cross_entropy", (probs,), value, backward_fn)


def mse(prediction: Tensor, target: Tensor) -> Tensor:
    if prediction.shape != target.shape:
        raise ShapeError(f"mse shape mismatch: {prediction.shape} vs {target.shape}")
    diff = prediction.data - target.data
    n = diff.size

    def backward_fn(g):
        grad = 2.0 * float(g) * diff / n
        return grad, -grad

    return make_output("mse", (prediction, target), np.mean(diff * diff), backward_fn)


# --- convolution, pooling, normalization, upsampling --------------------------


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """
    Cross-correlation of x[N,C,H,W] with kernel[K,C,kh,kw].

    Accumulates one tensordot per kernel offset, so memory stays at the
    size of the output instead of an im2col buffer.
    """
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and kernel, got {x.shape} and {kernel.shape}")
    n, c, h, w = x.shape
    k, kc, kh, kw = kernel.shape
    if kc != c:
        raise ShapeError(f"conv2d: kernel has {kc} input channels, input has {c}")
    if bias.shape != (k,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} does not match {k} kernels")
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d: stride must be >= 1 and padding >= 0, got {stride}, {padding}")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ShapeError(
            f"conv2d: kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}"
        )

    out_h = (h + 2 * padding - kh) // stride + 1
    out_w = (w + 2 * padding - kw) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data

    def window(array, i, j):
        return array[:, :, i : i + stride * (out_h - 1) + 1 : stride, j : j + stride * (out_w - 1) + 1 : stride]

    out = np.zeros((n, k, out_h, out_w))
    for i in range(kh):
        for j in range(kw):
            out += np.tensordot(window(xp, i, j), kernel.data[:, :, i, j], axes=([1], [1])).transpose(0, 3, 1, 2)
    out += bias.data.reshape(1, k, 1, 1)

    def backward_fn(g):
        gx = np.zeros_like(xp)
        gk = np.zeros_like(kernel.data)
        for i in range(kh):
            for j in range(kw):
                gk[:, :, i, j] = np.tensordot(g, window(xp, i, j), axes=([0, 2, 3], [0, 2, 3]))
                window(gx, i, j)[...] += np.tensordot(g, kernel.data[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
        if padding:
            gx = gx[:, :, padding : padding + h, padding : padding + w]
        return gx, gk, g.sum(axis=(0, 2, 3))

    return make_output("conv2d", (x, kernel, bias), out, backward_fn)


def pooled_extent(size: int, window: int, stride: int, ceil_mode: bool = False) -> int:
    if size < window:
        raise ShapeError(f"pool window {window} larger than spatial extent {size}")
    if ceil_mode:
        extent = -(-(size - window) // stride) + 1
        # the last window must start inside the input
        if (extent - 1) * stride >= size:
            extent -= 1
        return extent
    return (size - window) // stride + 1


def maxpool2d(x: Tensor, window: int, stride: int, ceil_mode: bool = False):
    """
    Max pooling over x[N,C,H,W]. Returns ``(output, indices)`` where indices
    hold the flat ``row * W + col`` position of each maximum; ties go to the
    first element in row-major order.
    """
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d expects [N,C,H,W], got {x.shape}")
    if window < 1 or stride < 1:
        raise ShapeError(f"maxpool2d: window and stride must be positive, got {window}, {stride}")
    n, c, h, w = x.shape
    out_h = pooled_extent(h, window, stride, ceil_mode)
    out_w = pooled_extent(w, window, stride, ceil_mode)

    pad_h = max(0, (out_h - 1) * stride + window - h)
    pad_w = max(0, (out_w - 1) * stride + window - w)
    xp = x.data
    if pad_h or pad_w:
        xp = np.pad(xp, ((0, 0), (0, 0), (0, pad_h), (0, pad_w)), constant_values=-np.inf)

    windows = np.lib.stride_tricks.sliding_window_view(xp, (window, window), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride][:, :, :out_h, :out_w]
    flat = windows.reshape(n, c, out_h, out_w, window * window)
    arg = np.argmax(flat, axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    rows = np.arange(out_h).reshape(1, 1, out_h, 1) * stride + arg // window
    cols = np.arange(out_w).reshape(1, 1, 1, out_w) * stride + arg % window
    indices = rows * w + cols

    def backward_fn(g):
        plane = h * w
        offsets = (np.arange(n * c) * plane).reshape(n, c, 1, 1)
        gx = np.zeros(n * c * plane)
        np.add.at(gx, (indices + offsets).ravel(), g.ravel())
        return (gx.reshape(n, c, h, w),)

    return make_output("maxpool2d", (x,), np.ascontiguousarray(out), backward_fn), indices


def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    mode: str = "train",
    epsilon: float = BN_EPSILON,
    momentum: float = BN_MOMENTUM,
) -> Tensor:
    """
    Per-channel batch normalization of x[N,C,H,W].

    In train mode the batch mean and (population) variance normalize the
    input and the running statistics are updated in place:
    ``running = (1 - momentum) * running + momentum * batch`` with the
    unbiased batch variance. Eval mode normalizes with the running stats.
    """
    if x.ndim != 4:
        raise ShapeError(f"batchnorm2d expects [N,C,H,W], got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batchnorm2d: gamma/beta must have shape ({c},)")
    if mode not in ("train", "eval"):
        raise ContractError(f"batchnorm2d mode must be 'train' or 'eval', got {mode!r}")

    axes = (0, 2, 3)
    m = x.shape[0] * x.shape[2] * x.shape[3]
    g_shape = (1, c, 1, 1)

    if mode == "train":
        if m < 2:
            raise DegenerateStatisticsError(
                f"batchnorm2d in train mode needs >= 2 elements per channel, got {m}"
            )
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * m / (m - 1)
    else:
        mu = running_mean.copy()
        var = running_var.copy()

    inv_std = 1.0 / np.sqrt(var + epsilon)
    xhat = (x.data - mu.reshape(g_shape)) * inv_std.reshape(g_shape)
    out = xhat * gamma.data.reshape(g_shape) + beta.data.reshape(g_shape)

    def backward_fn(g):
        dgamma = np.sum(g * xhat, axis=axes)
        dbeta = np.sum(g, axis=axes)
        dxhat = g * gamma.data.reshape(g_shape)
        if mode == "eval":
            return dxhat * inv_std.reshape(g_shape), dgamma, dbeta
        dx = (
            inv_std.reshape(g_shape)
            / m
            * (
                m * dxhat
                - dxhat.sum(axis=axes).reshape(g_shape)
                - xhat * np.sum(dxhat * xhat, axis=axes).reshape(g_shape)
            )
        )
        return dx, dgamma, dbeta

    return make_output("batchnorm2d", (x, gamma, beta), out, backward_fn)


def bilinear_upsample(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Align-corners bilinear resize of x[N,C,h,w] to [N,C,out_h,out_w]."""
    if x.ndim != 4:
        raise ShapeError(f"bilinear_upsample expects [N,C,h,w], got {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"bilinear_upsample target must be positive, got {out_h}x{out_w}")
    rows = interpolation_matrix(x.shape[2], out_h)
    cols = interpolation_matrix(x.shape[3], out_w)

    def backward_fn(g):
        return (np.matmul(rows.T, np.matmul(g, cols)),)

    return make_output("bilinear_upsample", (x,), np.matmul(rows, np.matmul(x.data, cols.T)), backward_fn)
