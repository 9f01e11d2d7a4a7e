"""
Dense layer kernels with exact backward passes.

Activations are arrays of shape (..., T, C, F): time, sensor channel and
feature axes last, any number of leading batch axes. A single sample is
just the (T, C, F) case. Every kernel works in whatever floating dtype it
is given, so the same code runs the float32 product path and the float64
gradient-check path.

Class layout for the two-way output is index 0 = normal, index 1 = defect.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NORMAL, DEFECT = 0, 1


def _check_tensor(x: np.ndarray, name: str = "input") -> tuple[int, int, int]:
    if x.ndim < 3:
        raise ValueError(f"{name} must have at least 3 axes (T, C, F), got shape {x.shape}")
    return x.shape[-3], x.shape[-2], x.shape[-1]


# --------------------------------------------------------------------------
# circular channel padding
# --------------------------------------------------------------------------

def circular_pad_channels(x: np.ndarray, width: int = 1) -> np.ndarray:
    """Wrap the channel axis around the sensor ring.

    The last ``width`` channels are copied above channel 0 and the first
    ``width`` channels below channel C-1, so (T, C, F) becomes
    (T, C + 2*width, F).
    """
    _, C, _ = _check_tensor(x)
    if C < 2:
        raise ValueError(f"circular padding needs at least 2 channels, got {C}")
    if not 1 <= width <= C:
        raise ValueError(f"padding width must be in [1, {C}], got {width}")
    return np.concatenate([x[..., C - width:, :], x, x[..., :width, :]], axis=-2)


def circular_pad_channels_backward(grad: np.ndarray, width: int = 1) -> np.ndarray:
    C = grad.shape[-2] - 2 * width
    dx = grad[..., width:width + C, :].copy()
    dx[..., C - width:, :] += grad[..., :width, :]
    dx[..., :width, :] += grad[..., width + C:, :]
    return dx


# --------------------------------------------------------------------------
# valid 2-D convolution, stride 1
# --------------------------------------------------------------------------

def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    # (..., To, Co, F, kh, kw) -> (..., To, Co, kh*kw*F) in (i, j, f) order
    win = sliding_window_view(x, (kh, kw), axis=(-3, -2))
    win = np.moveaxis(win, -3, -1)
    return win.reshape(win.shape[:-3] + (kh * kw * x.shape[-1],))


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """out[t, c, o] = b[o] + sum_{i,j,f} x[t+i, c+j, f] * w[i, j, f, o]

    ``w`` is indexed [kh][kw][c_in][c_out]. No zero padding, stride 1.
    """
    T, C, F = _check_tensor(x)
    if w.ndim != 4:
        raise ValueError(f"conv weights must be 4-D (kh, kw, c_in, c_out), got {w.shape}")
    kh, kw, c_in, c_out = w.shape
    if F != c_in:
        raise ValueError(f"input has {F} features, kernel expects {c_in}")
    if T < kh or C < kw:
        raise ValueError(f"input ({T}, {C}) smaller than kernel ({kh}, {kw})")
    if b.shape != (c_out,):
        raise ValueError(f"bias shape {b.shape} does not match c_out={c_out}")
    cols = _im2col(x, kh, kw)
    K = kh * kw * c_in
    # 2-D operands so BLAS sees one large GEMM instead of a stack of small ones
    out = cols.reshape(-1, K) @ w.reshape(K, c_out) + b
    return out.reshape(cols.shape[:-1] + (c_out,))


def conv2d_backward(
    x: np.ndarray, w: np.ndarray, grad: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of sum(grad * conv2d_forward(x, w, b)) w.r.t. x, w and b."""
    T, C, F = _check_tensor(x)
    kh, kw, c_in, c_out = w.shape
    To, Co = T - kh + 1, C - kw + 1
    expected = x.shape[:-3] + (To, Co, c_out)
    if grad.shape != expected:
        raise ValueError(f"upstream gradient shape {grad.shape}, expected {expected}")

    cols = _im2col(x, kh, kw)
    K = kh * kw * c_in
    g2 = grad.reshape(-1, c_out)
    dw = (cols.reshape(-1, K).T @ g2).reshape(w.shape)
    db = g2.sum(axis=0)

    dcols = (g2 @ w.reshape(K, c_out).T).reshape(grad.shape[:-1] + (kh, kw, c_in))
    dx = np.zeros_like(x, dtype=np.result_type(x, w, grad))
    for i in range(kh):
        for j in range(kw):
            dx[..., i:i + To, j:j + Co, :] += dcols[..., i, j, :]
    return dx, dw, db


# --------------------------------------------------------------------------
# max pooling with rectangular (stripe) kernels
# --------------------------------------------------------------------------

class PoolIndex(NamedTuple):
    """Argmax map from a pooling forward pass.

    ``arg`` holds, for every output cell, the row-major offset i*pw + j of the
    winning element inside its ph x pw block.
    """
    arg: np.ndarray
    input_shape: tuple[int, ...]
    ph: int
    pw: int


def maxpool_forward(x: np.ndarray, ph: int, pw: int) -> tuple[np.ndarray, PoolIndex]:
    """Non-overlapping max pooling, stride = kernel, remainder rows/cols dropped.

    Ties go to the smallest offset inside the block.
    """
    T, C, F = _check_tensor(x)
    if ph < 1 or pw < 1:
        raise ValueError("pool dims must be >= 1")
    if T < ph or C < pw:
        raise ValueError(f"input ({T}, {C}) smaller than pool ({ph}, {pw})")
    To, Co = T // ph, C // pw
    out = x[..., 0:To * ph:ph, 0:Co * pw:pw, :]
    arg = np.zeros(out.shape, dtype=np.uint8)
    for o in range(1, ph * pw):
        i, j = divmod(o, pw)
        cand = x[..., i:To * ph:ph, j:Co * pw:pw, :]
        better = cand > out  # strict: earlier offsets win ties
        arg = np.where(better, np.uint8(o), arg)
        out = np.maximum(out, cand)
    return np.ascontiguousarray(out), PoolIndex(arg, x.shape, ph, pw)


def maxpool_backward(index: PoolIndex, grad: np.ndarray) -> np.ndarray:
    arg, shape, ph, pw = index
    if grad.shape != arg.shape:
        raise ValueError(f"upstream gradient shape {grad.shape}, expected {arg.shape}")
    To, Co = arg.shape[-3], arg.shape[-2]
    dx = np.zeros(shape, dtype=grad.dtype)
    for o in range(ph * pw):
        i, j = divmod(o, pw)
        dx[..., i:To * ph:ph, j:Co * pw:pw, :] = grad * (arg == o)
    return dx


# --------------------------------------------------------------------------
# elementwise, reshape and dense
# --------------------------------------------------------------------------

def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0 is 0
    return grad * (x > 0)


def flatten(x: np.ndarray) -> np.ndarray:
    """(..., T, C, F) -> (..., T*C*F), time-major."""
    _check_tensor(x)
    return x.reshape(x.shape[:-3] + (-1,))


def unflatten(grad: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    return grad.reshape(grad.shape[:-1] + tuple(shape))


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ValueError(f"dense input width {x.shape[-1]} does not match weights {w.shape}")
    if b.shape != (w.shape[1],):
        raise ValueError(f"bias shape {b.shape} does not match d_out={w.shape[1]}")
    return (x.reshape(-1, w.shape[0]) @ w + b).reshape(x.shape[:-1] + (w.shape[1],))


def dense_backward(
    x: np.ndarray, w: np.ndarray, grad: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if grad.shape != x.shape[:-1] + (w.shape[1],):
        raise ValueError(f"upstream gradient shape {grad.shape} does not match dense output")
    x2 = x.reshape(-1, w.shape[0])
    g2 = grad.reshape(-1, w.shape[1])
    dx = (g2 @ w.T).reshape(x.shape)
    return dx, x2.T @ g2, g2.sum(axis=0)


# --------------------------------------------------------------------------
# softmax and the fused loss
# --------------------------------------------------------------------------

def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(
    logits: np.ndarray, y: np.ndarray | int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample binary cross-entropy on softmax probabilities.

    Returns ``(loss, dloss/dlogits)`` with one loss per leading index. With
    p the defect probability, loss = -(y log p + (1-y) log(1-p)), and the
    logit gradient is p_vec - onehot(y).
    """
    y = np.asarray(y)
    logp = log_softmax(logits)
    loss = -np.take_along_axis(logp, y[..., None], axis=-1)[..., 0]
    grad = np.exp(logp)
    onehot = np.zeros_like(grad)
    np.put_along_axis(onehot, y[..., None], 1, axis=-1)
    return loss, grad - onehot
