"""im2col-based 2-D convolution and average pooling primitives.

All feature maps are (batch, channels, height, width) float64 arrays.
"""

from __future__ import annotations

import numpy as np


def im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    """Unfold (B, C, H, W) into (B, C*k*k, Ho*Wo) patch columns."""
    B, C, H, W = x.shape
    Ho = (H + 2 * pad - k) // stride + 1
    Wo = (W + 2 * pad - k) // stride + 1
    if pad > 0:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    strides = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x,
        shape=(B, C, Ho, Wo, k, k),
        strides=(
            strides[0],
            strides[1],
            strides[2] * stride,
            strides[3] * stride,
            strides[2],
            strides[3],
        ),
        writeable=False,
    )
    # (B, C, k, k, Ho, Wo) -> (B, C*k*k, Ho*Wo)
    cols = windows.transpose(0, 1, 4, 5, 2, 3).reshape(B, C * k * k, Ho * Wo)
    return np.ascontiguousarray(cols)


def col2im(cols: np.ndarray, x_shape, k: int, stride: int, pad: int) -> np.ndarray:
    """Fold patch columns back, accumulating overlaps (adjoint of im2col)."""
    B, C, H, W = x_shape
    Ho = (H + 2 * pad - k) // stride + 1
    Wo = (W + 2 * pad - k) // stride + 1
    out = np.zeros((B, C, H + 2 * pad, W + 2 * pad))
    cols = cols.reshape(B, C, k, k, Ho, Wo)
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + Ho * stride : stride, j : j + Wo * stride : stride] += cols[
                :, :, i, j
            ]
    if pad > 0:
        out = out[:, :, pad:-pad, pad:-pad]
    return out


def conv2d(x: np.ndarray, W: np.ndarray, b: np.ndarray, stride: int, pad: int) -> np.ndarray:
    B = x.shape[0]
    Cout, Cin, k, _ = W.shape
    Ho = (x.shape[2] + 2 * pad - k) // stride + 1
    Wo = (x.shape[3] + 2 * pad - k) // stride + 1
    cols = im2col(x, k, stride, pad)
    out = np.einsum("oc,bcp->bop", W.reshape(Cout, -1), cols)
    return out.reshape(B, Cout, Ho, Wo) + b[None, :, None, None]


def conv2d_input_grad(g: np.ndarray, W: np.ndarray, x_shape, stride: int, pad: int) -> np.ndarray:
    Cout, Cin, k, _ = W.shape
    B = g.shape[0]
    gc = g.reshape(B, Cout, -1)
    cols = np.einsum("oc,bop->bcp", W.reshape(Cout, -1), gc)
    return col2im(cols, x_shape, k, stride, pad)


def conv2d_weight_grad(x: np.ndarray, g: np.ndarray, k: int, stride: int, pad: int):
    """Mean-over-batch gradients for the kernel and bias.

    x is the presynaptic map (or its trace), g the error at the output map.
    """
    B, Cout = g.shape[0], g.shape[1]
    cols = im2col(x, k, stride, pad)
    gc = g.reshape(B, Cout, -1)
    gW = np.einsum("bop,bcp->oc", gc, cols) / B
    gb = gc.sum(axis=2).mean(axis=0)
    return gW.reshape(Cout, x.shape[1], k, k), gb


def avg_pool(x: np.ndarray, k: int) -> np.ndarray:
    B, C, H, W = x.shape
    if H % k or W % k:
        raise ValueError(f"pool size {k} does not divide spatial dims {(H, W)}")
    return x.reshape(B, C, H // k, k, W // k, k).mean(axis=(3, 5))


def avg_pool_input_grad(g: np.ndarray, k: int) -> np.ndarray:
    return np.repeat(np.repeat(g, k, axis=2), k, axis=3) / (k * k)
