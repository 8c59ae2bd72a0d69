"""Convolution layers as autodiff ops.

Activations have shape (channels, time). Convolutions are cross-correlations
with left (causal) zero padding so a strided conv yields ceil(T/stride)
output steps and the transposed form yields exactly T*stride.

Both directions are written as one large matmul over an im2col matrix
(gathered with stride tricks); per-tap loops only perform the cheap
scatter-adds, which keeps the training loop BLAS-bound.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .autodiff import Tensor


def _im2col(xp: np.ndarray, kernel: int, stride: int, dilation: int, t_out: int) -> np.ndarray:
    c = xp.shape[0]
    view = as_strided(
        xp,
        shape=(c, kernel, t_out),
        strides=(xp.strides[0], dilation * xp.strides[1], stride * xp.strides[1]),
    )
    return np.ascontiguousarray(view).reshape(c * kernel, t_out)


def conv1d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor,
    stride: int = 1,
    dilation: int = 1,
    causal_pad: bool = True,
) -> Tensor:
    """weight shape (out_ch, in_ch, kernel); bias shape (out_ch,)."""
    c_in, t_in = x.values.shape
    out_ch, w_in, kernel = weight.values.shape
    if w_in != c_in:
        raise ValueError(f"channel mismatch: input {c_in}, weight expects {w_in}")
    if kernel < 1 or stride < 1 or dilation < 1:
        raise ValueError("kernel, stride, dilation must be >= 1")
    span = (kernel - 1) * dilation
    pad = span if causal_pad else 0
    if t_in + pad < span + 1:
        raise ValueError(f"input of {t_in} steps too short for kernel span {span + 1}")
    t_out = (t_in + pad - span - 1) // stride + 1
    xp = np.pad(x.values, ((0, 0), (pad, 0))) if pad else x.values

    if kernel == 1 and stride == 1:
        # Pointwise conv: no gather needed, pure matmul.
        w_mat = weight.values.reshape(out_ch, c_in)
        out = w_mat @ xp + bias.values[:, None]

        def grad_fn(g):
            bias.accumulate(g.sum(axis=1))
            weight.accumulate((g @ xp.T).reshape(out_ch, c_in, 1))
            x.accumulate(w_mat.T @ g)

        return Tensor(out, parents=(x, weight, bias), backward=grad_fn)

    cols = _im2col(xp, kernel, stride, dilation, t_out)  # (c_in*kernel, t_out)
    w_mat = weight.values.reshape(out_ch, c_in * kernel)
    out = w_mat @ cols + bias.values[:, None]

    def grad_fn(g):
        bias.accumulate(g.sum(axis=1))
        weight.accumulate((g @ cols.T).reshape(out_ch, c_in, kernel))
        g_cols = (w_mat.T @ g).reshape(c_in, kernel, t_out)
        gxp = np.zeros_like(xp)
        limit = (t_out - 1) * stride + 1
        for j in range(kernel):
            gxp[:, j * dilation : j * dilation + limit : stride] += g_cols[:, j]
        x.accumulate(gxp[:, pad:] if pad else gxp)

    return Tensor(out, parents=(x, weight, bias), backward=grad_fn)


def conv1d_transpose(x: Tensor, weight: Tensor, bias: Tensor, stride: int) -> Tensor:
    """Upsampling (transposed) conv; weight shape (in_ch, out_ch, kernel)
    with kernel >= stride. Output has exactly T*stride steps (the first
    kernel-stride steps of the full correlation are cropped)."""
    c_in, t_in = x.values.shape
    w_in, out_ch, kernel = weight.values.shape
    if w_in != c_in:
        raise ValueError(f"channel mismatch: input {c_in}, weight expects {w_in}")
    if kernel < stride:
        raise ValueError(f"kernel {kernel} must be >= stride {stride}")
    full = (t_in - 1) * stride + kernel
    crop = kernel - stride
    limit = (t_in - 1) * stride + 1
    w_mat = weight.values.transpose(1, 2, 0).reshape(out_ch * kernel, c_in)
    taps = (w_mat @ x.values).reshape(out_ch, kernel, t_in)
    y_full = np.zeros((out_ch, full))
    for j in range(kernel):
        y_full[:, j : j + limit : stride] += taps[:, j]
    out = y_full[:, crop:] + bias.values[:, None]

    def grad_fn(g):
        bias.accumulate(g.sum(axis=1))
        g_full = np.zeros((out_ch, full))
        g_full[:, crop:] = g
        sl = np.empty((out_ch, kernel, t_in))
        for j in range(kernel):
            sl[:, j] = g_full[:, j : j + limit : stride]
        sl_mat = sl.reshape(out_ch * kernel, t_in)
        x.accumulate(w_mat.T @ sl_mat)
        weight.accumulate((sl_mat @ x.values.T).reshape(out_ch, kernel, c_in).transpose(2, 0, 1))
        del sl, sl_mat

    return Tensor(out, parents=(x, weight, bias), backward=grad_fn)


def conv1d_reference(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride=1, dilation=1, causal_pad=True) -> np.ndarray:
    """Nested-loop oracle for conv1d, kept deliberately naive."""
    c_in, t_in = x.shape
    out_ch, _, kernel = weight.shape
    span = (kernel - 1) * dilation
    pad = span if causal_pad else 0
    xp = np.pad(x, ((0, 0), (pad, 0)))
    t_out = (t_in + pad - span - 1) // stride + 1
    out = np.zeros((out_ch, t_out))
    for o in range(out_ch):
        for t in range(t_out):
            acc = bias[o]
            for c in range(c_in):
                for j in range(kernel):
                    acc += weight[o, c, j] * xp[c, t * stride + j * dilation]
            out[o, t] = acc
    return out
