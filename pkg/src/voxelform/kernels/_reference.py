"""Pure-numpy kernels for 3D convolution and max pooling.

This is the fallback backend used when the compiled extension is not built.
Forward convolution runs as a windowed einsum; the backward pass scatters
per-tap rank-2 products back onto the padded input.  Pooling flattens each
window and relies on argmax returning the first (lowest linear index) hit.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NAME = "python"


def conv3d_forward_padded(xp: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    kd, kh, kw = w.shape[2:]
    win = sliding_window_view(xp, (kd, kh, kw), axis=(2, 3, 4))
    win = win[:, :, ::stride, ::stride, ::stride]
    return np.einsum("ncdhwxyz,ocxyz->nodhw", win, w, optimize=True)


def conv3d_backward_padded(xp: np.ndarray, w: np.ndarray, gy: np.ndarray, stride: int):
    kd, kh, kw = w.shape[2:]
    od, oh, ow = gy.shape[2:]
    win = sliding_window_view(xp, (kd, kh, kw), axis=(2, 3, 4))
    win = win[:, :, ::stride, ::stride, ::stride]
    gw = np.einsum("ncdhwxyz,nodhw->ocxyz", win, gy, optimize=True)
    gxp = np.zeros_like(xp)
    for a in range(kd):
        for b in range(kh):
            for c in range(kw):
                # (N, OD, OH, OW, C_in) contribution of this kernel tap
                part = np.tensordot(gy, w[:, :, a, b, c], axes=([1], [0]))
                part = np.moveaxis(part, -1, 1)
                gxp[
                    :,
                    :,
                    a : a + od * stride : stride,
                    b : b + oh * stride : stride,
                    c : c + ow * stride : stride,
                ] += part
    return gxp, gw


def maxpool3d_forward(x: np.ndarray, window, stride: int):
    p, q, r = window
    n, c, d, h, w = x.shape
    win = sliding_window_view(x, (p, q, r), axis=(2, 3, 4))
    win = win[:, :, ::stride, ::stride, ::stride]
    od, oh, ow = win.shape[2:5]
    flat = win.reshape(n, c, od, oh, ow, p * q * r)
    local = flat.argmax(axis=-1)
    y = np.take_along_axis(flat, local[..., None], axis=-1)[..., 0]
    dp = local // (q * r)
    dq = (local % (q * r)) // r
    dr = local % r
    base_d = np.arange(od)[:, None, None] * stride
    base_h = np.arange(oh)[None, :, None] * stride
    base_w = np.arange(ow)[None, None, :] * stride
    argmax = ((base_d + dp) * h + (base_h + dq)) * w + (base_w + dr)
    return np.ascontiguousarray(y), argmax.astype(np.int64)


def maxpool3d_backward(gy: np.ndarray, argmax: np.ndarray, spatial_shape):
    n, c = gy.shape[:2]
    d, h, w = spatial_shape
    gx = np.zeros((n, c, d * h * w), dtype=gy.dtype)
    ni = np.arange(n)[:, None, None, None, None]
    ci = np.arange(c)[None, :, None, None, None]
    np.add.at(gx, (ni, ci, argmax), gy)
    return gx.reshape(n, c, d, h, w)
