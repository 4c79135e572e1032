"""Backend dispatch for the convolution and pooling kernels.

Two interchangeable backends implement the same four functions: a compiled
extension (built from _compiled.pyx) and a numpy reference (_reference.py).
The compiled one is preferred when importable.  Set VOXELFORM_BACKEND to
"python" or "compiled" to force a choice; forcing "compiled" when the
extension is missing raises instead of silently degrading.

All wrappers normalize inputs to C-contiguous float64, so both backends see
identical data and produce deterministic, reproducible sums.
"""

import os

import numpy as np

from ..errors import ConfigError

_choice = os.environ.get("VOXELFORM_BACKEND", "")
if _choice not in ("", "python", "compiled"):
    raise ConfigError(
        f"VOXELFORM_BACKEND must be 'python' or 'compiled', got {_choice!r}"
    )

if _choice == "python":
    from . import _reference as _impl
elif _choice == "compiled":
    from . import _compiled as _impl  # noqa: F401  (ImportError is the point)
else:
    try:
        from . import _compiled as _impl
    except ImportError:
        from . import _reference as _impl

BACKEND = _impl.NAME


def _f64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def pad_input(x: np.ndarray, padding: int) -> np.ndarray:
    x = _f64(x)
    if padding == 0:
        return x
    pad = ((0, 0), (0, 0)) + ((padding, padding),) * 3
    return np.pad(x, pad, mode="constant")


def conv3d_forward_padded(xp, w, stride=1):
    return _impl.conv3d_forward_padded(_f64(xp), _f64(w), stride)


def conv3d_backward_padded(xp, w, gy, stride=1):
    return _impl.conv3d_backward_padded(_f64(xp), _f64(w), _f64(gy), stride)


def maxpool3d_forward(x, window=(2, 2, 2), stride=2):
    return _impl.maxpool3d_forward(_f64(x), tuple(window), stride)


def maxpool3d_backward(gy, argmax, spatial_shape):
    argmax = np.ascontiguousarray(argmax, dtype=np.int64)
    return _impl.maxpool3d_backward(_f64(gy), argmax, tuple(spatial_shape))


def conv3d(x, w, b, stride=1, padding=0):
    """Convenience forward: pad, convolve, add bias. Used by tests and benchmarks."""
    xp = pad_input(x, padding)
    y = conv3d_forward_padded(xp, w, stride)
    return y + np.asarray(b, dtype=np.float64).reshape(1, -1, 1, 1, 1)
