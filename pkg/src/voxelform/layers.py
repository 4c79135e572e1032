"""Network layers: forward passes and their hand-derived adjoints.

Every forward returns (output, context); the context carries exactly what
the matching backward needs and may be consumed once.  All math runs in
float64 with fixed summation order, so repeated runs are bitwise identical.

Backward derivations are the standard adjoints of each forward map.  For
batch normalization in train mode the input gradient routes through the
batch mean and population variance:

    gx = gxhat/std + gvar * 2(x-mu)/n + gmu/n

with gvar and gmu the chain-rule sums over the per-channel batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ArgumentError, ContractError, ShapeError, StateError

_BN_AXES = (0, 2, 3, 4)


def _f64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


@dataclass
class Conv3dParams:
    weights: np.ndarray  # (C_out, C_in, k_d, k_h, k_w)
    bias: np.ndarray  # (C_out,)
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        self.weights = _f64(self.weights)
        self.bias = _f64(self.bias)
        if self.weights.ndim != 5:
            raise ShapeError(f"conv weights must be rank 5, got {self.weights.shape}")
        if min(self.weights.shape[2:]) < 1:
            raise ShapeError("kernel dims must all be >= 1")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match {self.weights.shape[0]} "
                "output channels"
            )
        if self.stride < 1:
            raise ArgumentError("stride must be >= 1")
        if self.padding < 0:
            raise ArgumentError("padding must be >= 0")


@dataclass
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5
    momentum_stat: float = 0.1
    stats_count: int = 0  # how many train batches have fed the running stats

    def __post_init__(self):
        self.gamma = _f64(self.gamma)
        self.beta = _f64(self.beta)
        self.running_mean = _f64(self.running_mean)
        self.running_var = _f64(self.running_var)
        c = self.gamma.shape
        if not (self.beta.shape == self.running_mean.shape == self.running_var.shape == c):
            raise ShapeError("batch-norm parameter vectors disagree in shape")
        if self.epsilon <= 0:
            raise ArgumentError("epsilon must be positive")
        if not (0 < self.momentum_stat <= 1):
            raise ArgumentError("momentum_stat must be in (0, 1]")
        if (self.running_var < 0).any():
            raise ArgumentError("running variance must be non-negative")

    @classmethod
    def create(cls, channels: int) -> "BatchNormParams":
        return cls(
            gamma=np.ones(channels),
            beta=np.zeros(channels),
            running_mean=np.zeros(channels),
            running_var=np.ones(channels),
        )


@dataclass
class DenseParams:
    weights: np.ndarray  # (C_out, C_in)
    bias: np.ndarray  # (C_out,)

    def __post_init__(self):
        self.weights = _f64(self.weights)
        self.bias = _f64(self.bias)
        if self.weights.ndim != 2:
            raise ShapeError(f"dense weights must be rank 2, got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError("dense bias does not match output width")


@dataclass
class _Context:
    out_shape: tuple
    consumed: bool = field(default=False)

    def claim(self, grad_shape: tuple):
        if self.consumed:
            raise ContractError("layer context already consumed by a backward call")
        if tuple(grad_shape) != tuple(self.out_shape):
            raise ContractError(
                f"gradient shape {tuple(grad_shape)} does not match forward output "
                f"{tuple(self.out_shape)}"
            )
        self.consumed = True


@dataclass
class Conv3dContext(_Context):
    xp: np.ndarray = None  # padded input
    in_shape: tuple = None
    params: Conv3dParams = None


@dataclass
class BatchNormContext(_Context):
    mode: str = "train"
    xhat: np.ndarray = None
    xc: np.ndarray = None  # x - batch mean (train mode only)
    inv_std: np.ndarray = None  # per channel
    count: int = 0
    params: BatchNormParams = None


@dataclass
class ReluContext(_Context):
    mask: np.ndarray = None


@dataclass
class MaxPoolContext(_Context):
    argmax: np.ndarray = None
    in_shape: tuple = None


@dataclass
class DenseContext(_Context):
    x: np.ndarray = None
    params: DenseParams = None


def conv3d_forward(x: np.ndarray, p: Conv3dParams):
    x = _f64(x)
    if x.ndim != 5:
        raise ShapeError(f"conv input must be (N, C, D, H, W), got {x.shape}")
    if x.shape[1] != p.weights.shape[1]:
        raise ShapeError(
            f"input has {x.shape[1]} channels but kernel expects {p.weights.shape[1]}"
        )
    for ax, k in zip(x.shape[2:], p.weights.shape[2:]):
        if ax + 2 * p.padding < k:
            raise ShapeError(
                f"spatial extent {ax} + 2*{p.padding} padding is smaller than kernel {k}"
            )
    xp = kernels.pad_input(x, p.padding)
    y = kernels.conv3d_forward_padded(xp, p.weights, p.stride)
    y += p.bias.reshape(1, -1, 1, 1, 1)
    ctx = Conv3dContext(out_shape=y.shape, xp=xp, in_shape=x.shape, params=p)
    return y, ctx


def conv3d_backward(grad_y: np.ndarray, ctx: Conv3dContext, p: Conv3dParams):
    grad_y = _f64(grad_y)
    if ctx.params is not p:
        raise ContractError("context was produced with different conv parameters")
    ctx.claim(grad_y.shape)
    gxp, gw = kernels.conv3d_backward_padded(ctx.xp, p.weights, grad_y, p.stride)
    gb = grad_y.sum(axis=(0, 2, 3, 4))
    pad = p.padding
    if pad:
        gx = gxp[:, :, pad:-pad, pad:-pad, pad:-pad]
    else:
        gx = gxp
    return np.ascontiguousarray(gx), gw, gb


def batchnorm_forward(x: np.ndarray, p: BatchNormParams, mode: str = "train"):
    x = _f64(x)
    if x.ndim != 5:
        raise ShapeError(f"batch-norm input must be (N, C, D, H, W), got {x.shape}")
    if x.shape[1] != p.gamma.shape[0]:
        raise ShapeError(
            f"input has {x.shape[1]} channels but batch-norm holds {p.gamma.shape[0]}"
        )
    gamma = p.gamma.reshape(1, -1, 1, 1, 1)
    beta = p.beta.reshape(1, -1, 1, 1, 1)
    if mode == "train":
        n = x.shape[0] * x.shape[2] * x.shape[3] * x.shape[4]
        if n < 2:
            raise ArgumentError("train-mode batch norm needs at least 2 values per channel")
        mu = x.mean(axis=_BN_AXES)
        var = x.var(axis=_BN_AXES)  # population variance, divide by n
        inv_std = 1.0 / np.sqrt(var + p.epsilon)
        xc = x - mu.reshape(1, -1, 1, 1, 1)
        xhat = xc * inv_std.reshape(1, -1, 1, 1, 1)
        if p.stats_count == 0:
            # first batch seeds the averages outright; EMA from then on
            p.running_mean = mu.copy()
            p.running_var = var.copy()
        else:
            m = p.momentum_stat
            p.running_mean = (1.0 - m) * p.running_mean + m * mu
            p.running_var = (1.0 - m) * p.running_var + m * var
        p.stats_count += 1
        y = gamma * xhat + beta
        ctx = BatchNormContext(
            out_shape=y.shape, mode=mode, xhat=xhat, xc=xc, inv_std=inv_std,
            count=n, params=p,
        )
        return y, ctx
    if mode == "infer":
        if p.stats_count == 0:
            raise StateError("batch norm has no running statistics yet; train first")
        inv_std = 1.0 / np.sqrt(p.running_var + p.epsilon)
        xhat = (x - p.running_mean.reshape(1, -1, 1, 1, 1)) * inv_std.reshape(1, -1, 1, 1, 1)
        y = gamma * xhat + beta
        ctx = BatchNormContext(
            out_shape=y.shape, mode=mode, xhat=xhat, xc=None, inv_std=inv_std,
            count=0, params=p,
        )
        return y, ctx
    raise ArgumentError(f"mode must be 'train' or 'infer', got {mode!r}")


def batchnorm_backward(grad_out: np.ndarray, ctx: BatchNormContext, p: BatchNormParams):
    grad_out = _f64(grad_out)
    if ctx.params is not p:
        raise ContractError("context was produced with different batch-norm parameters")
    ctx.claim(grad_out.shape)
    gamma = p.gamma.reshape(1, -1, 1, 1, 1)
    grad_gamma = (grad_out * ctx.xhat).sum(axis=_BN_AXES)
    grad_beta = grad_out.sum(axis=_BN_AXES)
    inv_std = ctx.inv_std.reshape(1, -1, 1, 1, 1)
    gxhat = grad_out * gamma
    if ctx.mode == "infer":
        return gxhat * inv_std, grad_gamma, grad_beta
    n = ctx.count
    gvar = (gxhat * ctx.xc).sum(axis=_BN_AXES) * (-0.5) * ctx.inv_std**3
    gmu = -(gxhat.sum(axis=_BN_AXES)) * ctx.inv_std + gvar * (
        -2.0 / n
    ) * ctx.xc.sum(axis=_BN_AXES)
    gx = (
        gxhat * inv_std
        + gvar.reshape(1, -1, 1, 1, 1) * 2.0 * ctx.xc / n
        + gmu.reshape(1, -1, 1, 1, 1) / n
    )
    return gx, grad_gamma, grad_beta


def relu_forward(x: np.ndarray):
    x = _f64(x)
    mask = x > 0
    y = np.where(mask, x, 0.0)
    return y, ReluContext(out_shape=y.shape, mask=mask)


def relu_backward(grad_y: np.ndarray, ctx: ReluContext):
    grad_y = _f64(grad_y)
    ctx.claim(grad_y.shape)
    return np.where(ctx.mask, grad_y, 0.0)


def maxpool3d_forward(x: np.ndarray, window=(2, 2, 2), stride: int = 2):
    x = _f64(x)
    if x.ndim != 5:
        raise ShapeError(f"pool input must be (N, C, D, H, W), got {x.shape}")
    for ax, k in zip(x.shape[2:], window):
        if k > ax:
            raise ShapeError(f"pool window {tuple(window)} exceeds spatial extent {x.shape[2:]}")
    y, argmax = kernels.maxpool3d_forward(x, window, stride)
    ctx = MaxPoolContext(out_shape=y.shape, argmax=argmax, in_shape=x.shape)
    return y, ctx


def maxpool3d_backward(grad_y: np.ndarray, ctx: MaxPoolContext):
    grad_y = _f64(grad_y)
    ctx.claim(grad_y.shape)
    return kernels.maxpool3d_backward(grad_y, ctx.argmax, ctx.in_shape[2:])


def dense_forward(x: np.ndarray, p: DenseParams):
    x = _f64(x)
    if x.ndim != 2:
        raise ShapeError(f"dense input must be (N, C), got {x.shape}")
    if x.shape[1] != p.weights.shape[1]:
        raise ShapeError(
            f"input width {x.shape[1]} does not match dense weights {p.weights.shape}"
        )
    y = x @ p.weights.T + p.bias
    ctx = DenseContext(out_shape=y.shape, x=x, params=p)
    return y, ctx


def dense_backward(grad_y: np.ndarray, ctx: DenseContext, p: DenseParams):
    grad_y = _f64(grad_y)
    if ctx.params is not p:
        raise ContractError("context was produced with different dense parameters")
    ctx.claim(grad_y.shape)
    gx = grad_y @ p.weights
    gw = grad_y.T @ ctx.x
    gb = grad_y.sum(axis=0)
    return gx, gw, gb


def softmax(logits: np.ndarray) -> np.ndarray:
    logits = _f64(logits)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)
