"""Classifier assembly: four conv-BN-ReLU-pool blocks, flatten, dense, softmax.

The model object owns its parameter containers; forward() returns both the
class probabilities and a ForwardPass record holding every layer context so
a single backward sweep can produce parameter gradients (training) or the
input gradient (saliency).

Checkpoints serialize to the ASN1 byte format: magic "ASN1", uint32 version,
a config block (resolution, four channel widths, class count, uint32 LE),
then each tensor in a fixed order as rank + dims (uint32 LE) + float64 LE
payload, then epochs and seed as uint64 LE.  Per block the tensor order is
conv weights, conv bias, bn gamma, bn beta, bn running mean, bn running var,
bn batch count; after the blocks come dense weights and dense bias.  Kernel
size 3, stride 1, padding 1, pool 2, epsilon 1e-5 and stat momentum 0.1 are
fixed constants of the format, not serialized fields.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, ShapeError
from .layers import (
    BatchNormParams,
    Conv3dParams,
    DenseParams,
    batchnorm_backward,
    batchnorm_forward,
    conv3d_backward,
    conv3d_forward,
    dense_backward,
    dense_forward,
    maxpool3d_backward,
    maxpool3d_forward,
    relu_backward,
    relu_forward,
    softmax,
)

MAGIC = b"ASN1"
VERSION = 1
KERNEL = 3
STRIDE = 1
PADDING = 1
POOL = 2
N_BLOCKS = 4


@dataclass
class ModelConfig:
    resolution: int = 32
    channels: tuple = (8, 16, 32, 64)
    num_classes: int = 2

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        if self.resolution % 16 != 0 or self.resolution <= 0:
            raise ConfigError(
                f"resolution must be a positive multiple of 16 (four pooling halvings), "
                f"got {self.resolution}"
            )
        if len(self.channels) != N_BLOCKS:
            raise ConfigError(f"need {N_BLOCKS} channel widths, got {self.channels}")
        if min(self.channels) < 1:
            raise ConfigError("channel widths must be positive")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be at least 2")

    @property
    def flat_width(self) -> int:
        side = self.resolution // 2**N_BLOCKS
        return self.channels[-1] * side**3


@dataclass
class Model:
    config: ModelConfig
    blocks: list  # [(Conv3dParams, BatchNormParams)] x 4
    dense: DenseParams
    epochs_completed: int = 0
    seed: int = 0

    @property
    def num_classes(self) -> int:
        return self.config.num_classes

    def parameters(self) -> list:
        """Trainable tensors in checkpoint order (BN running stats excluded)."""
        out = []
        for conv, bn in self.blocks:
            out.extend([conv.weights, conv.bias, bn.gamma, bn.beta])
        out.extend([self.dense.weights, self.dense.bias])
        return out

    def forward(self, x, mode: str = "infer") -> "ForwardPass":
        return forward(self, x, mode)

    def backward_from_logits(self, fwd: "ForwardPass", grad_logits: np.ndarray):
        return backward_from_logits(self, fwd, grad_logits)


@dataclass
class ForwardPass:
    probs: np.ndarray
    logits: np.ndarray
    activations: list  # post-pool output of each block
    block_ctxs: list  # [(conv_ctx, bn_ctx, relu_ctx, pool_ctx)] x 4
    dense_ctx: object
    flatten_shape: tuple = field(default=None)


def _uniform_init(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def build_model(config: ModelConfig, seed: int) -> Model:
    rng = np.random.default_rng(seed)
    blocks = []
    c_in = 1
    for c_out in config.channels:
        fan_in = c_in * KERNEL**3
        fan_out = c_out * KERNEL**3
        w = _uniform_init(rng, (c_out, c_in, KERNEL, KERNEL, KERNEL), fan_in, fan_out)
        conv = Conv3dParams(weights=w, bias=np.zeros(c_out), stride=STRIDE, padding=PADDING)
        blocks.append((conv, BatchNormParams.create(c_out)))
        c_in = c_out
    dw = _uniform_init(
        rng, (config.num_classes, config.flat_width), config.flat_width, config.num_classes
    )
    dense = DenseParams(weights=dw, bias=np.zeros(config.num_classes))
    return Model(config=config, blocks=blocks, dense=dense, seed=int(seed))


def forward(model: Model, x: np.ndarray, mode: str = "infer") -> ForwardPass:
    x = np.ascontiguousarray(x, dtype=np.float64)
    r = model.config.resolution
    if x.ndim != 5 or x.shape[1] != 1 or x.shape[2:] != (r, r, r):
        raise ShapeError(
            f"input must be (N, 1, {r}, {r}, {r}), got {x.shape}"
        )
    activations = []
    block_ctxs = []
    h = x
    for conv, bn in model.blocks:
        h, conv_ctx = conv3d_forward(h, conv)
        h, bn_ctx = batchnorm_forward(h, bn, mode)
        h, relu_ctx = relu_forward(h)
        h, pool_ctx = maxpool3d_forward(h, (POOL, POOL, POOL), POOL)
        activations.append(h)
        block_ctxs.append((conv_ctx, bn_ctx, relu_ctx, pool_ctx))
    flatten_shape = h.shape
    flat = h.reshape(h.shape[0], -1)
    logits, dense_ctx = dense_forward(flat, model.dense)
    probs = softmax(logits)
    return ForwardPass(
        probs=probs,
        logits=logits,
        activations=activations,
        block_ctxs=block_ctxs,
        dense_ctx=dense_ctx,
        flatten_shape=flatten_shape,
    )


def backward_from_logits(model: Model, fwd: ForwardPass, grad_logits: np.ndarray):
    """Walk the chain backwards from d(loss)/d(logits).

    Returns (grad_x, grads) where grads aligns with model.parameters().
    """
    g, gdw, gdb = dense_backward(grad_logits, fwd.dense_ctx, model.dense)
    g = g.reshape(fwd.flatten_shape)
    block_grads = []
    for (conv, bn), ctxs in zip(reversed(model.blocks), reversed(fwd.block_ctxs)):
        conv_ctx, bn_ctx, relu_ctx, pool_ctx = ctxs
        g = maxpool3d_backward(g, pool_ctx)
        g = relu_backward(g, relu_ctx)
        g, ggamma, gbeta = batchnorm_backward(g, bn_ctx, bn)
        g, gw, gb = conv3d_backward(g, conv_ctx, conv)
        block_grads.append([gw, gb, ggamma, gbeta])
    grads = []
    for chunk in reversed(block_grads):
        grads.extend(chunk)
    grads.extend([gdw, gdb])
    return g, grads


def _pack_tensor(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype=np.float64)
    head = struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.astype("<f8", copy=False).tobytes()


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise FormatError(
                f"checkpoint truncated: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.raw) - self.pos}"
            )
        chunk = self.raw[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def tensor(self, expect_shape=None) -> np.ndarray:
        rank = self.u32()
        if rank > 8:
            raise FormatError(f"implausible tensor rank {rank}")
        shape = tuple(self.u32() for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        data = np.frombuffer(self.take(8 * count), dtype="<f8").reshape(shape)
        if expect_shape is not None and shape != tuple(expect_shape):
            raise FormatError(
                f"tensor shape {shape} does not match expected {tuple(expect_shape)}"
            )
        return data.copy()


def save_checkpoint(model: Model) -> bytes:
    cfg = model.config
    parts = [
        MAGIC,
        struct.pack("<I", VERSION),
        struct.pack("<6I", cfg.resolution, *cfg.channels, cfg.num_classes),
    ]
    for conv, bn in model.blocks:
        parts.append(_pack_tensor(conv.weights))
        parts.append(_pack_tensor(conv.bias))
        parts.append(_pack_tensor(bn.gamma))
        parts.append(_pack_tensor(bn.beta))
        parts.append(_pack_tensor(bn.running_mean))
        parts.append(_pack_tensor(bn.running_var))
        parts.append(_pack_tensor(np.array([float(bn.stats_count)])))
    parts.append(_pack_tensor(model.dense.weights))
    parts.append(_pack_tensor(model.dense.bias))
    parts.append(struct.pack("<QQ", model.epochs_completed, model.seed))
    return b"".join(parts)


def load_checkpoint(raw: bytes) -> Model:
    rd = _Reader(raw)
    magic = rd.take(4)
    if magic != MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}")
    version = rd.u32()
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    resolution = rd.u32()
    channels = tuple(rd.u32() for _ in range(N_BLOCKS))
    num_classes = rd.u32()
    try:
        config = ModelConfig(resolution=resolution, channels=channels, num_classes=num_classes)
    except ConfigError as exc:
        raise FormatError(f"checkpoint config invalid: {exc}") from None
    blocks = []
    c_in = 1
    for c_out in channels:
        w = rd.tensor((c_out, c_in, KERNEL, KERNEL, KERNEL))
        b = rd.tensor((c_out,))
        gamma = rd.tensor((c_out,))
        beta = rd.tensor((c_out,))
        rmean = rd.tensor((c_out,))
        rvar = rd.tensor((c_out,))
        count_arr = rd.tensor((1,))
        count = int(count_arr[0])
        if count < 0 or count != count_arr[0]:
            raise FormatError(f"batch count field is not a non-negative integer: {count_arr[0]}")
        if (rvar < 0).any():
            raise FormatError("running variance in checkpoint is negative")
        conv = Conv3dParams(weights=w, bias=b, stride=STRIDE, padding=PADDING)
        bn = BatchNormParams(
            gamma=gamma, beta=beta, running_mean=rmean, running_var=rvar,
            stats_count=count,
        )
        blocks.append((conv, bn))
        c_in = c_out
    dw = rd.tensor((num_classes, config.flat_width))
    db = rd.tensor((num_classes,))
    epochs = rd.u64()
    seed = rd.u64()
    if rd.pos != len(raw):
        raise FormatError(f"{len(raw) - rd.pos} trailing bytes after checkpoint payload")
    dense = DenseParams(weights=dw, bias=db)
    return Model(
        config=config, blocks=blocks, dense=dense,
        epochs_completed=epochs, seed=seed,
    )


def save_checkpoint_file(model: Model, path) -> None:
    from .fileio import atomic_write_bytes

    atomic_write_bytes(path, save_checkpoint(model))


def load_checkpoint_file(path) -> Model:
    with open(path, "rb") as fh:
        return load_checkpoint(fh.read())
