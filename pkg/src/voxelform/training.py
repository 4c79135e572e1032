"""Cross-entropy loss, momentum SGD, and the epoch loop.

The optimizer applies the heavy-ball rule: each step's total update is

    delta_new = -lr * grad + momentum * delta_old
    theta    += delta_new

and delta_new is stored as the velocity for the next step.  With momentum 0
this reduces bitwise to plain gradient descent.

The loss gradient is taken jointly with softmax, so the gradient with
respect to the logits is (probs - onehot) / batch_size; this avoids the
1/prob blowup of differentiating the log separately.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ContractError, DivergenceError
from .fileio import atomic_write_text
from .model import Model, forward

LOG_HEADER = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


@dataclass
class TrainConfig:
    seed: int
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 8
    epochs: int = 60
    shuffle: bool = True

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ArgumentError("learning_rate must be non-negative")
        if not (0 <= self.momentum < 1):
            raise ArgumentError("momentum must be in [0, 1)")
        if self.batch_size < 1:
            raise ArgumentError("batch_size must be positive")
        if self.epochs < 1:
            raise ArgumentError("epochs must be positive")


@dataclass
class OptimizerState:
    velocity: list  # per-parameter update tensors, same order as model.parameters()

    @classmethod
    def create(cls, params: list) -> "OptimizerState":
        return cls(velocity=[np.zeros_like(p) for p in params])


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


def cross_entropy(probs: np.ndarray, labels: np.ndarray):
    """Mean negative log likelihood plus the joint softmax+loss logit gradient."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    n, c = probs.shape
    if labels.shape != (n,):
        raise ArgumentError(f"need {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ArgumentError(f"labels must lie in [0, {c}), saw {labels.min()}..{labels.max()}")
    picked = probs[np.arange(n), labels]
    with np.errstate(divide="ignore"):
        loss = float(-np.log(picked).mean())
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, grad


def sgd_momentum_step(params: list, grads: list, state: OptimizerState, config: TrainConfig):
    if len(params) != len(grads) or len(params) != len(state.velocity):
        raise ContractError(
            f"parameter/gradient/velocity counts disagree: "
            f"{len(params)}/{len(grads)}/{len(state.velocity)}"
        )
    for p, g, v in zip(params, grads, state.velocity):
        if p.shape != g.shape or p.shape != v.shape:
            raise ContractError(
                f"shape mismatch in optimizer step: param {p.shape}, grad {g.shape}, "
                f"velocity {v.shape}"
            )
    for i, (p, g) in enumerate(zip(params, grads)):
        delta = -config.learning_rate * g + config.momentum * state.velocity[i]
        p += delta
        state.velocity[i] = delta


def _metrics_pass(model: Model, x: np.ndarray, y: np.ndarray, batch_size: int):
    """Infer-mode loss and accuracy over a whole split."""
    n = len(y)
    loss_sum = 0.0
    correct = 0
    for start in range(0, n, batch_size):
        xb = x[start : start + batch_size]
        yb = y[start : start + batch_size]
        fwd = forward(model, xb, mode="infer")
        picked = fwd.probs[np.arange(len(yb)), yb]
        with np.errstate(divide="ignore"):
            loss_sum += float(-np.log(picked).sum())
        correct += int((fwd.probs.argmax(axis=1) == yb).sum())
    return loss_sum / n, correct / n


def _check_set(name, data):
    x, y = data
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(x) == 0 or len(y) == 0:
        raise ArgumentError(f"{name} set is empty")
    if len(x) != len(y):
        raise ArgumentError(f"{name} set has {len(x)} grids but {len(y)} labels")
    if x.ndim == 4:
        x = x[:, None]
    return x, y


def train(model: Model, train_set, val_set, config: TrainConfig):
    """Epoch loop: seeded shuffle, mini-batches, step, then infer-mode metrics."""
    tx, ty = _check_set("train", train_set)
    vx, vy = _check_set("val", val_set)
    if ty.min() < 0 or ty.max() >= model.num_classes:
        raise ArgumentError("train labels out of range")
    if vy.min() < 0 or vy.max() >= model.num_classes:
        raise ArgumentError("val labels out of range")
    params = model.parameters()
    state = OptimizerState.create(params)
    rng = np.random.default_rng(config.seed)
    records = []
    n = len(ty)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        for start in range(0, n, config.batch_size):
            take = order[start : start + config.batch_size]
            xb = tx[take]
            yb = ty[take]
            fwd = forward(model, xb, mode="train")
            loss, glogits = cross_entropy(fwd.probs, yb)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss {loss} at epoch {epoch}, "
                    f"batch {start // config.batch_size + 1}"
                )
            _, grads = model.backward_from_logits(fwd, glogits)
            sgd_momentum_step(params, grads, state, config)
        train_loss, train_acc = _metrics_pass(model, tx, ty, config.batch_size)
        val_loss, val_acc = _metrics_pass(model, vx, vy, config.batch_size)
        model.epochs_completed += 1
        records.append(EpochRecord(epoch, train_loss, train_acc, val_loss, val_acc))
    return model, records


def format_training_log(records: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LOG_HEADER)
    for r in records:
        writer.writerow(
            [
                r.epoch,
                f"{r.train_loss:.9g}",
                f"{r.train_acc:.9g}",
                f"{r.val_loss:.9g}",
                f"{r.val_acc:.9g}",
            ]
        )
    return buf.getvalue()


def write_training_log(records: list, path) -> None:
    atomic_write_text(path, format_training_log(records))
