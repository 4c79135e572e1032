"""Gradient saliency over voxel inputs.

The saliency score of class c is that class's pre-softmax logit by default
(score="prob" switches to the softmax probability, which saturates for
confident models).  Its gradient with respect to the real-valued relaxation
of the occupancy grid is post-processed into an importance map (|G| or G^2),
min-max normalized to [0, 1], and then viewed as axis max-projections,
plane slices, or decile rank bands over the occupied voxels.

The model argument only needs two methods: forward(x, mode="infer") giving
an object with .probs/.logits, and backward_from_logits(fwd, grad_logits)
giving (grad_x, param_grads).  The real classifier and small test fixtures
both satisfy that.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, EmptyFormError
from .voxel import KIND_SCALAR, VoxelGrid

MODE_ABS = "abs"
MODE_SQUARE = "square"
TARGET_TRUE = "true_label"
TARGET_PRED = "predicted"

_AXIS_NAMES = {"i": 0, "j": 1, "k": 2}


@dataclass
class SaliencyResult:
    gradient: np.ndarray
    importance: np.ndarray
    normalized: np.ndarray
    mode: str
    target_class: int
    target_source: str


@dataclass
class Projection2D:
    axis: str
    values: np.ndarray


@dataclass
class RankBandMap:
    bands: np.ndarray  # int grid, 0 = unoccupied, 1..10 = most to least salient
    band_thresholds: list  # 9 boundary saliency values


def _axis_number(axis) -> int:
    if isinstance(axis, str):
        if axis not in _AXIS_NAMES:
            raise ArgumentError(f"axis must be one of i, j, k; got {axis!r}")
        return _AXIS_NAMES[axis]
    if axis in (0, 1, 2):
        return int(axis)
    raise ArgumentError(f"axis must be i/j/k or 0/1/2, got {axis!r}")


def _grid_data(x) -> np.ndarray:
    if isinstance(x, VoxelGrid):
        return x.data.astype(np.float64)
    return np.ascontiguousarray(x, dtype=np.float64)


def input_gradient(model, x, target: int, score: str = "logit") -> np.ndarray:
    data = _grid_data(x)
    if data.ndim != 3:
        raise ArgumentError(f"input grid must be 3-d, got shape {data.shape}")
    if not (0 <= target < model.num_classes):
        raise ArgumentError(
            f"target class {target} out of range for {model.num_classes} classes"
        )
    fwd = model.forward(data[None, None], mode="infer")
    glogits = np.zeros_like(fwd.logits)
    if score == "logit":
        glogits[0, target] = 1.0
    elif score == "prob":
        # d p_c / d logit_j = p_c (delta_cj - p_j)
        p = fwd.probs[0]
        glogits[0] = p[target] * (np.eye(len(p))[target] - p)
    else:
        raise ArgumentError(f"score must be 'logit' or 'prob', got {score!r}")
    gx, _ = model.backward_from_logits(fwd, glogits)
    return gx[0, 0]


def importance_map(g: np.ndarray, mode: str = MODE_ABS) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if mode == MODE_ABS:
        return np.abs(g)
    if mode == MODE_SQUARE:
        return g * g
    raise ArgumentError(f"mode must be 'abs' or 'square', got {mode!r}")


def normalize(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    lo = m.min()
    hi = m.max()
    if hi == lo:
        return np.zeros_like(m)
    return (m - lo) / (hi - lo)


def compute_saliency(model, x, target: int, mode: str = MODE_ABS,
                     target_source: str = TARGET_TRUE, score: str = "logit") -> SaliencyResult:
    g = input_gradient(model, x, target, score=score)
    m = importance_map(g, mode)
    return SaliencyResult(
        gradient=g,
        importance=m,
        normalized=normalize(m),
        mode=mode,
        target_class=target,
        target_source=target_source,
    )


def project(m: np.ndarray, axis) -> Projection2D:
    ax = _axis_number(axis)
    name = "ijk"[ax]
    return Projection2D(axis=name, values=np.asarray(m, dtype=np.float64).max(axis=ax))


def slice_plane(m: np.ndarray, axis, index: int) -> np.ndarray:
    ax = _axis_number(axis)
    m = np.asarray(m, dtype=np.float64)
    if not (0 <= index < m.shape[ax]):
        raise ArgumentError(
            f"slice index {index} out of range for axis extent {m.shape[ax]}"
        )
    return np.take(m, index, axis=ax).copy()


def rank_bands(m: np.ndarray, occupancy: VoxelGrid) -> RankBandMap:
    m = np.asarray(m, dtype=np.float64)
    occ = occupancy.data
    if occ.shape != m.shape:
        raise ArgumentError(
            f"occupancy dims {occ.shape} do not match saliency dims {m.shape}"
        )
    flat = m.ravel()
    occupied = np.flatnonzero(occ.ravel())
    n = len(occupied)
    if n == 0:
        raise EmptyFormError("no occupied voxels to rank")
    # stable sort on negated values: descending saliency, ties by linear index
    order = occupied[np.argsort(-flat[occupied], kind="stable")]
    base = n // 10
    extra = n % 10
    bands = np.zeros(m.size, dtype=np.int32)
    thresholds = []
    pos = 0
    for band in range(1, 11):
        size = base + (1 if band <= extra else 0)
        chunk = order[pos : pos + size]
        bands[chunk] = band
        pos += size
        if band <= 9:
            if size:
                thresholds.append(float(flat[chunk[-1]]))
            elif thresholds:
                thresholds.append(thresholds[-1])
            else:
                thresholds.append(0.0)
    return RankBandMap(bands=bands.reshape(m.shape), band_thresholds=thresholds)


def to_scalar_grid(values: np.ndarray) -> VoxelGrid:
    """Wrap a real field (saliency or band ids) as a float32 scalar grid."""
    return VoxelGrid(data=np.asarray(values, dtype=np.float32), value_kind=KIND_SCALAR)


def pgm_bytes(matrix: np.ndarray) -> bytes:
    """ASCII PGM (P2): values in [0,1] mapped to 0..255 with round-half-up."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ArgumentError(f"PGM export needs a 2-d matrix, got {matrix.shape}")
    levels = np.floor(np.clip(matrix, 0.0, 1.0) * 255.0 + 0.5).astype(np.int64)
    rows, cols = matrix.shape
    lines = [f"P2", f"{cols} {rows}", "255"]
    for r in range(rows):
        line = []
        length = 0
        for v in levels[r]:
            tok = str(int(v))
            if length and length + 1 + len(tok) > 70:
                lines.append(" ".join(line))
                line = []
                length = 0
            line.append(tok)
            length += len(tok) + (1 if length else 0)
        lines.append(" ".join(line))
    return ("\n".join(lines) + "\n").encode("ascii")


def csv_bytes(matrix: np.ndarray) -> bytes:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ArgumentError(f"CSV export needs a 2-d matrix, got {matrix.shape}")
    lines = [",".join(repr(float(v)) for v in row) for row in matrix]
    return ("\n".join(lines) + "\n").encode("ascii")
