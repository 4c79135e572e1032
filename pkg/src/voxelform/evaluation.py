"""Confusion matrices and the accuracy / precision / recall suite.

Metrics are computed in exact rational arithmetic and converted to float at
the end, so stored integer counts reproduce to full double precision.  The
positive class defaults to "machine", the convention under which recall
TP/(TP+FN) reads as the machine-detection rate.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .classes import CLASS_IDS, ID_LABELS, LABEL_HUMAN, LABEL_MACHINE
from .errors import ArgumentError, UndefinedMetricError
from .model import Model, forward
from .voxel import load_voxel_file


@dataclass
class ConfusionMatrix:
    # counts[true_id][pred_id], ids 0 = human, 1 = machine
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (2, 2):
            raise ArgumentError(f"confusion matrix must be 2x2, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ArgumentError("confusion counts must be non-negative")

    @classmethod
    def from_cells(cls, tp: int, fn: int, fp: int, tn: int,
                   positive: str = LABEL_MACHINE) -> "ConfusionMatrix":
        """Build from TP/FN/FP/TN stated relative to a positive class."""
        pos = CLASS_IDS[positive]
        neg = 1 - pos
        counts = np.zeros((2, 2), dtype=np.int64)
        counts[pos, pos] = tp
        counts[pos, neg] = fn
        counts[neg, pos] = fp
        counts[neg, neg] = tn
        return cls(counts)

    def total(self) -> int:
        return int(self.counts.sum())

    def cell(self, true_label: str, pred_label: str) -> int:
        return int(self.counts[CLASS_IDS[true_label], CLASS_IDS[pred_label]])


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    positive_class: str


def _norm_label(value) -> int:
    if isinstance(value, str):
        if value not in CLASS_IDS:
            raise ArgumentError(f"labels must be 'human' or 'machine', got {value!r}")
        return CLASS_IDS[value]
    value = int(value)
    if value not in ID_LABELS:
        raise ArgumentError(f"class ids must be 0 or 1, got {value}")
    return value


def confusion(labels, predictions) -> ConfusionMatrix:
    labels = list(labels)
    predictions = list(predictions)
    if not labels:
        raise ArgumentError("cannot build a confusion matrix from zero items")
    if len(labels) != len(predictions):
        raise ArgumentError(
            f"{len(labels)} labels but {len(predictions)} predictions"
        )
    counts = np.zeros((2, 2), dtype=np.int64)
    for t, p in zip(labels, predictions):
        counts[_norm_label(t), _norm_label(p)] += 1
    return ConfusionMatrix(counts)


def metrics(cm: ConfusionMatrix, positive_class: str = LABEL_MACHINE) -> MetricsReport:
    if positive_class not in CLASS_IDS:
        raise ArgumentError(f"positive_class must be 'human' or 'machine', got {positive_class!r}")
    pos = CLASS_IDS[positive_class]
    neg = 1 - pos
    tp = int(cm.counts[pos, pos])
    fn = int(cm.counts[pos, neg])
    fp = int(cm.counts[neg, pos])
    tn = int(cm.counts[neg, neg])
    total = tp + fn + fp + tn
    if total == 0:
        raise UndefinedMetricError("accuracy undefined: empty confusion matrix")
    if tp + fp == 0:
        raise UndefinedMetricError("precision undefined: no predicted positives")
    if tp + fn == 0:
        raise UndefinedMetricError("recall undefined: no true positives in data")
    accuracy = Fraction(tp + tn, total)
    precision = Fraction(tp, tp + fp)
    recall = Fraction(tp, tp + fn)
    return MetricsReport(
        accuracy=float(accuracy),
        precision=float(precision),
        recall=float(recall),
        positive_class=positive_class,
    )


def predict_batch(model: Model, grids: np.ndarray, batch_size: int = 8):
    """Infer-mode probabilities and argmax predictions (ties to lower id)."""
    grids = np.ascontiguousarray(grids, dtype=np.float64)
    if grids.ndim == 4:
        grids = grids[:, None]
    probs = []
    for start in range(0, len(grids), batch_size):
        fwd = forward(model, grids[start : start + batch_size], mode="infer")
        probs.append(fwd.probs)
    probs = np.concatenate(probs, axis=0)
    preds = probs.argmax(axis=1)
    return probs, preds


def evaluate(model: Model, items, batch_size: int = 8):
    """Run the model over (path, label) pairs of voxel files.

    Returns (ConfusionMatrix, MetricsReport, rows) where each row is
    (path, true_label, pred_label, p_human, p_machine).
    """
    items = list(items)
    if not items:
        raise ArgumentError("evaluation needs at least one item")
    grids = []
    true_ids = []
    for path, label in items:
        grid = load_voxel_file(path)
        grids.append(grid.data.astype(np.float64))
        true_ids.append(_norm_label(label))
    grids = np.stack(grids)
    probs, preds = predict_batch(model, grids, batch_size)
    rows = []
    for (path, _), t, p, pr in zip(items, true_ids, preds, probs):
        rows.append((str(path), ID_LABELS[t], ID_LABELS[int(p)], float(pr[0]), float(pr[1])))
    cm = confusion(true_ids, preds.tolist())
    report = metrics(cm)
    return cm, report, rows


def format_report(cm: ConfusionMatrix, report: MetricsReport, rows) -> str:
    lines = ["path,true_label,pred_label,p_human,p_machine"]
    for path, t, p, ph, pm in rows:
        lines.append(f"{path},{t},{p},{ph:.9g},{pm:.9g}")
    lines.append("# confusion counts: true_pred")
    for t in (LABEL_HUMAN, LABEL_MACHINE):
        for p in (LABEL_HUMAN, LABEL_MACHINE):
            lines.append(f"# {t}_{p},{cm.cell(t, p)}")
    lines.append(f"# positive_class,{report.positive_class}")
    lines.append(f"# accuracy,{report.accuracy:.9g}")
    lines.append(f"# precision,{report.precision:.9g}")
    lines.append(f"# recall,{report.recall:.9g}")
    return "\n".join(lines) + "\n"
