"""Confusion matrix and metrics tests, pinned to reference count fixtures."""

import numpy as np
import pytest

from voxelform.errors import ArgumentError, UndefinedMetricError
from voxelform.evaluation import (
    ConfusionMatrix,
    confusion,
    evaluate,
    format_report,
    metrics,
)
from voxelform.voxel import VoxelGrid, save_voxel_file

# Reference confusion counts for the two-rater comparison, positive = machine.
MODEL_CELLS = dict(tp=198, fn=3, fp=12, tn=187)
HUMAN_CELLS = dict(tp=193, fn=8, fp=56, tn=143)
TOL = 5e-5


# --- confusion construction ---


def test_all_human_confusion():
    cm = confusion(["human"] * 4, ["human"] * 4)
    assert cm.cell("human", "human") == 4
    assert cm.total() == 4
    assert cm.counts.sum() == cm.counts[0, 0]


def test_mixed_confusion_counts():
    cm = confusion(["human", "human", "machine", "machine"],
                   ["human", "machine", "machine", "machine"])
    assert cm.cell("human", "human") == 1
    assert cm.cell("human", "machine") == 1
    assert cm.cell("machine", "human") == 0
    assert cm.cell("machine", "machine") == 2


def test_confusion_accepts_integer_ids():
    cm = confusion([0, 0, 1, 1], [0, 1, 1, 1])
    assert cm.cell("human", "human") == 1
    assert cm.cell("machine", "machine") == 2


def test_confusion_order_invariance():
    rng = np.random.default_rng(50)
    labels = rng.integers(0, 2, size=40)
    preds = rng.integers(0, 2, size=40)
    perm = rng.permutation(40)
    a = confusion(labels.tolist(), preds.tolist())
    b = confusion(labels[perm].tolist(), preds[perm].tolist())
    assert np.array_equal(a.counts, b.counts)


def test_confusion_rejects_bad_input():
    with pytest.raises(ArgumentError):
        confusion([], [])
    with pytest.raises(ArgumentError):
        confusion(["human"], ["human", "machine"])
    with pytest.raises(ArgumentError):
        confusion(["human"], ["robot"])
    with pytest.raises(ArgumentError):
        confusion([2], [0])


def test_confusion_matrix_shape_validation():
    with pytest.raises(ArgumentError):
        ConfusionMatrix(np.zeros((3, 3), dtype=np.int64))
    with pytest.raises(ArgumentError):
        ConfusionMatrix(np.array([[1, -1], [0, 0]]))


def test_from_cells_round_trip():
    cm = ConfusionMatrix.from_cells(**MODEL_CELLS)
    assert cm.cell("machine", "machine") == 198
    assert cm.cell("machine", "human") == 3
    assert cm.cell("human", "machine") == 12
    assert cm.cell("human", "human") == 187
    assert cm.total() == 400


# --- metrics against the published counts ---


def test_model_rater_metrics():
    rep = metrics(ConfusionMatrix.from_cells(**MODEL_CELLS))
    assert rep.positive_class == "machine"
    assert rep.recall == 198 / 201
    assert rep.precision == 198 / 210
    assert rep.accuracy == 385 / 400
    assert abs(rep.recall - 0.98507) <= TOL
    assert abs(rep.precision - 0.94286) <= TOL
    assert abs(rep.accuracy - 0.96250) <= TOL


def test_human_rater_recall():
    rep = metrics(ConfusionMatrix.from_cells(**HUMAN_CELLS))
    assert rep.recall == 193 / 201
    assert abs(rep.recall - 0.96020) <= TOL


def test_perfect_matrix():
    rep = metrics(ConfusionMatrix.from_cells(tp=10, fn=0, fp=0, tn=10))
    assert rep.accuracy == 1.0 and rep.precision == 1.0 and rep.recall == 1.0


def test_positive_class_flip():
    cm = ConfusionMatrix.from_cells(**MODEL_CELLS)
    rep = metrics(cm, positive_class="human")
    assert rep.recall == 187 / 199
    assert rep.precision == 187 / 190
    assert rep.accuracy == 385 / 400  # accuracy is symmetric


def test_undefined_metrics_name_the_metric():
    with pytest.raises(UndefinedMetricError, match="precision"):
        metrics(ConfusionMatrix.from_cells(tp=0, fn=5, fp=0, tn=5))
    with pytest.raises(UndefinedMetricError, match="recall"):
        metrics(ConfusionMatrix.from_cells(tp=0, fn=0, fp=3, tn=5))
    with pytest.raises(ArgumentError):
        metrics(ConfusionMatrix.from_cells(**MODEL_CELLS), positive_class="alien")


# --- end-to-end evaluate over voxel files ---


def _write_grid(path, occupied):
    data = np.zeros((16, 16, 16), dtype=np.uint8)
    if occupied == "slab":
        data[:4] = 1
    else:
        data[:8, :8, :8] = 1
    save_voxel_file(VoxelGrid(data=data), path)


def test_evaluate_on_files(tmp_path, tiny_model):
    # tiny_model separates low slabs (class 0) from corner blocks (class 1)
    items = []
    for i in range(3):
        p = tmp_path / f"a{i}.vxg"
        _write_grid(p, "slab")
        items.append((p, "human"))
    for i in range(3):
        p = tmp_path / f"b{i}.vxg"
        _write_grid(p, "block")
        items.append((p, "machine"))
    cm, rep, rows = evaluate(tiny_model, items)
    assert cm.total() == 6
    assert rep.accuracy == 1.0
    assert len(rows) == 6
    for path, t, p, ph, pm in rows:
        assert t == p
        assert abs(ph + pm - 1.0) <= 1e-12


def test_evaluate_empty_items(tiny_model):
    with pytest.raises(ArgumentError):
        evaluate(tiny_model, [])


def test_format_report_structure():
    cm = confusion(["human", "machine"], ["human", "machine"])
    rep = metrics(cm)
    rows = [("x.vxg", "human", "human", 0.75, 0.25),
            ("y.vxg", "machine", "machine", 0.1, 0.9)]
    text = format_report(cm, rep, rows)
    lines = text.splitlines()
    assert lines[0] == "path,true_label,pred_label,p_human,p_machine"
    assert lines[1] == "x.vxg,human,human,0.75,0.25"
    assert "# human_human,1" in lines
    assert "# machine_machine,1" in lines
    assert "# accuracy,1" in lines
    assert "# positive_class,machine" in lines
    assert text.endswith("\n")
