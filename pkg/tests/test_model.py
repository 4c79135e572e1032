"""Model assembly, forward shapes, and checkpoint format tests."""

import numpy as np
import pytest

from voxelform.errors import ConfigError, FormatError, ShapeError
from voxelform.model import (
    Model,
    ModelConfig,
    build_model,
    forward,
    load_checkpoint,
    load_checkpoint_file,
    save_checkpoint,
    save_checkpoint_file,
)


def test_build_is_deterministic():
    cfg = ModelConfig(resolution=16, channels=(2, 3, 4, 5))
    a = save_checkpoint(build_model(cfg, seed=99))
    b = save_checkpoint(build_model(cfg, seed=99))
    assert a == b
    c = save_checkpoint(build_model(cfg, seed=100))
    assert a != c


def test_flatten_width_res32():
    cfg = ModelConfig(resolution=32, channels=(8, 16, 32, 64))
    assert cfg.flat_width == 64 * 2 * 2 * 2  # 512


def test_resolution_must_divide_by_16():
    with pytest.raises(ConfigError):
        ModelConfig(resolution=24)
    with pytest.raises(ConfigError):
        ModelConfig(resolution=0)


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(resolution=16, channels=(2, 2, 2))
    with pytest.raises(ConfigError):
        ModelConfig(resolution=16, channels=(2, 2, 2, 0))
    with pytest.raises(ConfigError):
        ModelConfig(resolution=16, num_classes=1)


def test_zero_weights_give_uniform_probs():
    model = build_model(ModelConfig(resolution=16, channels=(2, 2, 2, 2)), seed=1)
    for p in model.parameters():
        p[...] = 0.0
    x = np.random.default_rng(2).random((3, 1, 16, 16, 16))
    fwd = forward(model, x, mode="train")
    assert np.allclose(fwd.probs, 0.5, atol=1e-12)


def test_probs_rows_sum_to_one(tiny_model):
    x = np.random.default_rng(3).random((4, 1, 16, 16, 16))
    fwd = forward(tiny_model, x, mode="infer")
    assert np.max(np.abs(fwd.probs.sum(axis=1) - 1.0)) <= 1e-12


def test_activation_spatial_sizes_res32():
    model = build_model(ModelConfig(resolution=32, channels=(2, 2, 2, 2)), seed=4)
    x = np.random.default_rng(5).random((1, 1, 32, 32, 32))
    fwd = forward(model, x, mode="train")
    sizes = [act.shape[2] for act in fwd.activations]
    assert sizes == [16, 8, 4, 2]


def test_parameter_count_and_order():
    model = build_model(ModelConfig(resolution=16, channels=(2, 2, 2, 2)), seed=6)
    params = model.parameters()
    assert len(params) == 4 * 4 + 2  # conv w/b + bn gamma/beta per block, dense w/b
    assert params[0].shape == (2, 1, 3, 3, 3)
    assert params[-2].shape == (model.config.num_classes, model.config.flat_width)


def test_checkpoint_round_trip_bitwise(tiny_model):
    raw = save_checkpoint(tiny_model)
    back = load_checkpoint(raw)
    assert save_checkpoint(back) == raw
    x = np.random.default_rng(7).random((2, 1, 16, 16, 16))
    a = forward(tiny_model, x, mode="infer").probs
    b = forward(back, x, mode="infer").probs
    assert np.array_equal(a, b)
    assert back.epochs_completed == tiny_model.epochs_completed
    assert back.seed == tiny_model.seed


def test_checkpoint_file_round_trip(tiny_model, tmp_path):
    path = tmp_path / "m.asn"
    save_checkpoint_file(tiny_model, path)
    back = load_checkpoint_file(path)
    assert save_checkpoint(back) == save_checkpoint(tiny_model)


def test_checkpoint_truncated_payload(tiny_model):
    raw = save_checkpoint(tiny_model)
    with pytest.raises(FormatError):
        load_checkpoint(raw[: len(raw) // 2])


def test_checkpoint_trailing_bytes(tiny_model):
    raw = save_checkpoint(tiny_model)
    with pytest.raises(FormatError):
        load_checkpoint(raw + b"\x00")


def test_checkpoint_bad_magic_and_version(tiny_model):
    raw = save_checkpoint(tiny_model)
    with pytest.raises(FormatError):
        load_checkpoint(b"XXXX" + raw[4:])
    bad_version = raw[:4] + b"\x02\x00\x00\x00" + raw[8:]
    with pytest.raises(FormatError):
        load_checkpoint(bad_version)


def test_checkpoint_rejects_negative_running_var():
    model = build_model(ModelConfig(resolution=16, channels=(2, 2, 2, 2)), seed=8)
    model.blocks[0][1].running_var[0] = -1.0
    raw = save_checkpoint(model)
    with pytest.raises(FormatError):
        load_checkpoint(raw)


def test_wrong_resolution_input_is_shape_error(tiny_model):
    with pytest.raises(ShapeError) as err:
        forward(tiny_model, np.zeros((1, 1, 32, 32, 32)), mode="infer")
    assert "16" in str(err.value)


def test_infer_never_mutates_model(tiny_model):
    before = save_checkpoint(tiny_model)
    x = np.random.default_rng(9).random((2, 1, 16, 16, 16))
    forward(tiny_model, x, mode="infer")
    assert save_checkpoint(tiny_model) == before


def test_argmax_invariant_to_uniform_bias_shift(tiny_model):
    x = np.random.default_rng(10).random((4, 1, 16, 16, 16))
    base = forward(tiny_model, x, mode="infer").probs.argmax(axis=1)
    shifted = load_checkpoint(save_checkpoint(tiny_model))
    shifted.dense.bias += 7.25
    moved = forward(shifted, x, mode="infer").probs.argmax(axis=1)
    assert np.array_equal(base, moved)
