"""Finite-difference gradient checks for every layer and the full chain.

Each trial draws fresh small tensors, forms the scalar f = sum(R * output)
with a fixed random weighting R, gets analytic gradients from the backward
pass with grad_y = R, and compares a random subset of coordinates against
central differences (h = 1e-5).  The relative tolerance is 1e-6 with a
1e-3 magnitude floor (see oracles.grad_rel_err).
"""

import numpy as np
import pytest

from voxelform.errors import ArgumentError
from voxelform.layers import (
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
from voxelform.model import ModelConfig, build_model, forward
from voxelform.saliency import input_gradient
from voxelform.training import TrainConfig, cross_entropy, train

from oracles import central_diff_at, grad_rel_err

TOL = 1e-6
H = 1e-5
TRIALS = 100


def _spot_check(f, tensor, analytic, rng, count=2, tol=TOL):
    idx = rng.integers(0, tensor.size, size=count)
    numeric = central_diff_at(f, tensor, idx, h=H)
    for i, num in zip(idx, numeric):
        ana = analytic.reshape(-1)[i]
        err = grad_rel_err(ana, num)
        assert err <= tol, f"index {i}: analytic {ana} vs numeric {num} (err {err})"


def test_conv_gradcheck():
    rng = np.random.default_rng(40)
    for _ in range(TRIALS):
        stride = int(rng.integers(1, 3))
        padding = int(rng.integers(0, 2))
        k = int(rng.integers(1, 4))
        size = max(k - 2 * padding, 1) + int(rng.integers(0, 3))
        x = rng.uniform(-1, 1, size=(2, 2, size, size, size))
        p = Conv3dParams(
            rng.uniform(-1, 1, size=(2, 2, k, k, k)),
            rng.uniform(-1, 1, size=2),
            stride=stride,
            padding=padding,
        )
        y0, _ = conv3d_forward(x, p)
        r = rng.uniform(-1, 1, size=y0.shape)

        def f():
            y, _ = conv3d_forward(x, p)
            return np.sum(r * y)

        y, ctx = conv3d_forward(x, p)
        gx, gw, gb = conv3d_backward(r, ctx, p)
        _spot_check(f, x, gx, rng)
        _spot_check(f, p.weights, gw, rng)
        _spot_check(f, p.bias, gb, rng, count=1)


def test_batchnorm_train_gradcheck():
    rng = np.random.default_rng(41)
    for _ in range(TRIALS):
        c = int(rng.integers(1, 3))
        x = rng.uniform(-1, 1, size=(2, c, 2, 2, 2))
        p = BatchNormParams.create(c)
        p.gamma = rng.uniform(0.5, 1.5, size=c)
        p.beta = rng.uniform(-0.5, 0.5, size=c)
        y0, _ = batchnorm_forward(x, p, mode="train")
        r = rng.uniform(-1, 1, size=y0.shape)

        def f():
            y, _ = batchnorm_forward(x, p, mode="train")
            return np.sum(r * y)

        y, ctx = batchnorm_forward(x, p, mode="train")
        gx, ggamma, gbeta = batchnorm_backward(r, ctx, p)
        _spot_check(f, x, gx, rng)
        _spot_check(f, p.gamma, ggamma, rng, count=1)
        _spot_check(f, p.beta, gbeta, rng, count=1)


def test_batchnorm_infer_gradcheck():
    rng = np.random.default_rng(42)
    for _ in range(TRIALS // 4):
        c = int(rng.integers(1, 3))
        p = BatchNormParams.create(c)
        p.gamma = rng.uniform(0.5, 1.5, size=c)
        batchnorm_forward(rng.uniform(-1, 1, size=(2, c, 2, 2, 2)), p, mode="train")
        x = rng.uniform(-1, 1, size=(2, c, 2, 2, 2))
        y0, _ = batchnorm_forward(x, p, mode="infer")
        r = rng.uniform(-1, 1, size=y0.shape)

        def f():
            y, _ = batchnorm_forward(x, p, mode="infer")
            return np.sum(r * y)

        y, ctx = batchnorm_forward(x, p, mode="infer")
        gx, _, _ = batchnorm_backward(r, ctx, p)
        _spot_check(f, x, gx, rng)


def test_relu_gradcheck_away_from_kink():
    rng = np.random.default_rng(43)
    for _ in range(TRIALS):
        x = rng.uniform(0.05, 1, size=(3, 4)) * rng.choice([-1.0, 1.0], size=(3, 4))
        r = rng.uniform(-1, 1, size=x.shape)

        def f():
            y, _ = relu_forward(x)
            return np.sum(r * y)

        y, ctx = relu_forward(x)
        gx = relu_backward(r, ctx)
        _spot_check(f, x, gx, rng, count=3)


def test_maxpool_gradcheck_unique_maxima():
    rng = np.random.default_rng(44)
    for _ in range(TRIALS):
        # distinct values with gaps far exceeding the step h
        vals = rng.permutation(64) / 64.0
        x = vals.reshape(1, 1, 4, 4, 4)
        r = rng.uniform(-1, 1, size=(1, 1, 2, 2, 2))

        def f():
            y, _ = maxpool3d_forward(x)
            return np.sum(r * y)

        y, ctx = maxpool3d_forward(x)
        gx = maxpool3d_backward(r, ctx)
        _spot_check(f, x, gx, rng, count=4)


def test_dense_gradcheck():
    rng = np.random.default_rng(45)
    for _ in range(TRIALS):
        n = int(rng.integers(1, 4))
        cin = int(rng.integers(1, 5))
        cout = int(rng.integers(1, 4))
        x = rng.uniform(-1, 1, size=(n, cin))
        p = DenseParams(rng.uniform(-1, 1, size=(cout, cin)),
                        rng.uniform(-1, 1, size=cout))
        r = rng.uniform(-1, 1, size=(n, cout))

        def f():
            y, _ = dense_forward(x, p)
            return np.sum(r * y)

        y, ctx = dense_forward(x, p)
        gx, gw, gb = dense_backward(r, ctx, p)
        _spot_check(f, x, gx, rng)
        _spot_check(f, p.weights, gw, rng)
        _spot_check(f, p.bias, gb, rng, count=1)


def test_softmax_cross_entropy_gradcheck():
    rng = np.random.default_rng(46)
    for _ in range(TRIALS):
        n = int(rng.integers(1, 4))
        c = int(rng.integers(2, 5))
        logits = rng.uniform(-2, 2, size=(n, c))
        labels = rng.integers(0, c, size=n)

        def f():
            loss, _ = cross_entropy(softmax(logits), labels)
            return loss

        _, glogits = cross_entropy(softmax(logits), labels)
        _spot_check(f, logits, glogits, rng, count=3)


def test_end_to_end_input_gradient_real_model():
    """Full chain through conv/BN(infer)/ReLU/pool/dense at resolution 16."""
    rng = np.random.default_rng(47)
    model = build_model(ModelConfig(resolution=16, channels=(2, 2, 2, 2)), seed=3)
    # one training epoch seeds the BN running statistics
    x_train = rng.random((4, 16, 16, 16))
    y_train = np.array([0, 1, 0, 1])
    train(model, (x_train, y_train), (x_train, y_train),
          TrainConfig(seed=3, epochs=1, batch_size=4))

    x = rng.random((16, 16, 16))
    for target in (0, 1):
        g = input_gradient(model, x, target)

        def f():
            fwd = forward(model, x[None, None], mode="infer")
            return fwd.logits[0, target]

        idx = rng.integers(0, x.size, size=12)
        numeric = central_diff_at(f, x, idx, h=H)
        for i, num in zip(idx, numeric):
            ana = g.reshape(-1)[i]
            err = grad_rel_err(ana, num)
            assert err <= 1e-5, f"voxel {i}: {ana} vs {num} (err {err})"


def test_end_to_end_linear_fixture():
    from conftest import LinearFixtureModel

    rng = np.random.default_rng(48)
    w = rng.uniform(-1, 1, size=(2, 64))
    model = LinearFixtureModel(w, rng.uniform(-1, 1, size=2))
    x = rng.random((4, 4, 4))
    g = input_gradient(model, x, 1)
    # gradient of a linear map is the weight row, exactly
    assert np.array_equal(g, w[1].reshape(4, 4, 4))

    def f():
        return model.forward(x[None, None]).logits[0, 1]

    idx = rng.integers(0, 64, size=10)
    numeric = central_diff_at(f, x, idx, h=H)
    for i, num in zip(idx, numeric):
        assert grad_rel_err(g.reshape(-1)[i], num) <= 1e-5


def test_input_gradient_target_out_of_range():
    from conftest import LinearFixtureModel

    model = LinearFixtureModel(np.zeros((2, 8)), np.zeros(2))
    with pytest.raises(ArgumentError):
        input_gradient(model, np.zeros((2, 2, 2)), 2)
