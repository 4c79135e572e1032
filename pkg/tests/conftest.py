import numpy as np
import pytest

from voxelform.layers import softmax
from voxelform.model import ModelConfig, build_model
from voxelform.training import TrainConfig, train


class _LinearForward:
    def __init__(self, logits, x_shape):
        self.logits = logits
        self.probs = softmax(logits)
        self.x_shape = x_shape


class LinearFixtureModel:
    """Flatten -> dense, no conv blocks: gradient of logit c is weights[c]."""

    def __init__(self, weights, bias):
        self.weights = np.asarray(weights, dtype=np.float64)  # (C, R^3)
        self.bias = np.asarray(bias, dtype=np.float64)

    @property
    def num_classes(self):
        return self.weights.shape[0]

    def forward(self, x, mode="infer"):
        x = np.asarray(x, dtype=np.float64)
        flat = x.reshape(x.shape[0], -1)
        return _LinearForward(flat @ self.weights.T + self.bias, x.shape)

    def backward_from_logits(self, fwd, grad_logits):
        gx = np.asarray(grad_logits) @ self.weights
        return gx.reshape(fwd.x_shape), []

CUBE_OBJ = """# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 4 7 3
f 4 8 7
f 1 5 8
f 1 8 4
f 2 3 7
f 2 7 6
"""


@pytest.fixture
def cube_obj_path(tmp_path):
    path = tmp_path / "cube.obj"
    path.write_text(CUBE_OBJ)
    return str(path)


@pytest.fixture(scope="session")
def tiny_model():
    """A small trained model (resolution 16) with populated BN statistics.

    Trained for a couple of epochs on an easily separable pair so that
    inference-mode layers have meaningful running statistics.  Session
    scoped: tests must not mutate it.
    """
    rng = np.random.default_rng(1234)
    x = np.zeros((4, 16, 16, 16))
    x[0, :4] = 1.0
    x[1, :, :4] = 1.0
    x[2, :8, :8, :8] = 1.0
    x[3, 4:12, 4:12, 4:12] = (rng.random((8, 8, 8)) > 0.5).astype(float)
    y = np.array([0, 0, 1, 1], dtype=np.int64)
    model = build_model(ModelConfig(resolution=16, channels=(2, 2, 2, 2)), seed=7)
    train(model, (x, y), (x, y), TrainConfig(seed=7, epochs=16, batch_size=4))
    return model
