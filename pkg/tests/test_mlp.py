import json
import math
from pathlib import Path

import numpy as np
import pytest

from alphasens import core, mlp, oracle
from alphasens.errors import DimensionMismatch, DivergedTraining, SchemaError, ValidationError

DOCS = Path(__file__).resolve().parents[1] / "docs"


def reference_forward(model, x):
    """Plain loop-based forward pass used as an independent check."""
    act = {"tanh": math.tanh, "sigmoid": lambda z: 1 / (1 + math.exp(-z)),
           "softplus": lambda z: math.log1p(math.exp(z))}
    h = [float(v) for v in x]
    n_layers = len(model.weights)
    for layer, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = [sum(w[r][c] * h[c] for c in range(len(h))) + b[r] for r in range(len(b))]
        h = z if layer == n_layers - 1 else [act[model.activations[layer]](v) for v in z]
    return np.array(h)


def linear_model(w, b):
    w = np.asarray(w, dtype=np.float64)
    return mlp.MlpModel((w.shape[1], w.shape[0]), (w,), (np.asarray(b, dtype=np.float64),), ())


def test_zero_network_outputs_zero():
    model = mlp.MlpModel((3, 4, 2), (np.zeros((4, 3)), np.zeros((2, 4))), (np.zeros(4), np.zeros(2)), "tanh")
    assert np.array_equal(mlp.forward(model, [1.0, 2.0, 3.0]), np.zeros(2))
    assert np.array_equal(mlp.input_jacobian(model, [1.0, 2.0, 3.0]), np.zeros((2, 3)))


def test_linear_layer():
    w, b = [[1.0, 2.0], [3.0, -1.0], [0.5, 0.0]], [0.1, 0.2, 0.3]
    model = linear_model(w, b)
    x = np.array([2.0, -1.0])
    np.testing.assert_allclose(mlp.forward(model, x), np.array(w) @ x + b, rtol=1e-15)
    assert np.array_equal(mlp.input_jacobian(model, x), np.array(w))
    data = core.Dataset(np.random.default_rng(0).standard_normal((5, 2)), ["a", "b"])
    jac = mlp.dataset_jacobian(model, data)
    assert jac.values.shape == (5, 3, 2)
    assert all(np.array_equal(jac.values[i], np.array(w)) for i in range(5))


@pytest.mark.parametrize("activation", sorted(mlp.ACTIVATIONS))
def test_forward_matches_reference(activation):
    rng = np.random.default_rng(3)
    model = mlp.init_model([4, 6, 5, 2], activation, seed=11)
    for _ in range(10):
        x = rng.standard_normal(4)
        np.testing.assert_allclose(mlp.forward(model, x), reference_forward(model, x), rtol=1e-12, atol=1e-12)


def test_mixed_activations_and_batch():
    model = mlp.init_model([3, 4, 4, 1], "tanh", seed=2)
    model = mlp.MlpModel(model.sizes, model.weights, model.biases, ("sigmoid", "softplus"))
    x = np.random.default_rng(1).standard_normal((7, 3))
    batch = mlp.forward(model, x)
    assert batch.shape == (7, 1)
    for i in range(7):
        np.testing.assert_allclose(batch[i], reference_forward(model, x[i]), rtol=1e-12)


def test_single_point_jacobian_matches_dataset_jacobian():
    model = mlp.init_model([3, 5, 2], "tanh", seed=4)
    x = np.array([[0.3, -0.2, 1.0]])
    jac = mlp.dataset_jacobian(model, core.Dataset(x, ["a", "b", "c"]))
    np.testing.assert_allclose(jac.values[0], mlp.input_jacobian(model, x[0]), rtol=1e-15)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(8)
    worst = 0.0
    for trial in range(100):
        sizes = [int(rng.integers(1, 6)), int(rng.integers(1, 9)), int(rng.integers(1, 4))]
        model = mlp.init_model(sizes, sorted(mlp.ACTIVATIONS)[trial % 3], seed=trial)
        x = rng.standard_normal(sizes[0])
        fd = oracle.finite_diff_jacobian(lambda v: mlp.forward(model, v), x, 1e-5)
        worst = max(worst, np.abs(fd - mlp.input_jacobian(model, x)).max())
    assert worst <= 1e-6


def test_dimension_checks():
    model = mlp.init_model([3, 2, 1], seed=0)
    with pytest.raises(DimensionMismatch):
        mlp.forward(model, [1.0, 2.0])
    with pytest.raises(DimensionMismatch):
        mlp.MlpModel((3, 2, 1), model.weights[::-1], model.biases, "tanh")
    with pytest.raises(ValidationError):
        mlp.MlpModel(model.sizes, model.weights, model.biases, "relu")


def test_parameter_gradients_match_finite_differences():
    model = mlp.init_model([2, 1, 1], "tanh", seed=5)
    assert sum(p.size for p in model.parameters()) == 5
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal((16, 2)), rng.standard_normal(16)
    _, grads = mlp.loss_and_gradients(model, x, y)
    params = model.parameters()
    step = 1e-6
    for pi, p in enumerate(params):
        for idx in np.ndindex(p.shape):
            shifted = []
            for sign in (1, -1):
                q = [np.array(a) for a in params]
                q[pi][idx] += sign * step
                shifted.append(mlp.mse(model.with_parameters(q), x, y))
            assert (shifted[0] - shifted[1]) / (2 * step) == pytest.approx(grads[pi][idx], abs=1e-6)


def test_zero_learning_rate_keeps_parameters():
    data = core.Dataset(np.random.default_rng(0).standard_normal((40, 2)), ["a", "b"], np.zeros(40))
    model = mlp.init_model([2, 3, 1], seed=1)
    for opt in ("sgd", "adam"):
        trained, trace = mlp.train(model, data, mlp.TrainConfig(epochs=3, learning_rate=0.0, optimizer=opt))
        assert all(np.array_equal(a, b) for a, b in zip(trained.parameters(), model.parameters()))
        assert len(set(trace)) == 1


def test_linear_fit_reaches_least_squares():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((400, 3))
    w = np.array([[0.5, -1.0, 2.0]])
    data = core.Dataset(x, ["a", "b", "c"], (x @ w.T)[:, 0])
    # least squares recovers w exactly, so the optimum has zero loss
    fitted, *_ = np.linalg.lstsq(x, data.target, rcond=None)
    np.testing.assert_allclose(fitted, w[0], atol=1e-12)
    model, trace = mlp.train(linear_model(np.zeros((1, 3)), [0.0]), data,
                             mlp.TrainConfig(epochs=60, batch_size=16, learning_rate=0.05, optimizer="sgd"))
    assert trace[-1] < 1e-6
    assert trace[-1] <= trace[0]


def test_training_is_deterministic():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((100, 2))
    data = core.Dataset(x, ["a", "b"], np.sin(x[:, 0]) + x[:, 1] ** 2)
    runs = [mlp.train(mlp.init_model([2, 8, 1], seed=3), data, mlp.TrainConfig(epochs=5, seed=9))[0]
            for _ in range(2)]
    assert mlp.save_model(runs[0]) == mlp.save_model(runs[1])


def test_divergence_is_reported():
    x = np.random.default_rng(0).standard_normal((32, 2))
    data = core.Dataset(x, ["a", "b"], 1e3 * x[:, 0])
    with pytest.raises(DivergedTraining) as info:
        mlp.train(linear_model(np.zeros((1, 2)), [0.0]), data,
                  mlp.TrainConfig(epochs=50, learning_rate=1e3, optimizer="sgd"))
    assert info.value.epoch >= 1


def test_save_load_roundtrip():
    params = core.StandardizationParams(np.array([1.0, 2.0]), np.array([0.5, 3.0]), -1.0, 4.0)
    model = mlp.init_model([2, 3, 1], "softplus", seed=9)
    model = mlp.MlpModel(model.sizes, model.weights, model.biases, model.activations, params, ("u", "v"))
    text = mlp.save_model(model)
    back = mlp.load_model(text)
    assert mlp.save_model(back) == text
    assert all(np.array_equal(a, b) for a, b in zip(back.parameters(), model.parameters()))
    assert back.feature_names == ("u", "v")
    assert back.preprocessing.target_max == 4.0


def test_load_errors_carry_paths():
    text = mlp.save_model(mlp.init_model([2, 3, 1], seed=0))
    with pytest.raises(SchemaError):
        mlp.load_model(text[: len(text) // 2])
    doc = json.loads(text)
    doc["weights"][1][0] = doc["weights"][1][0][:-1]
    with pytest.raises(SchemaError, match=r"\$\.weights\[1\]\[0\]"):
        mlp.load_model(doc)
    doc = json.loads(text)
    del doc["biases"]
    with pytest.raises(SchemaError, match=r"\$\.biases"):
        mlp.load_model(doc)
    doc = json.loads(text)
    doc["version"] = 2
    with pytest.raises(SchemaError, match="version"):
        mlp.load_model(doc)


def test_documented_example_model():
    model = mlp.read_model(DOCS / "example_model.json")
    out = mlp.forward(model, [0.5, -1.0, 2.0])
    np.testing.assert_allclose(out, [-0.3864782399594469, -0.10258215307061515], rtol=0, atol=1e-12)
    np.testing.assert_allclose(out, reference_forward(model, [0.5, -1.0, 2.0]), atol=1e-12)


def test_r_squared():
    y = np.array([1.0, 2.0, 3.0])
    assert mlp.r_squared(y, y) == 1.0
    assert mlp.r_squared(y, np.full(3, 2.0)) == 0.0
