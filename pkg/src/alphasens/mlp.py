"""Small feedforward regressor with analytic input Jacobians.

Only smooth hidden activations are offered (tanh, sigmoid, softplus), so the
trained model is twice continuously differentiable. The output layer is
affine.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .core import Dataset, JacobianTensor, StandardizationParams
from .errors import DimensionMismatch, DivergedTraining, NonFinite, SchemaError, ValidationError

MODEL_VERSION = 1
_JACOBIAN_CHUNK = 4096


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softplus(z):
    return np.logaddexp(0.0, z)


# activation -> (value, derivative)
ACTIVATIONS = {
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "sigmoid": (_sigmoid, lambda z: _sigmoid(z) * (1.0 - _sigmoid(z))),
    "softplus": (_softplus, _sigmoid),
}


@dataclass(frozen=True)
class MlpModel:
    sizes: tuple
    weights: tuple
    biases: tuple
    activations: tuple
    preprocessing: Optional[StandardizationParams] = None
    feature_names: Optional[tuple] = None

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValidationError(f"layer sizes must have length >= 2 and be positive: {sizes}")
        n_layers = len(sizes) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise DimensionMismatch(f"{n_layers} layers need {n_layers} weight matrices and bias vectors")
        acts = (self.activations,) * (n_layers - 1) if isinstance(self.activations, str) else tuple(self.activations)
        if len(acts) != n_layers - 1:
            raise DimensionMismatch(f"{n_layers - 1} hidden layers need as many activations, got {len(acts)}")
        for a in acts:
            if a not in ACTIVATIONS:
                raise ValidationError(f"unsupported activation {a!r}; choose from {sorted(ACTIVATIONS)}")
        weights, biases = [], []
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.array(w, dtype=np.float64)
            b = np.array(b, dtype=np.float64)
            if w.shape != (sizes[layer + 1], sizes[layer]) or b.shape != (sizes[layer + 1],):
                raise DimensionMismatch(
                    f"layer {layer}: weight {w.shape} / bias {b.shape} do not fit sizes {sizes}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NonFinite(f"layer {layer} has non-finite parameters")
            w.flags.writeable = False
            b.flags.writeable = False
            weights.append(w)
            biases.append(b)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "weights", tuple(weights))
        object.__setattr__(self, "biases", tuple(biases))
        object.__setattr__(self, "activations", acts)
        if self.feature_names is not None:
            names = tuple(str(n) for n in self.feature_names)
            if len(names) != sizes[0]:
                raise DimensionMismatch(f"{len(names)} feature names for {sizes[0]} inputs")
            object.__setattr__(self, "feature_names", names)

    @property
    def n_inputs(self) -> int:
        return self.sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.sizes[-1]

    def parameters(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def with_parameters(self, params) -> "MlpModel":
        return replace(self, weights=tuple(params[0::2]), biases=tuple(params[1::2]))


def init_model(sizes, activation="tanh", seed=0) -> MlpModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpModel(tuple(sizes), tuple(weights), tuple(biases), activation)


def _as_batch(model: MlpModel, x) -> tuple:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != model.n_inputs:
        raise DimensionMismatch(f"model expects {model.n_inputs} inputs, got shape {x.shape}")
    if not np.all(np.isfinite(batch)):
        raise NonFinite("input contains NaN or Inf")
    return batch, single


def _forward_raw(weights, biases, activations, batch) -> tuple:
    """Pre-activations and activations of every layer, batch-major."""
    pre, post = [], [batch]
    a = batch
    last = len(weights) - 1
    for layer, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w.T + b
        pre.append(z)
        a = z if layer == last else ACTIVATIONS[activations[layer]][0](z)
        post.append(a)
    return pre, post


def _forward_cache(model: MlpModel, batch: np.ndarray) -> tuple:
    return _forward_raw(model.weights, model.biases, model.activations, batch)


def forward(model: MlpModel, x) -> np.ndarray:
    """Model output for a length-n vector or an (N, n) batch."""
    batch, single = _as_batch(model, x)
    out = _forward_cache(model, batch)[1][-1]
    return out[0] if single else out


def _batch_jacobian(model: MlpModel, batch: np.ndarray) -> np.ndarray:
    pre, _ = _forward_cache(model, batch)
    jac = np.broadcast_to(model.weights[0], (batch.shape[0],) + model.weights[0].shape)
    for layer in range(1, len(model.weights)):
        slope = ACTIVATIONS[model.activations[layer - 1]][1](pre[layer - 1])
        jac = np.einsum("oh,nhi->noi", model.weights[layer], slope[:, :, None] * jac)
    return np.array(jac)


def input_jacobian(model: MlpModel, x) -> np.ndarray:
    """Exact m x n Jacobian of the outputs with respect to the inputs at ``x``."""
    batch, single = _as_batch(model, x)
    if not single:
        raise DimensionMismatch("input_jacobian takes a single point; use dataset_jacobian for batches")
    return _batch_jacobian(model, batch)[0]


def dataset_jacobian(model: MlpModel, dataset: Dataset) -> JacobianTensor:
    batch, _ = _as_batch(model, dataset.features)
    blocks = [_batch_jacobian(model, batch[s:s + _JACOBIAN_CHUNK])
              for s in range(0, batch.shape[0], _JACOBIAN_CHUNK)]
    return JacobianTensor(np.concatenate(blocks, axis=0), dataset.feature_names)


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    loss: str = "mse"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise ValidationError("learning_rate must be nonnegative")
        if self.optimizer not in ("sgd", "adam"):
            raise ValidationError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.loss != "mse":
            raise ValidationError("only the mse loss is supported")


def _targets(model: MlpModel, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[1] != model.n_outputs:
        raise DimensionMismatch(f"targets have {y.shape[1]} columns, model has {model.n_outputs} outputs")
    return y


def mse(model: MlpModel, x, y) -> float:
    batch, _ = _as_batch(model, x)
    resid = forward(model, batch) - _targets(model, y)
    return float(np.mean(resid * resid))


def _loss_and_gradients_raw(weights, biases, activations, batch, y) -> tuple:
    pre, post = _forward_raw(weights, biases, activations, batch)
    resid = post[-1] - y
    loss = float(np.mean(resid * resid))
    delta = 2.0 * resid / resid.size
    grads = [None] * (2 * len(weights))
    for layer in range(len(weights) - 1, -1, -1):
        grads[2 * layer] = delta.T @ post[layer]
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer:
            slope = ACTIVATIONS[activations[layer - 1]][1](pre[layer - 1])
            delta = (delta @ weights[layer]) * slope
    return loss, grads


def loss_and_gradients(model: MlpModel, x, y) -> tuple:
    """Mean squared error and its gradient for every parameter array.

    Gradients come back in the order of ``model.parameters()``.
    """
    batch, _ = _as_batch(model, x)
    return _loss_and_gradients_raw(model.weights, model.biases, model.activations,
                                   batch, _targets(model, y))


def train(model: MlpModel, dataset: Dataset, config: TrainConfig = TrainConfig()) -> tuple:
    """Minibatch training on (features, target); returns (model, loss trace).

    ``trace[0]`` is the full-data MSE before training, ``trace[e]`` after
    epoch ``e``. The input model is left untouched.
    """
    if dataset.target is None:
        raise ValidationError("training needs a dataset with a target")
    x, _ = _as_batch(model, dataset.features)
    y = _targets(model, dataset.target)
    rng = np.random.default_rng(config.seed)
    params = [np.array(p) for p in model.parameters()]
    first = [np.zeros_like(p) for p in params]
    second = [np.zeros_like(p) for p in params]
    trace = [mse(model, x, y)]
    step = 0
    b1, b2, lr = config.beta1, config.beta2, config.learning_rate
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(x.shape[0])
        for start in range(0, x.shape[0], config.batch_size):
            idx = order[start:start + config.batch_size]
            _, grads = _loss_and_gradients_raw(params[0::2], params[1::2], model.activations,
                                               x[idx], y[idx])
            step += 1
            if config.optimizer == "sgd":
                for p, g in zip(params, grads):
                    p -= lr * g
                continue
            scale = lr * math.sqrt(1 - b2 ** step) / (1 - b1 ** step)
            eps = config.adam_eps * math.sqrt(1 - b2 ** step)
            for p, g, m, v in zip(params, grads, first, second):
                m *= b1
                m += (1 - b1) * g
                v *= b2
                v += (1 - b2) * g * g
                p -= scale * m / (np.sqrt(v) + eps)
        with np.errstate(all="ignore"):
            loss = float(np.mean((_forward_raw(params[0::2], params[1::2], model.activations, x)[1][-1] - y) ** 2))
        if not math.isfinite(loss) or not all(np.all(np.isfinite(p)) for p in params):
            raise DivergedTraining(epoch)
        trace.append(loss)
    return model.with_parameters([p.copy() for p in params]), trace


def r_squared(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    ss_res = np.sum((y_true - y_pred) ** 2)
    ss_tot = np.sum((y_true - y_true.mean()) ** 2)
    return float(1.0 - ss_res / ss_tot)


# ---------------------------------------------------------------------------
# persistence


def model_to_dict(model: MlpModel) -> dict:
    acts = model.activations
    doc = {
        "version": MODEL_VERSION,
        "sizes": list(model.sizes),
        "activation": acts[0] if acts and len(set(acts)) == 1 else list(acts),
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    if model.preprocessing is not None:
        doc["preprocessing"] = model.preprocessing.to_dict()
    if model.feature_names is not None:
        doc["feature_names"] = list(model.feature_names)
    return doc


def save_model(model: MlpModel) -> str:
    """Serialize to the versioned JSON document (row-major weights)."""
    return json.dumps(model_to_dict(model), indent=1) + "\n"


def _expect(cond, path, message):
    if not cond:
        raise SchemaError(path, message)


def _number_matrix(value, path, rows, cols):
    _expect(isinstance(value, list) and len(value) == rows, path, f"expected a list of {rows} rows")
    for r, row in enumerate(value):
        _number_vector(row, f"{path}[{r}]", cols)


def _number_vector(value, path, length):
    _expect(isinstance(value, list) and len(value) == length, path, f"expected a list of {length} numbers")
    for i, v in enumerate(value):
        _expect(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v),
                f"{path}[{i}]", "expected a finite number")


def load_model(document) -> MlpModel:
    """Parse a model document (JSON text or already-decoded dict)."""
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError("$", f"invalid JSON: {exc}") from None
    else:
        doc = document
    _expect(isinstance(doc, dict), "$", "expected an object")
    for key in ("version", "sizes", "activation", "weights", "biases"):
        _expect(key in doc, f"$.{key}", "missing")
    _expect(doc["version"] == MODEL_VERSION, "$.version", f"unsupported version {doc['version']!r}")
    sizes = doc["sizes"]
    _expect(isinstance(sizes, list) and len(sizes) >= 2
            and all(isinstance(s, int) and not isinstance(s, bool) and s >= 1 for s in sizes),
            "$.sizes", "expected at least two positive integers")
    n_layers = len(sizes) - 1
    act = doc["activation"]
    if isinstance(act, str):
        _expect(act in ACTIVATIONS, "$.activation", f"unsupported activation {act!r}")
        acts = (act,) * (n_layers - 1)
    else:
        _expect(isinstance(act, list) and len(act) == n_layers - 1, "$.activation",
                f"expected a name or a list of {n_layers - 1} names")
        for i, a in enumerate(act):
            _expect(a in ACTIVATIONS, f"$.activation[{i}]", f"unsupported activation {a!r}")
        acts = tuple(act)
    _expect(isinstance(doc["weights"], list) and len(doc["weights"]) == n_layers,
            "$.weights", f"expected {n_layers} matrices")
    _expect(isinstance(doc["biases"], list) and len(doc["biases"]) == n_layers,
            "$.biases", f"expected {n_layers} vectors")
    for layer in range(n_layers):
        _number_matrix(doc["weights"][layer], f"$.weights[{layer}]", sizes[layer + 1], sizes[layer])
        _number_vector(doc["biases"][layer], f"$.biases[{layer}]", sizes[layer + 1])
    prep = None
    if "preprocessing" in doc:
        p = doc["preprocessing"]
        _expect(isinstance(p, dict), "$.preprocessing", "expected an object")
        for key in ("mean", "std"):
            _expect(key in p, f"$.preprocessing.{key}", "missing")
            _number_vector(p[key], f"$.preprocessing.{key}", sizes[0])
        try:
            prep = StandardizationParams.from_dict(p)
        except ValidationError as exc:
            raise SchemaError("$.preprocessing", str(exc)) from None
    names = doc.get("feature_names")
    if names is not None:
        _expect(isinstance(names, list) and len(names) == sizes[0]
                and all(isinstance(n, str) for n in names),
                "$.feature_names", f"expected {sizes[0]} strings")
        names = tuple(names)
    return MlpModel(tuple(sizes),
                    tuple(np.asarray(w, dtype=np.float64) for w in doc["weights"]),
                    tuple(np.asarray(b, dtype=np.float64) for b in doc["biases"]),
                    acts, prep, names)


def write_model(path, model: MlpModel):
    Path(path).write_text(save_model(model))


def read_model(path) -> MlpModel:
    return load_model(Path(path).read_text())
