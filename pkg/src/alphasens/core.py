"""Shared domain types, preprocessing and file ingestion."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ConstantColumn,
    DegenerateTarget,
    DimensionMismatch,
    EmptyInput,
    NonFinite,
    SchemaError,
    ValidationError,
)

# ddof for feature standardization (sample convention)
STANDARDIZE_DDOF = 1


def _frozen(array, ndim, name):
    arr = np.array(array, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"{name} contains NaN or Inf")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Dataset:
    """N samples of n named features, with an optional regression target."""

    features: np.ndarray
    feature_names: tuple
    target: Optional[np.ndarray] = None
    target_name: Optional[str] = None

    def __post_init__(self):
        features = _frozen(self.features, 2, "features")
        n_samples, n_features = features.shape
        if n_samples < 1 or n_features < 1:
            raise EmptyInput(f"dataset needs at least one sample and one feature, got {features.shape}")
        names = tuple(str(s) for s in self.feature_names)
        if len(names) != n_features:
            raise DimensionMismatch(f"{len(names)} feature names for {n_features} columns")
        if any(not s for s in names):
            raise ValidationError("feature names must be nonempty")
        if len(set(names)) != len(names):
            raise ValidationError(f"feature names must be unique: {names}")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "feature_names", names)
        if self.target is not None:
            target = _frozen(self.target, 1, "target")
            if target.shape[0] != n_samples:
                raise DimensionMismatch(f"target has {target.shape[0]} entries for {n_samples} samples")
            object.__setattr__(self, "target", target)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def with_features(self, features) -> "Dataset":
        return Dataset(features, self.feature_names, self.target, self.target_name)

    def with_target(self, target, name=None) -> "Dataset":
        return Dataset(self.features, self.feature_names, target,
                       name if name is not None else self.target_name)


@dataclass(frozen=True)
class JacobianTensor:
    """Partial derivatives ``values[i, k, j] = d f_k / d X_j`` at sample i."""

    values: np.ndarray
    feature_names: Optional[tuple] = None

    def __post_init__(self):
        values = _frozen(self.values, 3, "jacobian")
        if min(values.shape) < 1:
            raise EmptyInput(f"jacobian must be nonempty, got shape {values.shape}")
        object.__setattr__(self, "values", values)
        if self.feature_names is None:
            names = tuple(f"X{j + 1}" for j in range(values.shape[2]))
        else:
            names = tuple(str(s) for s in self.feature_names)
            if len(names) != values.shape[2]:
                raise DimensionMismatch(f"{len(names)} feature names for {values.shape[2]} features")
        object.__setattr__(self, "feature_names", names)

    @classmethod
    def from_matrix(cls, matrix, feature_names=None) -> "JacobianTensor":
        """Scalar-output tensor from an N x n matrix of derivatives."""
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise DimensionMismatch(f"expected an N x n matrix, got shape {matrix.shape}")
        return cls(matrix[:, None, :], feature_names)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.values.shape[1]

    @property
    def n_features(self) -> int:
        return self.values.shape[2]

    def check_matches(self, dataset: Dataset):
        if self.n_samples != dataset.n_samples or self.n_features != dataset.n_features:
            raise DimensionMismatch(
                f"jacobian is {self.values.shape} but dataset is "
                f"{dataset.n_samples} x {dataset.n_features}")


@dataclass(frozen=True)
class NormPair:
    """Perturbation norm ``p`` and target norm ``q``; ``math.inf`` allowed."""

    p: float
    q: float

    def __post_init__(self):
        for name in ("p", "q"):
            value = float(getattr(self, name))
            if math.isnan(value) or value < 1:
                raise ValidationError(f"{name} must lie in [1, inf], got {value}")
            object.__setattr__(self, name, value)

    def __str__(self):
        return f"({format_norm(self.p)}, {format_norm(self.q)})"


def format_norm(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:g}"


def parse_norm(text: str) -> float:
    text = text.strip().lower()
    if text in ("inf", "infinity", "oo"):
        return math.inf
    return float(text)


@dataclass(frozen=True)
class StandardizationParams:
    mean: np.ndarray
    std: np.ndarray
    target_min: Optional[float] = None
    target_max: Optional[float] = None

    def __post_init__(self):
        mean = _frozen(self.mean, 1, "mean")
        std = _frozen(self.std, 1, "std")
        if mean.shape != std.shape:
            raise DimensionMismatch("mean and std lengths differ")
        bad = np.flatnonzero(std <= 0)
        if bad.size:
            raise ConstantColumn(int(bad[0]))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def transform(self, dataset: Dataset) -> Dataset:
        if dataset.n_features != self.mean.shape[0]:
            raise DimensionMismatch(
                f"dataset has {dataset.n_features} features, parameters cover {self.mean.shape[0]}")
        return dataset.with_features((dataset.features - self.mean) / self.std)

    def inverse_transform(self, dataset: Dataset) -> Dataset:
        if dataset.n_features != self.mean.shape[0]:
            raise DimensionMismatch(
                f"dataset has {dataset.n_features} features, parameters cover {self.mean.shape[0]}")
        return dataset.with_features(dataset.features * self.std + self.mean)

    def transform_target(self, target):
        if self.target_min is None:
            return np.asarray(target, dtype=np.float64)
        return (np.asarray(target, dtype=np.float64) - self.target_min) / (self.target_max - self.target_min)

    def inverse_target(self, scaled):
        if self.target_min is None:
            return np.asarray(scaled, dtype=np.float64)
        return np.asarray(scaled, dtype=np.float64) * (self.target_max - self.target_min) + self.target_min

    def to_dict(self) -> dict:
        out = {"mean": self.mean.tolist(), "std": self.std.tolist()}
        if self.target_min is not None:
            out["target_min"] = self.target_min
            out["target_max"] = self.target_max
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "StandardizationParams":
        return cls(np.asarray(doc["mean"], dtype=np.float64),
                   np.asarray(doc["std"], dtype=np.float64),
                   doc.get("target_min"), doc.get("target_max"))


def standardize(dataset: Dataset) -> tuple:
    """Center every feature column and scale it to unit sample std.

    Returns the transformed dataset and the parameters that invert it.
    """
    x = dataset.features
    mean = x.mean(axis=0)
    std = x.std(axis=0, ddof=STANDARDIZE_DDOF) if x.shape[0] > 1 else np.zeros(x.shape[1])
    for j in range(x.shape[1]):
        if not std[j] > 0 or np.all(x[:, j] == x[0, j]):
            raise ConstantColumn(j, dataset.feature_names[j])
    params = StandardizationParams(mean, std)
    return params.transform(dataset), params


def rescale_target(target) -> tuple:
    """Affinely map ``target`` onto [0, 1]; returns ``(scaled, min, max)``."""
    y = np.asarray(target, dtype=np.float64)
    if y.ndim != 1 or y.size == 0:
        raise EmptyInput("target must be a nonempty vector")
    if not np.all(np.isfinite(y)):
        raise NonFinite("target contains NaN or Inf")
    lo, hi = float(y.min()), float(y.max())
    if not hi > lo:
        raise DegenerateTarget(f"target is constant ({lo})")
    scaled = (y - lo) / (hi - lo)
    return scaled, lo, hi


def preprocess(dataset: Dataset) -> tuple:
    """Standardize features and, when present, rescale the target to [0, 1]."""
    std_data, params = standardize(dataset)
    if dataset.target is None:
        return std_data, params
    scaled, lo, hi = rescale_target(dataset.target)
    params = StandardizationParams(params.mean, params.std, lo, hi)
    return std_data.with_target(scaled), params


# ---------------------------------------------------------------------------
# CSV / JSON ingestion


def _parse_float(text, row, col):
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(f"row {row}, column {col}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise NonFinite(f"row {row}, column {col}: non-finite value {text!r}")
    return value


def _read_table(path):
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise EmptyInput(f"{path}: empty CSV")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise EmptyInput(f"{path}: no data rows")
    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise DimensionMismatch(f"{path}: row {i + 2} has {len(row)} fields, header has {len(header)}")
        for j, cell in enumerate(row):
            values[i, j] = _parse_float(cell.strip(), i + 2, header[j])
    return header, values


def read_csv(path, target: Optional[str] = None) -> Dataset:
    """Load a dataset; ``target`` names the column holding the response."""
    header, values = _read_table(path)
    if target is None:
        return Dataset(values, header)
    if target not in header:
        raise ValidationError(f"{path}: target column {target!r} not in header")
    t = header.index(target)
    keep = [j for j in range(len(header)) if j != t]
    if not keep:
        raise EmptyInput(f"{path}: no feature columns besides the target")
    return Dataset(values[:, keep], [header[j] for j in keep], values[:, t], target)


def _fmt(value: float) -> str:
    return repr(float(value))


def write_csv(path, dataset: Dataset):
    header = list(dataset.feature_names)
    cols = [dataset.features]
    if dataset.target is not None:
        header.append(dataset.target_name or "Y")
        cols.append(dataset.target[:, None])
    table = np.hstack(cols)
    _write_table(path, header, table)


def _write_table(path, header, table):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in table:
        writer.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def read_jacobian(path, feature_names: Optional[Sequence[str]] = None) -> JacobianTensor:
    """Read a Jacobian from CSV (scalar output) or JSON (any output count)."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        jac = jacobian_from_json(json.loads(path.read_text()))
    else:
        header, values = _read_table(path)
        jac = JacobianTensor.from_matrix(values, header)
    if feature_names is not None and tuple(feature_names) != jac.feature_names:
        raise ValidationError(
            f"{path}: jacobian columns {jac.feature_names} do not match features {tuple(feature_names)}")
    return jac


def jacobian_from_json(doc) -> JacobianTensor:
    if not isinstance(doc, dict):
        raise SchemaError("$", "expected an object")
    for key in ("n_samples", "n_outputs", "n_features", "values"):
        if key not in doc:
            raise SchemaError(f"$.{key}", "missing")
    try:
        values = np.asarray(doc["values"], dtype=np.float64)
    except (TypeError, ValueError):
        raise SchemaError("$.values", "not a rectangular numeric array") from None
    shape = (doc["n_samples"], doc["n_outputs"], doc["n_features"])
    if values.shape != shape:
        raise SchemaError("$.values", f"shape {values.shape} does not match declared {shape}")
    return JacobianTensor(values, doc.get("feature_names"))


def jacobian_to_json(jac: JacobianTensor) -> dict:
    return {
        "n_samples": jac.n_samples,
        "n_outputs": jac.n_outputs,
        "n_features": jac.n_features,
        "feature_names": list(jac.feature_names),
        "values": jac.values.tolist(),
    }


def write_jacobian(path, jac: JacobianTensor):
    path = Path(path)
    if path.suffix.lower() == ".json":
        path.write_text(json.dumps(jacobian_to_json(jac)) + "\n")
    elif jac.n_outputs == 1:
        _write_table(path, list(jac.feature_names), jac.values[:, 0, :])
    else:
        raise ValidationError(f"{path}: multi-output jacobians must be written as .json")
