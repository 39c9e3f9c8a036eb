"""Ground-truth experiments: additive test functions with closed-form derivatives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import Dataset, JacobianTensor
from .errors import DimensionMismatch, SingularPoint, ValidationError

SINGULAR_TOL = 1e-300


@dataclass(frozen=True)
class Component:
    """Univariate term ``f_j`` with its derivative.

    ``singular`` optionally flags inputs where the derivative is unbounded.
    """

    value: Callable
    derivative: Callable
    singular: Optional[Callable] = None


ZERO = Component(lambda x: np.zeros_like(x), lambda x: np.zeros_like(x))


@dataclass(frozen=True)
class AdditiveFunction:
    """f(x) = sum_j f_j(x_j)."""

    components: tuple
    name: str = "additive"

    def __post_init__(self):
        comps = tuple(ZERO if c is None else c for c in self.components)
        if not comps:
            raise ValidationError("an additive function needs at least one component")
        object.__setattr__(self, "components", comps)

    @property
    def n_features(self) -> int:
        return len(self.components)

    def _batch(self, x) -> tuple:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        batch = x[None, :] if single else x
        if batch.ndim != 2 or batch.shape[1] != self.n_features:
            raise DimensionMismatch(f"{self.name} takes {self.n_features} inputs, got shape {x.shape}")
        return batch, single

    def terms(self, x) -> np.ndarray:
        """Per-component values f_j(x_j), shape (N, n)."""
        batch, _ = self._batch(x)
        return np.column_stack([c.value(batch[:, j]) for j, c in enumerate(self.components)])

    def __call__(self, x):
        batch, single = self._batch(x)
        out = self.terms(batch).sum(axis=1)
        return out[0] if single else out

    def gradient(self, x) -> np.ndarray:
        batch, single = self._batch(x)
        for j, c in enumerate(self.components):
            if c.singular is not None:
                bad = np.flatnonzero(c.singular(batch[:, j]))
                if bad.size:
                    raise SingularPoint(int(bad[0]), j)
        grad = np.column_stack([c.derivative(batch[:, j]) for j, c in enumerate(self.components)])
        return grad[0] if single else grad


def feature_names(n_features: int) -> tuple:
    return tuple(f"X{j + 1}" for j in range(n_features))


def gen_normal_inputs(n_samples: int, n_features: int = 8, seed: int = 0) -> Dataset:
    """Seeded standard-normal design matrix with columns X1..Xn."""
    if n_samples < 1 or n_features < 1:
        raise ValidationError("n_samples and n_features must be >= 1")
    rng = np.random.default_rng(seed)
    return Dataset(rng.standard_normal((n_samples, n_features)), feature_names(n_features))


def _cbrt_derivative(x):
    with np.errstate(divide="ignore"):
        return np.abs(x) ** (-2.0 / 3.0) / 30.0


def cubic_root_function(n_features: int = 8) -> AdditiveFunction:
    """Y = X1**2 + 2*X2 + cbrt(X3)/10, remaining inputs unused."""
    if n_features < 3:
        raise ValidationError("the cubic-root function needs at least 3 inputs")
    square = Component(lambda x: x * x, lambda x: 2.0 * x)
    linear = Component(lambda x: 2.0 * x, lambda x: np.full_like(x, 2.0))
    root = Component(lambda x: np.cbrt(x) / 10.0, _cbrt_derivative,
                     lambda x: np.abs(x) < SINGULAR_TOL)
    return AdditiveFunction((square, linear, root) + (ZERO,) * (n_features - 3), "cubic-root")


NAMED_FUNCTIONS = {"cubic-root": cubic_root_function}


def with_target(fun: AdditiveFunction, dataset: Dataset, name: str = "Y") -> Dataset:
    return dataset.with_target(fun(dataset.features), name)


def cubic_root_dataset(n_samples: int = 50_000, seed: int = 0) -> Dataset:
    return with_target(cubic_root_function(), gen_normal_inputs(n_samples, 8, seed))


def analytic_jacobian(fun: AdditiveFunction, dataset: Dataset) -> JacobianTensor:
    if dataset.n_features != fun.n_features:
        raise DimensionMismatch(f"{fun.name} takes {fun.n_features} inputs, dataset has {dataset.n_features}")
    return JacobianTensor.from_matrix(fun.gradient(dataset.features), dataset.feature_names)


def additive_shapley(fun: AdditiveFunction, dataset: Dataset, x) -> np.ndarray:
    """Exact Shapley values of ``fun`` at ``x`` against the dataset background.

    For an additive function the interventional value of a coalition is the
    sum of its own terms plus background means of the rest, so every
    variable's share is its term minus that term's background mean.
    Accepts a single point or an (B, n) batch.
    """
    if dataset.n_features != fun.n_features:
        raise DimensionMismatch(f"{fun.name} takes {fun.n_features} inputs, dataset has {dataset.n_features}")
    batch, single = fun._batch(x)
    phi = fun.terms(batch) - fun.terms(dataset.features).mean(axis=0)
    return phi[0] if single else phi
