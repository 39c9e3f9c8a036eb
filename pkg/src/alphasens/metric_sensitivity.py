"""Power-mean sensitivities, alpha-curves and the (p, q) operator-norm sensitivity.

Every power sum is evaluated in the log domain: ``sum(t ** a)`` becomes
``exp(logsumexp(a * log t))`` over the strictly positive entries, so large
derivatives raised to large exponents never overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import JacobianTensor, NormPair
from .errors import EmptyInput, IndexOutOfRange, NegativeValue, NonFinite, ValidationError

DEFAULT_ALPHAS = (1.0, 1.25, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0, 16.0)


def _logsumexp(logs: np.ndarray) -> float:
    """log(sum(exp(logs))) along the flattened array; ``-inf`` when empty."""
    logs = logs[np.isfinite(logs)]
    if logs.size == 0:
        return -math.inf
    top = logs.max()
    return float(top + math.log(np.sum(np.exp(logs - top))))


def _row_log_power_sums(g: np.ndarray, power: float) -> np.ndarray:
    """log(sum_k g[i, k]**power) per row; ``-inf`` for all-zero rows."""
    with np.errstate(divide="ignore"):
        logs = power * np.log(g)
    top = logs.max(axis=1)
    out = np.full(g.shape[0], -np.inf)
    ok = np.isfinite(top)
    out[ok] = top[ok] + np.log(np.exp(logs[ok] - top[ok, None]).sum(axis=1))
    return out


def _check_alpha(alpha) -> float:
    alpha = float(alpha)
    if math.isnan(alpha) or alpha < 1:
        raise ValidationError(f"alpha must lie in [1, inf], got {alpha}")
    return alpha


def _check_values(values) -> np.ndarray:
    t = np.asarray(values, dtype=np.float64).ravel()
    if t.size == 0:
        raise EmptyInput("generalized mean of an empty set")
    if not np.all(np.isfinite(t)):
        raise NonFinite("values contain NaN or Inf")
    if np.any(t < 0):
        raise NegativeValue("generalized mean requires nonnegative values")
    return t


def _log_power_sum(t: np.ndarray, alpha: float) -> float:
    """log(sum t_i**alpha); zero entries contribute nothing."""
    with np.errstate(divide="ignore"):
        logs = np.log(t)
    return _logsumexp(alpha * logs)


def generalized_mean(values, alpha) -> float:
    """Power mean ``(mean(t**alpha))**(1/alpha)``; ``alpha=inf`` gives the max."""
    t = _check_values(values)
    alpha = _check_alpha(alpha)
    if math.isinf(alpha):
        return float(t.max())
    log_sum = _log_power_sum(t, alpha)
    if log_sum == -math.inf:
        return 0.0
    mean = math.exp((log_sum - math.log(t.size)) / alpha)
    # a power mean lies in [min, max]; clamping removes rounding so constant inputs come back exactly
    return min(max(mean, float(t.min())), float(t.max()))


def _derivatives(jac: JacobianTensor, j: int, k: int) -> np.ndarray:
    if not 0 <= j < jac.n_features:
        raise IndexOutOfRange(f"variable index {j} outside [0, {jac.n_features})")
    if not 0 <= k < jac.n_outputs:
        raise IndexOutOfRange(f"output index {k} outside [0, {jac.n_outputs})")
    return jac.values[:, k, j]


def alpha_mean_sensitivity(jac: JacobianTensor, j: int, k: int = 0, alpha: float = 1.0) -> float:
    return generalized_mean(np.abs(_derivatives(jac, j, k)), alpha)


@dataclass(frozen=True)
class AlphaGrid:
    alphas: tuple = DEFAULT_ALPHAS
    include_infinity: bool = True

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        if not alphas:
            raise EmptyInput("alpha grid needs at least one finite value")
        if any(not math.isfinite(a) or a < 1 for a in alphas):
            raise ValidationError(f"grid values must be finite and >= 1: {alphas}")
        if any(b <= a for a, b in zip(alphas, alphas[1:])):
            raise ValidationError(f"grid values must be strictly increasing: {alphas}")
        object.__setattr__(self, "alphas", alphas)

    @classmethod
    def parse(cls, text: str) -> "AlphaGrid":
        """Parse ``lo:hi:geomK``, ``lo:hi:linK`` or a comma list like ``1,2,4``.

        Infinity is always appended implicitly.
        """
        text = text.strip()
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ValidationError(f"bad alpha grid {text!r}; expected lo:hi:geomK")
            lo, hi, spacing = float(parts[0]), float(parts[1]), parts[2].strip().lower()
            for prefix, fn in (("geom", np.geomspace), ("lin", np.linspace)):
                if spacing.startswith(prefix):
                    try:
                        count = int(spacing[len(prefix):])
                    except ValueError:
                        raise ValidationError(f"bad point count in {text!r}") from None
                    if count < 1:
                        raise ValidationError(f"bad point count in {text!r}")
                    if count == 1:
                        return cls((lo,))
                    if lo < 1 or hi <= lo:
                        raise ValidationError(f"bad alpha range in {text!r}")
                    points = fn(lo, hi, count)
                    points[0], points[-1] = lo, hi
                    return cls(tuple(float(a) for a in points))
            raise ValidationError(f"bad spacing {spacing!r} in {text!r}; use geomK or linK")
        try:
            return cls(tuple(float(a) for a in text.split(",") if a.strip()))
        except ValueError:
            raise ValidationError(f"bad alpha grid {text!r}") from None

    def all_values(self) -> tuple:
        return self.alphas + ((math.inf,) if self.include_infinity else ())


DEFAULT_GRID = AlphaGrid()


@dataclass(frozen=True)
class AlphaCurve:
    """ms^alpha over a finite alpha grid plus the alpha = inf asymptote."""

    variable_index: int
    alphas: tuple
    values: tuple
    asymptote: float
    output_index: int = 0
    name: Optional[str] = None

    @property
    def points(self) -> list:
        return list(zip(self.alphas, self.values))

    def at(self, alpha: float) -> float:
        if math.isinf(alpha):
            return self.asymptote
        return self.values[self.alphas.index(float(alpha))]

    def to_dict(self) -> dict:
        return {
            "variable_index": self.variable_index,
            "output_index": self.output_index,
            "name": self.name,
            "alphas": list(self.alphas),
            "values": list(self.values),
            "asymptote": self.asymptote,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AlphaCurve":
        return cls(int(doc["variable_index"]), tuple(float(a) for a in doc["alphas"]),
                   tuple(float(v) for v in doc["values"]), float(doc["asymptote"]),
                   int(doc.get("output_index", 0)), doc.get("name"))


def alpha_curve(jac: JacobianTensor, j: int, k: int = 0, grid: AlphaGrid = DEFAULT_GRID) -> AlphaCurve:
    t = np.abs(_derivatives(jac, j, k))
    values = tuple(generalized_mean(t, a) for a in grid.alphas)
    return AlphaCurve(j, grid.alphas, values, float(t.max()), k, jac.feature_names[j])


def all_alpha_curves(jac: JacobianTensor, k: int = 0, grid: AlphaGrid = DEFAULT_GRID) -> list:
    return [alpha_curve(jac, j, k, grid) for j in range(jac.n_features)]


def alpha_from_pq(norms: NormPair) -> float:
    """Power-mean order equivalent to the (p, q) pair for scalar outputs."""
    p, q = norms.p, norms.q
    if p <= q:
        return math.inf
    if math.isinf(p):
        return q
    return p * q / (p - q)


def sensitivity_pq(jac: JacobianTensor, j: int, norms: NormPair) -> float:
    """Sensitivity of variable ``j`` for L^p perturbations and L^q targets.

    For p <= q this is the largest per-sample q-norm of the derivative
    vector; for p > q the per-sample q-th power sums are aggregated with
    exponent p / (p - q). Infinite norms use the limiting expressions.
    """
    if not 0 <= j < jac.n_features:
        raise IndexOutOfRange(f"variable index {j} outside [0, {jac.n_features})")
    g = np.abs(jac.values[:, :, j])
    p, q = norms.p, norms.q
    if p <= q:
        if math.isinf(q):
            return float(g.max())
        # max_i ||g_i||_q, each row norm in log domain
        row_logs = _row_log_power_sums(g, q) / q
        top = row_logs.max()
        return 0.0 if top == -math.inf else math.exp(top)
    # p > q, hence q finite
    row_log_sums = _row_log_power_sums(g, q)
    if math.isinf(p):
        total = _logsumexp(row_log_sums)
        return 0.0 if total == -math.inf else math.exp(total / q)
    outer = p / (p - q)
    total = _logsumexp(outer * row_log_sums)
    if total == -math.inf:
        return 0.0
    return math.exp(total * (p - q) / (p * q))


def power_mean_sensitivity(jac: JacobianTensor, j: int, norms: NormPair) -> float:
    """Scalar-output route ``N**(1/alpha) * M_alpha`` with alpha from (p, q)."""
    if jac.n_outputs != 1:
        raise ValidationError("power-mean form applies to scalar outputs only")
    alpha = alpha_from_pq(norms)
    mean = alpha_mean_sensitivity(jac, j, 0, alpha)
    if math.isinf(alpha):
        return mean
    return jac.n_samples ** (1.0 / alpha) * mean
