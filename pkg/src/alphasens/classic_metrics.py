"""Mean / std / root-mean-square derivative summaries and derivative moments."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import JacobianTensor
from .errors import NonPositiveScale, ValidationError
from .metric_sensitivity import _check_alpha, _check_values, _derivatives, _log_power_sum

LINEAR = "linear"
NONLINEAR = "nonlinear"
IRRELEVANT = "irrelevant"
LABELS = (LINEAR, NONLINEAR, IRRELEVANT)

DEFAULT_EPS_REL = 1e-2


@dataclass(frozen=True)
class SensitivitySummary:
    variable_index: int
    s_avg: float
    s_sd: float
    s_sq: float
    label: Optional[str] = None
    name: Optional[str] = None

    def to_dict(self) -> dict:
        return {"variable_index": self.variable_index, "name": self.name, "s_avg": self.s_avg,
                "s_sd": self.s_sd, "s_sq": self.s_sq, "label": self.label}

    @classmethod
    def from_dict(cls, doc: dict) -> "SensitivitySummary":
        return cls(int(doc["variable_index"]), float(doc["s_avg"]), float(doc["s_sd"]),
                   float(doc["s_sq"]), doc.get("label"), doc.get("name"))


def classic_summary(jac: JacobianTensor, j: int, k: int = 0) -> SensitivitySummary:
    d = _derivatives(jac, j, k)
    s_avg = float(np.mean(d))
    # population std keeps s_sq**2 == s_avg**2 + s_sd**2
    s_sd = float(np.std(d))
    s_sq = float(np.sqrt(np.mean(d * d)))
    return SensitivitySummary(j, s_avg, s_sd, s_sq, None, jac.feature_names[j])


def classify_variable(summary: SensitivitySummary, scale: float, eps_rel: float = DEFAULT_EPS_REL) -> str:
    """Label a variable from its derivative mean and spread.

    Thresholds are ``eps_rel * scale``; ``scale`` is usually the largest s_sq
    over all variables, which makes the rule independent of units.
    """
    if not scale > 0:
        raise NonPositiveScale(f"scale must be positive, got {scale}")
    if not 0 < eps_rel < 1:
        raise ValidationError(f"eps_rel must lie in (0, 1), got {eps_rel}")
    threshold = eps_rel * scale
    if summary.s_sd < threshold:
        return IRRELEVANT if abs(summary.s_avg) < threshold else LINEAR
    return NONLINEAR


def classic_summaries(jac: JacobianTensor, k: int = 0, eps_rel: float = DEFAULT_EPS_REL) -> list:
    """Summaries for every variable, labelled against the largest s_sq.

    When every derivative is zero all variables are irrelevant.
    """
    raw = [classic_summary(jac, j, k) for j in range(jac.n_features)]
    scale = max(s.s_sq for s in raw)
    if scale == 0:
        return [replace(s, label=IRRELEVANT) for s in raw]
    return [replace(s, label=classify_variable(s, scale, eps_rel)) for s in raw]


def moment(jac: JacobianTensor, j: int, k: int = 0, alpha: float = 1.0) -> float:
    """Empirical moment ``mean(|df_k/dX_j| ** alpha)``."""
    alpha = _check_alpha(alpha)
    if math.isinf(alpha):
        raise ValidationError("moment order must be finite")
    t = _check_values(np.abs(_derivatives(jac, j, k)))
    log_sum = _log_power_sum(t, alpha)
    if log_sum == -math.inf:
        return 0.0
    return math.exp(log_sum - math.log(t.size))
