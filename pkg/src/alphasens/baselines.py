"""Permutation feature importance."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import Dataset
from .errors import DimensionMismatch, MissingTarget, NonFinite, ValidationError

METRICS = {
    "mse": lambda resid: float(np.mean(resid * resid)),
    "mae": lambda resid: float(np.mean(np.abs(resid))),
}


def worker_count() -> int:
    """Thread budget from ALPHASENS_THREADS (0 or unset = one per CPU)."""
    raw = os.environ.get("ALPHASENS_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"ALPHASENS_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValidationError("ALPHASENS_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


@dataclass(frozen=True)
class PermutationResult:
    feature_names: tuple
    importances: np.ndarray
    repeats: np.ndarray  # shape (n_features, n_repeats)
    baseline: float
    seed: int
    metric: str

    @property
    def std(self) -> np.ndarray:
        return self.repeats.std(axis=1)

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "seed": self.seed,
            "baseline": self.baseline,
            "features": [
                {"name": name, "importance": float(imp), "std": float(sd), "repeats": rep.tolist()}
                for name, imp, sd, rep in zip(self.feature_names, self.importances, self.std, self.repeats)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PermutationResult":
        feats = doc["features"]
        return cls(tuple(f["name"] for f in feats),
                   np.array([f["importance"] for f in feats], dtype=np.float64),
                   np.array([f["repeats"] for f in feats], dtype=np.float64),
                   float(doc["baseline"]), int(doc["seed"]), doc["metric"])

    def to_csv_rows(self) -> list:
        rows = [["feature", "importance", "std"] + [f"repeat_{r}" for r in range(self.repeats.shape[1])]]
        for name, imp, sd, rep in zip(self.feature_names, self.importances, self.std, self.repeats):
            rows.append([name, repr(float(imp)), repr(float(sd))] + [repr(float(v)) for v in rep])
        return rows


def _predictions(predict, features, n):
    pred = np.asarray(predict(features), dtype=np.float64)
    if pred.ndim == 2 and pred.shape[1] == 1:
        pred = pred[:, 0]
    if pred.shape[0] != n:
        raise DimensionMismatch(f"predictor returned {pred.shape[0]} rows for {n} samples")
    if not np.all(np.isfinite(pred)):
        raise NonFinite("predictor returned NaN or Inf")
    return pred


def permutation_importance(predict: Callable, dataset: Dataset, target=None, metric: str = "mse",
                           repeats: int = 10, seed: int = 0, threads: Optional[int] = None) -> PermutationResult:
    """Mean increase of ``metric`` when one column at a time is shuffled.

    Each (feature, repeat) pair draws its permutation from its own stream
    seeded by ``(seed, feature, repeat)``, so results do not depend on the
    thread count. Negative importances are kept as-is.
    """
    if metric not in METRICS:
        raise ValidationError(f"metric must be one of {sorted(METRICS)}, got {metric!r}")
    if repeats < 1:
        raise ValidationError("repeats must be >= 1")
    y = dataset.target if target is None else np.asarray(target, dtype=np.float64)
    if y is None:
        raise MissingTarget("permutation importance needs a target")
    if y.ndim == 2 and y.shape[1] == 1:
        y = y[:, 0]
    x = dataset.features
    score = METRICS[metric]
    baseline = score(_predictions(predict, x, x.shape[0]) - y)

    def run(j):
        out = np.empty(repeats)
        shuffled = np.array(x)
        for r in range(repeats):
            perm = np.random.default_rng((seed, j, r)).permutation(x.shape[0])
            shuffled[:, j] = x[perm, j]
            out[r] = score(_predictions(predict, shuffled, x.shape[0]) - y) - baseline
        return out

    n_threads = threads if threads is not None else worker_count()
    if n_threads > 1 and dataset.n_features > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            per_feature = list(pool.map(run, range(dataset.n_features)))
    else:
        per_feature = [run(j) for j in range(dataset.n_features)]
    table = np.vstack(per_feature)
    return PermutationResult(dataset.feature_names, table.mean(axis=1), table, baseline, seed, metric)
