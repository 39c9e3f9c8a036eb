"""Numerical checks that do not use the closed-form sensitivity.

``brute_force_operator_norm`` searches the perturbation sphere directly for
the largest output change of the per-sample derivative operator;
``empirical_sensitivity_limit`` does the same with finite perturbations of
the function itself. Both only evaluate feasible points, so they lower-bound
the true supremum.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Callable

import numpy as np

from .core import Dataset, JacobianTensor, NormPair
from .metric_sensitivity import sensitivity_pq
from .errors import DimensionMismatch, IndexOutOfRange, NonFinite, TooLarge, ValidationError

MAX_SAMPLES = 12
KINK = 1e-9
_MIN_STEP = 1e-12


def _norm(values: np.ndarray, p: float) -> np.ndarray:
    """L^p norm over all axes but the first."""
    flat = np.abs(values.reshape(values.shape[0], -1))
    if math.isinf(p):
        return flat.max(axis=1)
    top = flat.max(axis=1)
    safe = np.where(top > 0, top, 1.0)
    return safe * np.sum((flat / safe[:, None]) ** p, axis=1) ** (1.0 / p) * (top > 0)


def _norm_gradient(delta: np.ndarray, q: float) -> np.ndarray:
    """d||delta||_q / d delta for a batch of (N, m) blocks (subgradient at kinks)."""
    flat = delta.reshape(delta.shape[0], -1)
    grad = np.zeros_like(flat)
    if math.isinf(q):
        idx = np.argmax(np.abs(flat), axis=1)
        rows = np.arange(flat.shape[0])
        grad[rows, idx] = np.sign(flat[rows, idx])
        return grad.reshape(delta.shape)
    norms = _norm(delta, q)
    ok = norms > 0
    scaled = np.abs(flat[ok]) / norms[ok, None]
    grad[ok] = np.sign(flat[ok]) * scaled ** (q - 1)
    return grad.reshape(delta.shape)


def _starts(n: int, count: int, seed: int) -> np.ndarray:
    """Restart points; the first ``n`` sit near the coordinate axes.

    Every restart has its own seeded stream, so the first k starts do not
    depend on how many restarts are requested.
    """
    out = np.empty((count, n))
    for r in range(count):
        rng = np.random.default_rng((seed, r))
        if r < n:
            out[r] = 0.1 * rng.standard_normal(n)
            out[r, r] += 1.0
        else:
            out[r] = rng.standard_normal(n)
    return out


def _project(h: np.ndarray, p: float) -> np.ndarray:
    if math.isinf(p):
        return np.clip(h, -1.0, 1.0)
    return h / _norm(h, p)[:, None]


def _ascend(delta_fn: Callable, starts: np.ndarray, p: float, q: float, iters: int) -> tuple:
    """Projected gradient ascent of ||delta(h)||_q / ||h||_p, one row per restart.

    ``delta_fn(h)`` returns the (R, N, m) output changes and their derivatives
    with respect to each h_i. For finite p the iterate lives on the unit
    sphere; for p = inf it lives in the unit box (the maximum of a convex
    function over the box sits on its boundary).

    Rows evolve independently and converged rows are frozen. Returns the best
    value per row and the corresponding points.
    """
    h = starts / _norm(starts, p)[:, None]
    delta, _ = delta_fn(h)
    value = _norm(delta, q) / _norm(h, p)
    step = np.full(h.shape[0], 0.5)
    for _ in range(iters):
        active = step >= _MIN_STEP
        if not active.any():
            break
        ha = h[active]
        # move off the |h_i| kink so zero coordinates still see a direction
        hk = np.where(ha == 0, KINK, ha)
        delta, ddelta = delta_fn(hk)
        out_norm = _norm(delta, q)
        in_norm = _norm(hk, p)
        grad_out = np.sum(_norm_gradient(delta, q) * ddelta, axis=2)
        if math.isinf(p):
            grad = grad_out
        else:
            grad_in = np.sign(hk) * (np.abs(hk) / in_norm[:, None]) ** (p - 1)
            grad = (grad_out * in_norm[:, None] - out_norm[:, None] * grad_in) / in_norm[:, None] ** 2
        scale = np.abs(grad).max(axis=1)
        scale = np.where(scale > 0, scale, 1.0)
        trial = ha + step[active, None] * grad / scale[:, None]
        # a coordinate never needs to change sign: the objective is even in each h_i
        trial = np.where(np.sign(trial) * np.sign(hk) < 0, 0.0, trial)
        empty = np.all(trial == 0, axis=1)
        trial[empty] = ha[empty]
        trial = _project(trial, p)
        trial_delta, _ = delta_fn(trial)
        trial_value = _norm(trial_delta, q) / _norm(trial, p)
        better = (trial_value >= value[active]) & ~empty
        idx = np.flatnonzero(active)
        h[idx[better]] = trial[better]
        value[idx[better]] = trial_value[better]
        step[idx] = np.where(better, np.minimum(step[idx] * 1.5, 1.0), step[idx] * 0.5)
    return value, h


@dataclass(frozen=True)
class OracleResult:
    value: float
    argmax: np.ndarray
    restart_values: np.ndarray


def operator_norm_search(jac_slice, norms: NormPair, restarts: int = 20, iters: int = 400,
                         seed: int = 0) -> OracleResult:
    """Direct search for max ||D h||_q over ||h||_p = 1, D = diag of derivative rows."""
    g = np.asarray(jac_slice, dtype=np.float64)
    if g.ndim == 1:
        g = g[:, None]
    if g.ndim != 2:
        raise DimensionMismatch(f"expected an N x m slice, got shape {g.shape}")
    if g.shape[0] > MAX_SAMPLES:
        raise TooLarge(f"brute-force search supports N <= {MAX_SAMPLES}, got {g.shape[0]}")
    if not np.all(np.isfinite(g)):
        raise NonFinite("derivative slice contains NaN or Inf")
    if restarts < 1 or iters < 0:
        raise ValidationError("restarts must be >= 1 and iters >= 0")

    def delta_fn(h):
        return h[:, :, None] * g[None], np.broadcast_to(g, h.shape + g.shape[1:])

    values, points = _ascend(delta_fn, _starts(g.shape[0], restarts, seed), norms.p, norms.q, iters)
    best = int(np.argmax(values))
    h = points[best] / _norm(points[best:best + 1], norms.p)[0]
    return OracleResult(float(values[best]), h, values)


def brute_force_operator_norm(jac_slice, norms: NormPair, restarts: int = 20, iters: int = 400,
                              seed: int = 0) -> float:
    return operator_norm_search(jac_slice, norms, restarts, iters, seed).value


def _batched(f: Callable, points: np.ndarray) -> np.ndarray:
    out = np.asarray(f(points), dtype=np.float64)
    if out.ndim == 1:
        out = out[:, None]
    if out.shape[0] != points.shape[0]:
        raise DimensionMismatch(f"function returned {out.shape[0]} rows for {points.shape[0]} inputs")
    if not np.all(np.isfinite(out)):
        raise NonFinite("function returned NaN or Inf")
    return out


def empirical_sensitivity_limit(f: Callable, dataset: Dataset, j: int, norms: NormPair, epsilons,
                                probes: int = 64, seed: int = 0, restarts: int = 8,
                                iters: int = 200) -> list:
    """Estimate sup_{||h||_p = eps} v(f, h) / eps for each eps.

    ``f`` maps an (B, n) batch to (B,) or (B, m) outputs. For each eps the
    best ``restarts`` of ``probes`` random perturbation directions are
    refined by projected ascent on the actual finite differences.
    """
    eps_list = [float(e) for e in epsilons]
    if not eps_list or any(not e > 0 for e in eps_list):
        raise ValidationError("epsilons must be positive")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValidationError("epsilons must be strictly decreasing")
    if probes < 1 or restarts < 1:
        raise ValidationError("probes and restarts must be >= 1")
    if not 0 <= j < dataset.n_features:
        raise IndexOutOfRange(f"variable index {j} outside [0, {dataset.n_features})")
    x = np.asarray(dataset.features)
    n_samples = x.shape[0]
    base = _batched(f, x)
    candidates = _starts(n_samples, max(probes, restarts), seed)
    results = []
    for eps in eps_list:
        fd = 1e-4

        def shifted(h):
            pts = np.repeat(x[None], h.shape[0], axis=0)
            pts[:, :, j] += eps * h
            return _batched(f, pts.reshape(-1, x.shape[1])).reshape(h.shape[0], n_samples, -1)

        def delta_fn(h):
            delta = (shifted(h) - base[None]) / eps
            ddelta = (shifted(h + fd) - shifted(h - fd)) / (2 * fd * eps)
            return delta, ddelta

        unit = _project(candidates / _norm(candidates, norms.p)[:, None], norms.p)
        first = _norm(delta_fn(unit)[0], norms.q) / _norm(unit, norms.p)
        chosen = unit[np.argsort(-first, kind="stable")[:restarts]]
        values, _ = _ascend(delta_fn, chosen, norms.p, norms.q, iters)
        results.append((eps, float(max(values.max(), first.max()))))
    return results


def finite_diff_jacobian(f: Callable, x, step: float = 1e-5) -> np.ndarray:
    """Central-difference m x n Jacobian of ``f`` (vector in, scalar or vector out)."""
    if not step > 0:
        raise ValidationError("step must be positive")
    x = np.asarray(x, dtype=np.float64).ravel()
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        hi = np.atleast_1d(np.asarray(f(x + e), dtype=np.float64))
        lo = np.atleast_1d(np.asarray(f(x - e), dtype=np.float64))
        if not (np.all(np.isfinite(hi)) and np.all(np.isfinite(lo))):
            raise NonFinite(f"function is not finite near x along coordinate {j}")
        cols.append((hi - lo) / (2 * step))
    return np.column_stack(cols)


SWEEP_NORMS = (1.0, 1.5, 2.0, 3.0, math.inf)


@dataclass(frozen=True)
class SweepRow:
    norms: NormPair
    instances: int
    max_gap: float  # largest (closed - oracle) / closed
    max_excess: float  # largest (oracle - closed) / closed
    passed: bool


def random_instance(seed: int, index: int, max_samples: int = 6, max_outputs: int = 3) -> np.ndarray:
    rng = np.random.default_rng((seed, index))
    n = int(rng.integers(1, max_samples + 1))
    m = int(rng.integers(1, max_outputs + 1))
    g = rng.standard_normal((n, m)) * 10 ** rng.uniform(-1, 1)
    # occasionally zero out entries to exercise the kink handling
    g[rng.random((n, m)) < 0.1] = 0.0
    if not np.any(g):
        g[0, 0] = 1.0
    return g


def verify_sweep(seed: int = 0, instances: int = 200, restarts: int = 20, rtol: float = 1e-3,
                 threads: int = 1) -> list:
    """Compare the closed form with the direct search on random small instances.

    Instance k uses norm pair k mod 25 from SWEEP_NORMS x SWEEP_NORMS.
    """
    pairs = [NormPair(p, q) for p, q in product(SWEEP_NORMS, SWEEP_NORMS)]

    def run(k):
        g = random_instance(seed, k)
        norms = pairs[k % len(pairs)]
        closed = sensitivity_pq(JacobianTensor(g[:, :, None]), 0, norms)
        found = brute_force_operator_norm(g, norms, restarts=restarts, seed=k)
        return k % len(pairs), (closed - found) / closed, (found - closed) / closed

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(instances)))
    else:
        results = [run(k) for k in range(instances)]
    rows = []
    for idx, norms in enumerate(pairs):
        mine = [(gap, exc) for i, gap, exc in results if i == idx]
        if not mine:
            continue
        gap = max(g for g, _ in mine)
        exc = max(e for _, e in mine)
        rows.append(SweepRow(norms, len(mine), gap, exc, gap <= rtol and exc <= 1e-9))
    return rows
