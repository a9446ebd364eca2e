"""Total-variation penalties and their proximal kernels.

All proximal maps accept optional positive per-coordinate weights ``a`` and
solve ``min_w 0.5 * sum(a * (w - v)**2) + gamma * pen(w)``; the unweighted
case is ``a = 1``. The fused-lasso prox is the linear-time dynamic program of
Johnson (2013), extended in the usual way to weighted squared loss.
"""
from __future__ import annotations

from typing import Optional

import numba
import numpy as np

from .core import ModelVariant, Penalty


def tv_discrete(values) -> float:
    """``sum |v[l+1] - v[l]|``."""
    return float(np.sum(np.abs(np.diff(np.asarray(values, dtype=float)))))


def tv_log_discrete(values, epsilon: float) -> float:
    """``sum log(eps + |dv|) - log(eps)``; a constant vector scores 0."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    dv = np.abs(np.diff(np.asarray(values, dtype=float)))
    return float(np.sum(np.log1p(dv / epsilon)))


def xi(values, epsilon: float) -> float:
    """Smooth remainder ``tv_log - tv / eps``."""
    return tv_log_discrete(values, epsilon) - tv_discrete(values) / epsilon


def difference_transpose(u: np.ndarray) -> np.ndarray:
    """``D^T u`` for the forward difference operator ``(Dw)_l = w[l+1] - w[l]``."""
    out = np.zeros(u.shape[:-1] + (u.shape[-1] + 1,))
    out[..., :-1] -= u
    out[..., 1:] += u
    return out


def xi_gradient(values, epsilon: float) -> np.ndarray:
    """Gradient of :func:`xi`: ``D^T diag(1/(eps+|Dw|) - 1/eps) sign(Dw)``.

    Works row-wise on 2-d input.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    dw = np.diff(np.asarray(values, dtype=float), axis=-1)
    scale = 1.0 / (epsilon + np.abs(dw)) - 1.0 / epsilon
    return difference_transpose(scale * np.sign(dw))


def project_nonneg(values) -> np.ndarray:
    return np.maximum(np.asarray(values, dtype=float), 0.0)


@numba.njit(cache=True)
def _fused_lasso_dp(y, a, lam):
    n = y.size
    beta = np.empty(n)
    if n == 1:
        beta[0] = y[0]
        return beta
    # message derivative: -lam left of x[l], then slope increments ds at knots x[l..r]
    x = np.empty(2 * n + 2)
    ds = np.empty(2 * n + 2)
    tm = np.empty(n - 1)
    tp = np.empty(n - 1)
    tm[0] = y[0] - lam / a[0]
    tp[0] = y[0] + lam / a[0]
    l = n
    r = n + 1
    x[l] = tm[0]
    ds[l] = a[0]
    x[r] = tp[0]
    ds[r] = -a[0]
    for k in range(1, n - 1):
        # scan from the left for g(b) = -lam
        A = a[k]
        C = -a[k] * y[k] - lam
        lo = l
        while lo <= r and A * x[lo] + C <= -lam:
            A += ds[lo]
            C -= ds[lo] * x[lo]
            lo += 1
        tm[k] = (-lam - C) / A
        A_lo = A
        # scan from the right for g(b) = +lam
        A = a[k]
        C = -a[k] * y[k] + lam
        hi = r
        while hi >= lo and A * x[hi] + C >= lam:
            A -= ds[hi]
            C += ds[hi] * x[hi]
            hi -= 1
        tp[k] = (lam - C) / A
        l = lo - 1
        x[l] = tm[k]
        ds[l] = A_lo
        r = hi + 1
        x[r] = tp[k]
        ds[r] = -A
    A = a[n - 1]
    C = -a[n - 1] * y[n - 1] - lam
    lo = l
    while lo <= r and A * x[lo] + C <= 0.0:
        A += ds[lo]
        C -= ds[lo] * x[lo]
        lo += 1
    beta[n - 1] = -C / A
    for k in range(n - 2, -1, -1):
        b = beta[k + 1]
        if b > tp[k]:
            b = tp[k]
        elif b < tm[k]:
            b = tm[k]
        beta[k] = b
    return beta


@numba.njit(cache=True)
def _pava(y, a):
    """Weighted isotonic (non-decreasing) regression, left-to-right pooling."""
    n = y.size
    level = np.empty(n)
    weight = np.empty(n)
    size = np.empty(n, np.int64)
    m = 0
    for i in range(n):
        level[m] = y[i]
        weight[m] = a[i]
        size[m] = 1
        m += 1
        while m > 1 and level[m - 2] > level[m - 1]:
            wsum = weight[m - 2] + weight[m - 1]
            level[m - 2] = (weight[m - 2] * level[m - 2] + weight[m - 1] * level[m - 1]) / wsum
            weight[m - 2] = wsum
            size[m - 2] += size[m - 1]
            m -= 1
    out = np.empty(n)
    pos = 0
    for b in range(m):
        for _ in range(size[b]):
            out[pos] = level[b]
            pos += 1
    return out


def _weights(values: np.ndarray, weights) -> np.ndarray:
    if weights is None:
        return np.ones_like(values)
    a = np.asarray(weights, dtype=float)
    if a.shape != values.shape or np.any(a <= 0):
        raise ValueError("prox weights must be positive and match the input shape")
    return a


def prox_fused_lasso(values, gamma: float, weights: Optional[np.ndarray] = None) -> np.ndarray:
    """``argmin_w 0.5 * sum(a (w - v)^2) + gamma * ||Dw||_1`` in O(n)."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    v = np.ascontiguousarray(values, dtype=float)
    if gamma == 0 or v.size < 2:
        return v.copy()
    return _fused_lasso_dp(v, _weights(v, weights), float(gamma))


def isotonic(values, weights: Optional[np.ndarray] = None) -> np.ndarray:
    v = np.ascontiguousarray(values, dtype=float)
    if v.size < 2:
        return v.copy()
    return _pava(v, _weights(v, weights))


def prox_fused_isotonic(values, gamma: float, weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Prox of ``gamma * ||Dw||_1`` restricted to non-decreasing ``w``.

    On the feasible set the penalty is ``gamma * (w[-1] - w[0])``, which
    only shifts the two end targets before isotonic regression.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    v = np.array(values, dtype=float)
    if v.size < 2:
        return v
    a = _weights(v, weights)
    if gamma:
        v[0] += gamma / a[0]
        v[-1] -= gamma / a[-1]
    return _pava(v, a)


def prox_full(values, variant: ModelVariant, step_scaled_gamma: float,
              weights: Optional[np.ndarray] = None, monotone: Optional[bool] = None) -> np.ndarray:
    """Prox of nonnegativity + (monotonicity) + penalty.

    Computed as the penalty prox followed by the nonnegative projection.
    The projection must come last: projecting first is not exact, e.g.
    ``v = [1, -5]`` with the monotone constraint gives ``[0.5, 0.5]``
    instead of ``[0, 0]``.

    ``step_scaled_gamma`` multiplies ``||Dw||_1`` directly; for the log
    penalty the caller passes the convex part's weight (``gamma / eps``
    scaled by the step). ``monotone`` overrides ``variant.monotone`` (the
    baseline row is never monotone-constrained).
    """
    mono = variant.monotone if monotone is None else monotone
    lam = 0.0 if variant.penalty is Penalty.NONE else step_scaled_gamma
    if mono:
        w = prox_fused_isotonic(values, lam, weights)
    else:
        w = prox_fused_lasso(values, lam, weights)
    return np.maximum(w, 0.0, out=w)
