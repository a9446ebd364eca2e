"""Negative log-likelihood of interval- and right-censored observations.

Two evaluation routes are provided. The per-observation functions work from
the step functions directly and are meant for inspection and testing.
:class:`Design` compiles a dataset against a knot grid into flat arrays so
that minibatch losses and gradients cost ``O(runs + d * n_knots)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (CoefficientSet, InvalidInputError, KnotGrid, ModelVariant, Observation,
                   Penalty, integrate_hazard)
from . import penalties

log = logging.getLogger(__name__)

#: brackets with less cumulative hazard than this count as probability-zero events
B_FLOOR = 1e-12


class ZeroProbabilityError(ArithmeticError):
    """Interval-censored site whose bracket carries no hazard."""


def interval_term(B: float) -> float:
    """``-log(1 - exp(-B))`` with a sentinel for ``B -> 0``."""
    if B < B_FLOOR:
        return math.inf
    return -math.log(-math.expm1(-B))


def neg_log_likelihood(coeffs: CoefficientSet, obs: Observation) -> float:
    """Weighted NLL of one observation; ``inf`` if an observed bracket has no hazard."""
    c = obs.censor
    if not obs.is_interval:
        return obs.weight * integrate_hazard(coeffs, obs, 0.0, c.T)
    lead = integrate_hazard(coeffs, obs, 0.0, c.t_lo)
    B = integrate_hazard(coeffs, obs, c.t_lo, c.t_hi)
    term = interval_term(B)
    if math.isinf(term):
        log.warning("site %s: zero hazard inside bracket [%g, %g]", obs.site_id, c.t_lo, c.t_hi)
    return obs.weight * (lead + term)


def gradient(coeffs: CoefficientSet, obs: Observation) -> dict:
    """Sparse gradient ``{(j, segment): value}`` of :func:`neg_log_likelihood`.

    Only segments covered by the site's window where feature ``j`` is nonzero
    carry entries; ``j = 0`` is the baseline with ``x_0 = 1``.
    """
    grid = coeffs.grid
    times = grid.times
    c = obs.censor
    if obs.is_interval:
        t_lo, t_hi = c.t_lo, c.t_hi
        B = integrate_hazard(coeffs, obs, t_lo, t_hi)
        if B < B_FLOOR:
            raise ZeroProbabilityError(
                f"site {obs.site_id}: gradient undefined, bracket carries no hazard")
        inner = -1.0 / math.expm1(B)
    else:
        t_lo = t_hi = c.T
        inner = 0.0
    grads: dict = {}
    last = int(np.searchsorted(times, t_hi, side="left"))
    for ell in range(min(last, grid.n_knots - 1)):
        a, b = times[ell], times[ell + 1]
        pre = max(0.0, min(b, t_lo) - a)
        mid = max(0.0, min(b, t_hi) - max(a, t_lo))
        scale = obs.weight * (pre + inner * mid)
        if scale == 0.0:
            continue
        grads[(0, ell)] = grads.get((0, ell), 0.0) + scale
        for tr in obs.tracks:
            # features are constant on grid segments when the grid was built from the data
            x = tr(a)
            if x:
                key = (tr.feature_id, ell)
                grads[key] = grads.get(key, 0.0) + x * scale
    return grads


def dense_gradient(coeffs: CoefficientSet, obs: Observation) -> np.ndarray:
    out = np.zeros_like(coeffs.values)
    for (j, ell), g in gradient(coeffs, obs).items():
        out[j, ell] += g
    return out


def penalty_value(values: np.ndarray, variant: ModelVariant) -> float:
    """Penalty summed over the rows of a coefficient matrix (gamma not applied)."""
    if variant.penalty is Penalty.TV:
        return float(sum(penalties.tv_discrete(row) for row in values))
    if variant.penalty is Penalty.LOG:
        return float(sum(penalties.tv_log_discrete(row, variant.epsilon) for row in values))
    return 0.0


def dataset_objective(coeffs: CoefficientSet, data: Sequence[Observation],
                      variant: ModelVariant | None = None) -> float:
    """Sum of per-site NLLs plus ``gamma`` times the variant's penalty."""
    variant = variant or coeffs.variant
    total = math.fsum(neg_log_likelihood(coeffs, obs) for obs in data)
    if variant.gamma and variant.penalty is not Penalty.NONE:
        total += variant.gamma * penalty_value(coeffs.values, variant)
    return total


@dataclass
class Design:
    """A dataset compiled against a knot grid.

    Each site is a list of *runs* ``(feature, start, stop, value)``: feature
    ``j`` equals ``value`` on segments ``start <= l < stop``. Runs are clipped
    at the site's last relevant knot, so the baseline run covers
    ``[0, hi_idx)``.
    """

    grid: KnotGrid
    n_features: int
    site_ids: list
    lo_idx: np.ndarray
    hi_idx: np.ndarray
    interval: np.ndarray
    weight: np.ndarray
    run_feat: np.ndarray
    run_start: np.ndarray
    run_stop: np.ndarray
    run_val: np.ndarray
    site_ptr: np.ndarray

    @property
    def n_sites(self) -> int:
        return self.lo_idx.size

    @classmethod
    def compile(cls, data: Sequence[Observation], grid: KnotGrid, n_features: int) -> "Design":
        n = len(data)
        lo = np.empty(n, np.int64)
        hi = np.empty(n, np.int64)
        interval = np.zeros(n, bool)
        weight = np.empty(n)
        feats, starts, stops, vals, counts = [], [], [], [], []
        for i, obs in enumerate(data):
            try:
                if obs.is_interval:
                    lo[i] = grid.index_of(obs.censor.t_lo)
                    hi[i] = grid.index_of(obs.censor.t_hi)
                    interval[i] = True
                else:
                    lo[i] = hi[i] = grid.index_of(obs.censor.T)
                weight[i] = obs.weight
                before = len(feats)
                if hi[i] > 0:
                    feats.append(0), starts.append(0), stops.append(hi[i]), vals.append(1.0)
                for tr in obs.tracks:
                    if tr.feature_id > n_features:
                        raise InvalidInputError(
                            f"feature {tr.feature_id} exceeds model size {n_features}")
                    k = [grid.index_of(t) for t in tr.times] + [hi[i]]
                    for e in range(tr.times.size):
                        a, b = k[e], min(k[e + 1], hi[i])
                        if b > a and tr.values[e] > 0:
                            feats.append(tr.feature_id), starts.append(a)
                            stops.append(b), vals.append(tr.values[e])
            except InvalidInputError as exc:
                raise InvalidInputError(f"site {obs.site_id}: {exc}") from None
            counts.append(len(feats) - before)
        ptr = np.zeros(n + 1, np.int64)
        np.cumsum(counts, out=ptr[1:])
        return cls(grid, n_features, [o.site_id for o in data], lo, hi, interval, weight,
                   np.asarray(feats, np.int64), np.asarray(starts, np.int64),
                   np.asarray(stops, np.int64), np.asarray(vals, float), ptr)

    def runs_of(self, sites: np.ndarray):
        """Run indices and their position within ``sites``."""
        begin = self.site_ptr[sites]
        count = self.site_ptr[sites + 1] - begin
        total = int(count.sum())
        pos = np.repeat(np.arange(sites.size), count)
        offsets = np.arange(total) - np.repeat(np.cumsum(count) - count, count)
        return begin[pos] + offsets, pos

    def _cumulative(self, W: np.ndarray) -> np.ndarray:
        C = np.zeros_like(W)
        np.cumsum(W[:, :-1] * self.grid.lengths, axis=1, out=C[:, 1:])
        return C

    def _integrals(self, W: np.ndarray, sites: np.ndarray):
        """Cumulative hazard up to ``lo`` and bracket mass ``B`` for each site."""
        C = self._cumulative(W)
        r, pos = self.runs_of(sites)
        f, s, e, v = self.run_feat[r], self.run_start[r], self.run_stop[r], self.run_val[r]
        lo = self.lo_idx[sites][pos]
        hi = self.hi_idx[sites][pos]
        b1 = np.minimum(e, lo)
        lead = np.where(b1 > s, v * (C[f, b1] - C[f, np.minimum(s, lo)]), 0.0)
        a2, b2 = np.maximum(s, lo), np.minimum(e, hi)
        inner = np.where(b2 > a2, v * (C[f, b2] - C[f, np.minimum(a2, b2)]), 0.0)
        m = sites.size
        return (np.bincount(pos, lead, minlength=m),
                np.bincount(pos, inner, minlength=m), r, pos)

    def site_nll(self, W: np.ndarray, sites: np.ndarray | None = None) -> np.ndarray:
        """Weighted NLL of each site (``inf`` for zero-mass brackets)."""
        if sites is None:
            sites = np.arange(self.n_sites)
        lead, B, _, _ = self._integrals(W, sites)
        iv = self.interval[sites]
        with np.errstate(divide="ignore"):
            tail = np.where(B >= B_FLOOR, -np.log(-np.expm1(-np.maximum(B, B_FLOOR))), np.inf)
        out = lead + np.where(iv, tail, 0.0)
        # right-censored sites keep everything in `lead` because lo == hi
        return self.weight[sites] * out

    def nll(self, W: np.ndarray, sites: np.ndarray | None = None) -> float:
        return float(np.sum(self.site_nll(W, sites)))

    def grad(self, W: np.ndarray, sites: np.ndarray | None = None,
             b_floor: float = 1e-10) -> np.ndarray:
        """Dense gradient of the summed NLL over ``sites``.

        ``b_floor`` lower-bounds the bracket mass so that iterates touching a
        zero-hazard bracket receive a large finite push instead of ``inf``.
        """
        if sites is None:
            sites = np.arange(self.n_sites)
        _, B, r, pos = self._integrals(W, sites)
        B = np.maximum(B, b_floor)
        c_in = np.where(self.interval[sites], -1.0 / np.expm1(B), 0.0) * self.weight[sites]
        c_pre = self.weight[sites]
        f, s, e, v = self.run_feat[r], self.run_start[r], self.run_stop[r], self.run_val[r]
        lo = self.lo_idx[sites][pos]
        K = self.grid.n_knots
        rows = f * K
        # range [s, min(e, lo)) with coefficient 1, [max(s, lo), e) with the bracket coefficient
        a1, b1 = s, np.minimum(e, lo)
        a2, b2 = np.maximum(s, lo), e
        m1 = b1 > a1
        m2 = b2 > a2
        val1 = (v * c_pre[pos])[m1]
        val2 = (v * c_in[pos])[m2]
        idx = np.concatenate([rows[m1] + a1[m1], rows[m1] + b1[m1],
                              rows[m2] + a2[m2], rows[m2] + b2[m2]])
        wts = np.concatenate([val1, -val1, val2, -val2])
        diff = np.bincount(idx, wts, minlength=W.size).reshape(W.shape)
        G = np.cumsum(diff, axis=1)
        G[:, :-1] *= self.grid.lengths
        G[:, -1] = 0.0
        return G
