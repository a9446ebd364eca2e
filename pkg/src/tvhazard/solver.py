"""Proximal SVRG for the penalized additive-hazard likelihood.

The solver minimizes the dataset objective divided by the number of sites,
so the learning rate is on the scale of a per-site average loss. Each step
takes a variance-reduced gradient step on the smooth part (the likelihood,
plus the smooth remainder of the log penalty) and then applies the
decomposed proximal map row by row.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import CoefficientSet, KnotGrid, ModelVariant, Observation, Penalty, build_knot_grid
from .likelihood import Design, penalty_value
from . import penalties

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    pass


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    eta: Optional[float] = None
    minibatch: int = 10
    epochs: int = 20
    warmup_epochs: int = 0
    full_grad_every: int = 1
    adagrad: bool = True
    adagrad_eps: float = 1e-8
    seed: int = 0
    tol: float = 0.0
    b_floor: float = 1e-10
    polish_iters: int = 500
    polish_tol: float = 1e-12

    def __post_init__(self):
        if self.eta is not None and not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.minibatch < 1 or self.epochs < 1 or self.full_grad_every < 1:
            raise ValueError("minibatch, epochs and full_grad_every must be >= 1")
        if self.warmup_epochs < 0 or self.tol < 0 or not self.adagrad_eps > 0 \
                or self.polish_iters < 0 or self.polish_tol < 0:
            raise ValueError("invalid solver configuration")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FitResult:
    coeffs: CoefficientSet
    objective_trace: list
    test_trace: list = field(default_factory=list)
    nll_trace: list = field(default_factory=list)
    passes: int = 0
    converged: bool = False
    eta: float = 0.0
    polish_iters: int = 0


def default_eta(design: Design, adagrad: bool) -> float:
    """Largest per-site exposure sets the scale for plain steps."""
    if adagrad:
        return 0.2
    run_len = design.grid.times[design.run_stop] - design.grid.times[design.run_start]
    exposure = np.bincount(np.repeat(np.arange(design.n_sites), np.diff(design.site_ptr)),
                           design.run_val * run_len, minlength=design.n_sites)
    return 0.1 / max(float(exposure.max()), 1e-12)


def initial_values(design: Design) -> np.ndarray:
    """Feasible start: constant baseline at the crude event rate, features at 0.

    A strictly positive baseline keeps every bracket's probability nonzero.
    """
    times = design.grid.times
    exposure = np.where(design.interval,
                        0.5 * (times[design.lo_idx] + times[design.hi_idx]),
                        times[design.hi_idx])
    events = float(np.sum(design.weight * design.interval))
    rate = (events + 1.0) / (float(np.sum(design.weight * exposure)) + 1.0)
    W = np.zeros((design.n_features + 1, design.grid.n_knots))
    W[0] = max(rate, 1e-3)
    return W


def svrg_direction(design: Design, W: np.ndarray, W_snap: np.ndarray, mu: np.ndarray,
                   batch: np.ndarray, b_floor: float = 1e-10) -> np.ndarray:
    """Variance-reduced estimate of the average-loss gradient.

    ``mu`` is the snapshot's average gradient; at ``W == W_snap`` the
    control variate cancels and the direction is exactly ``mu``.
    """
    m = batch.size
    diff = design.grad(W, batch, b_floor) - design.grad(W_snap, batch, b_floor)
    return diff / m + mu


class _Prox:
    """Row-wise proximal map for the variant, optionally in a diagonal metric."""

    def __init__(self, variant: ModelVariant, n_sites: int):
        self.variant = variant
        g = variant.gamma / n_sites
        if variant.penalty is Penalty.LOG:
            g /= variant.epsilon
        self.gamma = 0.0 if variant.penalty is Penalty.NONE else g

    def __call__(self, W_tmp: np.ndarray, step: np.ndarray | float) -> np.ndarray:
        out = np.empty_like(W_tmp)
        scalar = np.ndim(step) == 0
        for j in range(W_tmp.shape[0]):
            mono = self.variant.monotone and j > 0
            if scalar:
                out[j] = penalties.prox_full(W_tmp[j], self.variant, step * self.gamma,
                                             monotone=mono)
            else:
                out[j] = penalties.prox_full(W_tmp[j], self.variant, self.gamma,
                                             weights=1.0 / step[j], monotone=mono)
        return out


def _smooth_penalty_grad(W: np.ndarray, variant: ModelVariant, n_sites: int) -> np.ndarray:
    if variant.penalty is not Penalty.LOG or not variant.gamma:
        return 0.0
    return (variant.gamma / n_sites) * penalties.xi_gradient(W, variant.epsilon)


def objective_value(design: Design, W: np.ndarray, variant: ModelVariant) -> float:
    val = design.nll(W)
    if variant.gamma and variant.penalty is not Penalty.NONE:
        val += variant.gamma * penalty_value(W, variant)
    return val


def fit(data: Sequence[Observation], grid: KnotGrid, variant: ModelVariant,
        cfg: SolverConfig = SolverConfig(), n_features: Optional[int] = None,
        test: Optional[Sequence[Observation]] = None, init: Optional[np.ndarray] = None,
        check_feasibility: bool = False) -> FitResult:
    """Fit coefficients by prox-SVRG passes, then an accelerated full-batch polish.

    Optional prox-SGD warm-up passes run first. Set ``cfg.polish_iters = 0``
    for plain prox-SVRG.
    """
    if not data:
        raise DataError("no observations to fit")
    if n_features is None:
        n_features = max((tr.feature_id for o in data for tr in o.tracks), default=0)
    design = Design.compile(data, grid, n_features)
    n = design.n_sites
    W = initial_values(design) if init is None else np.array(init, dtype=float)
    site_nll0 = design.site_nll(W)
    if not np.all(np.isfinite(site_nll0)):
        bad = design.site_ids[int(np.flatnonzero(~np.isfinite(site_nll0))[0])]
        raise DataError(f"site {bad}: zero-probability bracket at initialization")

    test_eval = None
    if test:
        test_grid = grid.union(build_knot_grid(test, grid.horizon))
        test_design = Design.compile(test, test_grid, n_features)
        cols = grid.locate(test_grid.times)
        test_total = float(test_design.weight.sum())

        def test_eval(W):
            return test_design.nll(W[:, cols]) / test_total

    eta = cfg.eta if cfg.eta is not None else default_eta(design, cfg.adagrad)
    prox = _Prox(variant, n)
    rng = np.random.default_rng(cfg.seed)
    accum = np.zeros_like(W)

    obj0 = objective_value(design, W, variant)
    trace = [obj0]
    nll_trace = [design.nll(W)]
    test_trace = [test_eval(W)] if test_eval else []
    W_snap, mu = None, None
    converged = False
    passes = 0
    for epoch in range(cfg.epochs):
        svrg = epoch >= cfg.warmup_epochs
        if svrg and (epoch - cfg.warmup_epochs) % cfg.full_grad_every == 0:
            W_snap = W.copy()
            mu = design.grad(W_snap, None, cfg.b_floor) / n
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            batch = np.sort(order[start:start + cfg.minibatch])
            if svrg:
                g = svrg_direction(design, W, W_snap, mu, batch, cfg.b_floor)
            else:
                g = design.grad(W, batch, cfg.b_floor) / batch.size
            g = g + _smooth_penalty_grad(W, variant, n)
            if cfg.adagrad:
                accum += g * g
                step = eta / (np.sqrt(accum) + cfg.adagrad_eps)
                W = prox(W - step * g, step)
            else:
                W = prox(W - eta * g, eta)
            if check_feasibility:
                assert np.all(W >= 0)
                if variant.monotone:
                    assert np.all(np.diff(W[1:], axis=1) >= 0)
        passes += 1
        obj = objective_value(design, W, variant)
        trace.append(obj)
        nll_trace.append(design.nll(W))
        if test_eval:
            test_trace.append(test_eval(W))
        if not math.isfinite(obj) or obj > 10 * abs(obj0):
            raise DivergenceError(
                f"objective {obj:.6g} after pass {passes} exceeds 10x the initial {obj0:.6g}")
        if cfg.tol and abs(trace[-2] - obj) <= cfg.tol * max(abs(trace[-2]), 1e-300):
            converged = True
            break
    polished = 0
    if cfg.polish_iters:
        W, ptrace, _, polished, converged, _ = _accelerated(design, variant, W, cfg.polish_iters,
                                                            cfg.polish_tol, cfg.b_floor)
        # the polished iterate is reported as one extra trace entry
        trace.append(ptrace[-1])
        nll_trace.append(design.nll(W))
        if test_eval:
            test_trace.append(test_eval(W))
    coeffs = CoefficientSet(W, grid, variant)
    return FitResult(coeffs, trace, test_trace, nll_trace, passes, converged, eta, polished)


def _metric(grid: KnotGrid) -> np.ndarray:
    """Per-knot segment lengths; the last knot borrows its neighbour's."""
    m = np.empty(grid.n_knots)
    m[:-1] = grid.lengths
    m[-1] = m[-2]
    return m


def _accelerated(design: Design, variant: ModelVariant, W: np.ndarray, max_iter: int,
                 tol: float, b_floor: float):
    """FISTA with backtracking and restarts in the length metric.

    Returns ``(W, objective_trace, nll_trace, iterations, converged, L)``.
    """
    n = design.n_sites
    prox = _Prox(variant, n)
    metric = np.broadcast_to(_metric(design.grid), W.shape)

    def smooth(V):
        val = design.nll(V) / n
        if variant.penalty is Penalty.LOG and variant.gamma:
            val += variant.gamma / n * sum(penalties.xi(row, variant.epsilon) for row in V)
        return val

    Y, W_prev, t_mom, L = W.copy(), W.copy(), 1.0, 1.0
    trace = [objective_value(design, W, variant)]
    nll_trace = [design.nll(W)]
    converged, fresh = False, True
    it = 0
    for it in range(1, max_iter + 1):
        fy = smooth(Y)
        gy = design.grad(Y, None, b_floor) / n + _smooth_penalty_grad(Y, variant, n)
        while True:
            step = 1.0 / (L * metric)
            Z = prox(Y - step * gy, step)
            dz = Z - Y
            fz = smooth(Z)
            if math.isfinite(fz) and fz <= fy + np.sum(gy * dz) + 0.5 * L * np.sum(metric * dz * dz):
                break
            L *= 2.0
            if L > 1e30:
                raise DivergenceError("backtracking failed to find a descent step")
        obj = objective_value(design, Z, variant)
        prev = trace[-1]
        if obj > prev and not fresh:
            # restart the momentum from the last accepted point
            Y, t_mom, fresh = W.copy(), 1.0, True
            continue
        W_prev, W = W, Z
        t_next = 0.5 * (1 + math.sqrt(1 + 4 * t_mom * t_mom))
        Y = W + ((t_mom - 1) / t_next) * (W - W_prev)
        t_mom, fresh = t_next, False
        L *= 0.9
        trace.append(obj)
        nll_trace.append(design.nll(W))
        if abs(prev - obj) <= tol * max(abs(prev), 1.0):
            converged = True
            break
    return W, trace, nll_trace, it, converged, L


def fit_full_batch(data: Sequence[Observation], grid: KnotGrid, variant: ModelVariant,
                   n_features: Optional[int] = None, max_iter: int = 5000, tol: float = 1e-12,
                   init: Optional[np.ndarray] = None, b_floor: float = 1e-10) -> FitResult:
    """Accelerated proximal gradient with backtracking, for small problems.

    Steps are taken in the metric ``diag(segment length)``, so that a step
    function behaves the same on any grid that represents it. The momentum
    restarts whenever the objective increases.
    """
    if not data:
        raise DataError("no observations to fit")
    if n_features is None:
        n_features = max((tr.feature_id for o in data for tr in o.tracks), default=0)
    design = Design.compile(data, grid, n_features)
    W = initial_values(design) if init is None else np.array(init, dtype=float)
    if not math.isfinite(design.nll(W)):
        raise DataError("zero-probability bracket at initialization")
    W, trace, nll_trace, it, converged, L = _accelerated(design, variant, W, max_iter, tol, b_floor)
    return FitResult(CoefficientSet(W, grid, variant), trace, [], nll_trace, it, converged, 1.0 / L)


def evaluate(coeffs: CoefficientSet, data: Sequence[Observation],
             variant: Optional[ModelVariant] = None) -> float:
    """Weighted mean NLL per site, penalty excluded."""
    grid = coeffs.grid.union(build_knot_grid(data, coeffs.grid.horizon))
    refined = coeffs.refine(grid)
    design = Design.compile(data, grid, coeffs.n_features)
    return design.nll(refined.values) / float(design.weight.sum())


def count_active_breakpoints(coeffs: CoefficientSet, tol: float = 1e-6) -> int:
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return int(np.sum(np.abs(np.diff(coeffs.values, axis=1)) > tol))
