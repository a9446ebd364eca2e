"""Independent reference solvers for the proximal maps."""
import functools

import cvxpy as cp
import numpy as np


PROX_SOLVERS = [
    (cp.CLARABEL, {"tol_gap_abs": 1e-12, "tol_gap_rel": 1e-12, "tol_feas": 1e-12}),
    (cp.CLARABEL, {"tol_gap_abs": 1e-10, "tol_gap_rel": 1e-10, "tol_feas": 1e-10}),
    (cp.OSQP, {"eps_abs": 1e-12, "eps_rel": 1e-12, "polish": True, "max_iter": 200_000}),
]


@functools.lru_cache(maxsize=None)
def _problem(n, monotone):
    w = cp.Variable(n)
    a = cp.Parameter(n, nonneg=True)
    av = cp.Parameter(n)  # a * v
    lam = cp.Parameter(nonneg=True)
    cons = [w >= 0]
    if monotone and n > 1:
        cons.append(cp.diff(w) >= 0)
    pen = cp.norm1(cp.diff(w)) if n > 1 else 0
    # 0.5 * sum a (w - v)^2 up to a constant, written so parameters enter affinely
    obj = 0.5 * cp.sum(cp.multiply(a, cp.square(w))) - av @ w + lam * pen
    return cp.Problem(cp.Minimize(obj), cons), w, a, av, lam


def brute_force_prox(values, lam, monotone=False, weights=None):
    """``argmin_{w >= 0, (monotone)} 0.5 sum a (w - v)^2 + lam ||Dw||_1`` by conic solver."""
    values = np.asarray(values, float)
    n = values.size
    prob, w, a, av, lam_p = _problem(n, bool(monotone))
    a.value = np.ones(n) if weights is None else np.asarray(weights, float)
    av.value = a.value * values
    lam_p.value = float(lam)
    for name, opts in PROX_SOLVERS:
        try:
            prob.solve(solver=name, **opts)
        except cp.error.SolverError:
            continue
        if prob.status == cp.OPTIMAL:
            return np.asarray(w.value)
    raise cp.error.SolverError(f"no QP solver reached optimality (last status {prob.status})")


def prox_objective(w, values, lam, weights=None):
    a = np.ones_like(values) if weights is None else weights
    return 0.5 * np.sum(a * (w - values) ** 2) + lam * np.sum(np.abs(np.diff(w)))


CONIC_SOLVERS = [
    (cp.CLARABEL, {}),
    (cp.CLARABEL, {"max_iter": 2000, "static_regularization_constant": 1e-7}),
    (cp.SCS, {"eps": 1e-10, "max_iters": 200_000}),
]


def _site_maps(obs, grid, n_features):
    """Coefficient matrices of the cumulative hazard before the bracket and inside it."""
    times = grid.times
    K = grid.n_knots
    lead = np.zeros((n_features + 1, K))
    inner = np.zeros((n_features + 1, K))
    if obs.is_interval:
        lo, hi = obs.censor.t_lo, obs.censor.t_hi
    else:
        lo = hi = obs.censor.T
    for ell in range(K - 1):
        a, b = times[ell], times[ell + 1]
        x = np.zeros(n_features + 1)
        x[0] = 1.0
        for j, val in obs.features_at(a).items():
            x[j] = val
        lead[:, ell] = x * max(0.0, min(b, lo) - a)
        inner[:, ell] = x * max(0.0, min(b, hi) - max(a, lo))
    return lead, inner


def conic_fit(data, grid, n_features, gamma, monotone=False, solver=None, solver_opts=None):
    """Exact minimizer of the TV-penalized NLL through the exponential cone.

    Returns ``(None, None)`` when no solver certifies optimality.

    ``-log(1 - exp(-B)) <= t`` iff ``exp(-t) + exp(-B) <= 1``.
    """
    W = cp.Variable((n_features + 1, grid.n_knots))
    cons = [W >= 0]
    if monotone and n_features:
        cons.append(cp.diff(W[1:], axis=1) >= 0)
    terms = []
    for obs in data:
        lead, inner = _site_maps(obs, grid, n_features)
        L = cp.sum(cp.multiply(lead, W))
        if obs.is_interval:
            B = cp.sum(cp.multiply(inner, W))
            t = cp.Variable()
            cons.append(cp.exp(-t) + cp.exp(-B) <= 1)
            terms.append(obs.weight * (L + t))
        else:
            terms.append(obs.weight * L)
    obj = cp.sum(cp.hstack(terms)) + gamma * cp.sum(cp.abs(cp.diff(W, axis=1)))
    prob = cp.Problem(cp.Minimize(obj), cons)
    attempts = [(solver, solver_opts or {})] if solver else CONIC_SOLVERS
    for name, opts in attempts:
        try:
            prob.solve(solver=name, **opts)
        except cp.error.SolverError:
            continue
        if prob.status == cp.OPTIMAL:
            return float(prob.value), np.asarray(W.value)
    return None, None
