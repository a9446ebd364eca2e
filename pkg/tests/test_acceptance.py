"""Acceptance criteria, one test per criterion.

Each test prints a single ``CRITERION <k> PASS|FAIL: ...`` line. Run with
``pytest tests/test_acceptance.py -v`` or directly as a script.

Criteria 4 to 6 share one set of synthetic fits on seeds 0..4. Their
penalty strengths were chosen beforehand on seeds 100..104 and are frozen in
``REGIMES``.
"""
import functools
import math
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

sys.path.insert(0, str(Path(__file__).parent))

from tvhazard.cli import main as cli_main
from tvhazard.core import CoefficientSet, KnotGrid, ModelVariant, build_knot_grid, eval_hazard
from tvhazard.likelihood import dataset_objective, dense_gradient, neg_log_likelihood
from tvhazard.penalties import prox_full, tv_discrete, tv_log_discrete, xi, xi_gradient
from tvhazard.simulator import SimConfig, generate_dataset, sample_hack_time, simulate_sites
from tvhazard.solver import SolverConfig, evaluate, fit, fit_full_batch

from helpers import random_coeffs, random_observation, random_problem
from oracles import brute_force_prox, conic_fit

ACCEPTANCE_SEEDS = (0, 1, 2, 3, 4)

# frozen after tuning on seeds 100..104; see the decisions ledger
REGIMES = {
    "monotone": {"log": ModelVariant("log", True, 20.0, 1.0)},
    "non-monotone": {"log": ModelVariant("log", False, 20.0, 1.0),
                     "tv": ModelVariant("tv", False, 40.0),
                     "none": ModelVariant("none", False, 0.0)},
}


def report(k, ok, detail, capsys=None):
    line = f"CRITERION {k} {'PASS' if ok else 'FAIL'}: {detail}"
    if capsys is not None:
        with capsys.disabled():
            print("\n" + line)
    else:
        print(line)
    return ok


# 1 ----------------------------------------------------------------------------

def criterion_1():
    rng = np.random.default_rng(2024)
    worst = 0.0
    count = 0
    for mono in (False, True):
        variant = ModelVariant("tv", mono)
        for _ in range(1000):
            n = int(rng.integers(1, 7))
            v = rng.normal(scale=rng.choice([0.5, 2.0, 5.0]), size=n)
            gamma = rng.uniform(0.0, 2.0)
            got = prox_full(v, variant, gamma)
            ref = brute_force_prox(v, gamma, mono)
            worst = max(worst, float(np.max(np.abs(got - ref))))
            count += 1
    return worst <= 1e-6, f"{count} vectors (standard + monotone), max abs error {worst:.2e} (tol 1e-6)"


# 2 ----------------------------------------------------------------------------

def _fd(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def criterion_2():
    rng = np.random.default_rng(77)
    worst = 0.0
    pairs = {"interval": 0, "right": 0, "xi": 0}
    for k in range(200):
        interval = k % 2 == 0
        obs = random_observation(rng, f"s{k}", 3, interval=interval)
        grid = build_knot_grid([obs], 5.0)
        c = random_coeffs(rng, grid, 3)
        g = dense_gradient(c, obs)
        fd = _fd(lambda W: neg_log_likelihood(CoefficientSet(W, grid), obs), c.values)
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))
        pairs["interval" if interval else "right"] += 1
    for k in range(200):
        v = rng.normal(size=int(rng.integers(2, 10)))
        eps = rng.uniform(0.05, 1.0)
        g = xi_gradient(v, eps)
        fd = _fd(lambda x: xi(x, eps), v)
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))
        pairs["xi"] += 1
    detail = (f"{pairs['interval']} interval + {pairs['right']} right-censored likelihood pairs, "
              f"{pairs['xi']} xi vectors; max rel error {worst:.2e} (tol 1e-4)")
    return worst <= 1e-4, detail


# 3 ----------------------------------------------------------------------------

def _hazard_gap(x, y, data, times):
    return max((abs(eval_hazard(x, o, t) - eval_hazard(y, o, t)) for o in data for t in times),
               default=0.0)


def criterion_3():
    """Independent fits on the canonical grid and a 10x refinement.

    The warm-start figure is a diagnostic only: the refined fit started from
    the embedded canonical optimum. It does not enter the verdict.
    """
    worst_obj = worst_haz = worst_conic = worst_warm = 0.0
    problems = conic_checked = conic_failed = 0
    for k in range(20):
        rng = np.random.default_rng(3000 + k)
        data, grid = random_problem(rng, int(rng.integers(2, 6)), int(rng.integers(1, 4)))
        d = max((tr.feature_id for o in data for tr in o.tracks), default=0)
        mono = k % 4 in (1, 2)
        variant = ModelVariant("tv", mono, 0.5) if k % 2 == 0 else \
            ModelVariant("log", mono, 0.5, 0.5)
        fine = grid.refine(10)
        a = fit_full_batch(data, grid, variant, n_features=d, max_iter=100_000)
        b = fit_full_batch(data, fine, variant, n_features=d, max_iter=100_000)
        oa = dataset_objective(a.coeffs, data)
        ob = dataset_objective(b.coeffs, data)
        worst_obj = max(worst_obj, abs(oa - ob))
        worst_haz = max(worst_haz, _hazard_gap(a.coeffs, b.coeffs, data, grid.times))
        warm = fit_full_batch(data, fine, variant, n_features=d, max_iter=100_000,
                              init=a.coeffs.refine(fine).values)
        worst_warm = max(worst_warm, _hazard_gap(a.coeffs, warm.coeffs, data, grid.times))
        if variant.penalty.value == "tv":
            ca, _ = conic_fit(data, grid, d, 0.5, mono)
            cb, _ = conic_fit(data, fine, d, 0.5, mono)
            for c, o in ((ca, oa), (cb, ob)):
                if c is None:
                    conic_failed += 1
                else:
                    worst_conic = max(worst_conic, abs(c - o))
                    conic_checked += 1
        problems += 1
    ok = worst_obj <= 1e-3 and worst_haz <= 1e-3 and worst_conic <= 1e-3
    detail = (f"{problems} problems, independent fits on canonical vs 10x grid: objective gap "
              f"{worst_obj:.2e}, hazard gap at knots {worst_haz:.2e}; exact conic solves "
              f"on {conic_checked} TV grids, {conic_failed} not certified by any solver: fit vs conic "
              f"gap {worst_conic:.2e} (tol 1e-3 each); "
              f"diagnostic: refined fit warm-started at the canonical optimum moves hazards "
              f"by {worst_warm:.2e}")
    return ok, detail


# 4-6 --------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def synthetic_runs(regime):
    mono = regime == "monotone"
    runs = []
    for seed in ACCEPTANCE_SEEDS:
        cfg = SimConfig(seed=seed, monotone_truth=mono)
        train, truth = generate_dataset(cfg)
        test = simulate_sites(truth, cfg, stream=2)
        grid = build_knot_grid(train, cfg.horizon)
        nonex = [j for j in range(1, cfg.n_features + 1) if j not in truth.exploit_ids]
        rec = {"seed": seed, "truth": evaluate(truth.coeffs, test), "fits": {}}
        for name, variant in REGIMES[regime].items():
            r = fit(train, grid, variant, SolverConfig(seed=seed), n_features=cfg.n_features,
                    test=test)
            W = r.coeffs.values
            rec["fits"][name] = {
                "variant": variant,
                "test": r.test_trace[-1],
                "zeros": sum(bool(np.all(W[j] == 0)) for j in nonex),
                "n_nonex": len(nonex),
                "sup": max(float(W[j].max()) for j in nonex),
            }
        runs.append(rec)
    return runs


def criterion_4():
    parts, ok = [], True
    for regime, variants in REGIMES.items():
        runs = synthetic_runs(regime)
        truth = np.mean([r["truth"] for r in runs])
        for name, v in variants.items():
            if v.penalty.value == "none":
                continue
            fitted = np.mean([r["fits"][name]["test"] for r in runs])
            ratio = fitted / truth
            per_seed = ", ".join(f"{r['fits'][name]['test'] / r['truth']:.3f}" for r in runs)
            ok &= bool(ratio <= 1.05)
            parts.append(f"{regime}/{name} (gamma={v.gamma:g}) fitted {fitted:.4f} vs truth "
                         f"{truth:.4f}, ratio {ratio:.4f} [per seed {per_seed}]")
    return ok, "; ".join(parts) + " (tol ratio <= 1.05)"


def criterion_5():
    parts, ok = [], True
    for regime in REGIMES:
        for r in synthetic_runs(regime):
            for name, f in r["fits"].items():
                if f["variant"].penalty.value == "none":
                    continue
                frac = f["zeros"] / f["n_nonex"]
                good = frac >= 0.9 and f["sup"] <= 0.04
                ok &= good
                parts.append(f"{regime}/{name}/seed{r['seed']}: "
                             f"{f['zeros']}/{f['n_nonex']} zero, sup {f['sup']:.3f}"
                             + ("" if good else " <-"))
    return ok, "; ".join(parts) + " (need >= 90% zero and sup <= 0.04)"


def criterion_6():
    parts, ok = [], True
    for r in synthetic_runs("non-monotone"):
        f = r["fits"]
        none, tv, lg = f["none"]["test"], f["tv"]["test"], f["log"]["test"]
        good = none > tv and none > lg
        ok &= good
        parts.append(f"seed{r['seed']}: none {none:.4f} vs l1 {tv:.4f}, log {lg:.4f}"
                     + ("" if good else " <-"))
    return ok, "; ".join(parts)


# 7 ----------------------------------------------------------------------------

def criterion_7():
    lam, horizon, n = 0.3, 10.0, 10_000
    grid = KnotGrid([0.0, horizon])
    model = CoefficientSet(np.array([[lam, lam]]), grid)
    rng = np.random.default_rng(7)
    draws = np.array([sample_hack_time(model, (), rng) or np.inf for _ in range(n)])
    probes = np.linspace(0.5, 9.5, 10)
    misses = 0
    for t in probes:
        lo, hi = stats.binom.interval(0.99, n, math.exp(-lam * t))
        misses += not (lo <= int(np.sum(draws > t)) <= hi)
    mean_rng = np.random.default_rng(8)
    mean = np.mean([sample_hack_time(model, (), mean_rng, math.inf) for _ in range(n)])
    rel = abs(mean * lam - 1.0)
    ok = misses == 0 and rel <= 0.02
    return ok, (f"{n} sites, {10 - misses}/10 probes inside 99% binomial CI; "
                f"mean {mean:.4f} vs 1/lambda {1 / lam:.4f} (rel {rel:.4f}, tol 0.02)")


# 8 ----------------------------------------------------------------------------

def criterion_8():
    rng = np.random.default_rng(88)
    worst = -np.inf
    for _ in range(10_000):
        v = rng.normal(scale=rng.choice([0.01, 1.0, 100.0]), size=int(rng.integers(1, 20)))
        worst = max(worst, tv_log_discrete(v, 1.0) - tv_discrete(v))
    return worst <= 0.0, f"10000 vectors, max tv_log - tv = {worst:.3e} (need <= 0)"


# 9 ----------------------------------------------------------------------------

def criterion_9(tmp):
    tmp = Path(tmp)
    assert cli_main(["simulate", "--sites", "300", "--test-sites", "100", "--seed", "9",
                     "--out-dir", str(tmp / "data")]) == 0
    outs = []
    for k in range(2):
        out = tmp / f"model{k}.json"
        code = cli_main(["fit", "--train", str(tmp / "data" / "train_observations.csv"),
                         "--test", str(tmp / "data" / "test_observations.csv"),
                         "--horizon", "10", "--penalty", "log", "--monotone", "--gamma", "5",
                         "--epochs", "4", "--seed", "13", "--out", str(out),
                         "--trace", str(tmp / f"trace{k}.csv")])
        assert code == 0
        outs.append((out.read_bytes(), (tmp / f"trace{k}.csv").read_bytes()))
    same = outs[0] == outs[1]
    return same, f"two fit runs: model files {len(outs[0][0])} bytes, byte-identical={same}"


# pytest entry points ------------------------------------------------------------

def test_criterion_1_prox_oracle(capsys):
    ok, detail = criterion_1()
    assert report(1, ok, detail, capsys), detail


def test_criterion_2_gradients(capsys):
    ok, detail = criterion_2()
    assert report(2, ok, detail, capsys), detail


def test_criterion_3_representer(capsys):
    ok, detail = criterion_3()
    assert report(3, ok, detail, capsys), detail


@pytest.mark.slow
def test_criterion_4_synthetic_nll(capsys):
    ok, detail = criterion_4()
    assert report(4, ok, detail, capsys), detail


@pytest.mark.slow
def test_criterion_5_sparsity(capsys):
    ok, detail = criterion_5()
    assert report(5, ok, detail, capsys), detail


@pytest.mark.slow
def test_criterion_6_regularization_ordering(capsys):
    ok, detail = criterion_6()
    assert report(6, ok, detail, capsys), detail


def test_criterion_7_simulator(capsys):
    ok, detail = criterion_7()
    assert report(7, ok, detail, capsys), detail


def test_criterion_8_log_tv_bound(capsys):
    ok, detail = criterion_8()
    assert report(8, ok, detail, capsys), detail


def test_criterion_9_determinism(tmp_path, capsys):
    ok, detail = criterion_9(tmp_path)
    assert report(9, ok, detail, capsys), detail


if __name__ == "__main__":
    import tempfile

    results = []
    for k, fn in enumerate([criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
                            criterion_6, criterion_7, criterion_8], start=1):
        results.append(report(k, *fn()))
    with tempfile.TemporaryDirectory() as d:
        results.append(report(9, *criterion_9(d)))
    sys.exit(0 if all(results) else 1)
