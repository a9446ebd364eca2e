"""Random problem generators shared by the test modules."""
import numpy as np

from tvhazard.core import (CoefficientSet, FeatureTrack, IntervalCensored, ModelVariant,
                           Observation, RightCensored, build_knot_grid)


def random_track(rng, j, horizon, max_events=3):
    k = int(rng.integers(1, max_events + 1))
    times = np.sort(rng.choice(np.linspace(0, horizon, 41)[:-1], size=k, replace=False))
    vals = rng.uniform(0.0, 2.0, size=k)
    if rng.random() < 0.3:
        vals[0] = 0.0
    return FeatureTrack(j, times, vals)


def random_observation(rng, site_id, n_features, horizon=5.0, interval=None):
    if interval is None:
        interval = rng.random() < 0.6
    if interval:
        lo, hi = np.sort(rng.uniform(0, horizon, size=2))
        if rng.random() < 0.2:
            lo = 0.0
        censor = IntervalCensored(float(lo), float(hi))
    else:
        censor = RightCensored(float(rng.uniform(0.1, horizon)))
    feats = [j for j in range(1, n_features + 1) if rng.random() < 0.7]
    tracks = tuple(random_track(rng, j, horizon) for j in feats)
    return Observation(site_id, censor, float(rng.uniform(0.5, 2.0)), tracks)


def random_problem(rng, n_sites, n_features, horizon=5.0):
    data = [random_observation(rng, f"s{i}", n_features, horizon) for i in range(n_sites)]
    return data, build_knot_grid(data, horizon)


def random_coeffs(rng, grid, n_features, low=0.05, high=1.0, variant=None):
    W = rng.uniform(low, high, size=(n_features + 1, grid.n_knots))
    return CoefficientSet(W, grid, variant or ModelVariant())
