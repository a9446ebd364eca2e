"""Synthetic attack-campaign data.

A handful of *exploit* features carry step-function hazards whose jumps mark
the start of attack campaigns; every other feature has zero effect. Hack
times are drawn exactly from the induced piecewise-constant hazard and then
interval-censored by random checking points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (CoefficientSet, FeatureTrack, IntervalCensored, KnotGrid, ModelVariant,
                   Observation, RightCensored, hazard_profile)


@dataclass(frozen=True)
class SimConfig:
    n_sites: int = 1000
    n_features: int = 40
    n_exploits: int = 4
    horizon: float = 10.0
    monotone_truth: bool = True
    max_campaigns_per_exploit: int = 3
    hazard_range: tuple = (0.05, 1.0)
    checkpoint_rate: float = 5.0
    feature_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.n_exploits <= self.n_features:
            raise ValueError("need 0 <= n_exploits <= n_features")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        lo, hi = self.hazard_range
        if not 0 < lo <= hi:
            raise ValueError("hazard_range must satisfy 0 < lo <= hi")
        if self.max_campaigns_per_exploit < 1:
            raise ValueError("max_campaigns_per_exploit must be >= 1")
        if not 0 <= self.feature_prob <= 1:
            raise ValueError("feature_prob must be in [0, 1]")


@dataclass
class GroundTruth:
    coeffs: CoefficientSet
    exploit_ids: frozenset


def generate_truth(cfg: SimConfig) -> GroundTruth:
    """Random campaign change points and rates for each exploit feature."""
    rng = np.random.default_rng([cfg.seed, 0])
    exploits = np.sort(rng.choice(np.arange(1, cfg.n_features + 1), cfg.n_exploits,
                                  replace=False)) if cfg.n_exploits else np.array([], int)
    campaigns = []
    for j in exploits:
        k = int(rng.integers(1, cfg.max_campaigns_per_exploit + 1))
        starts = np.sort(rng.uniform(0.0, cfg.horizon, size=k))
        rates = rng.uniform(*cfg.hazard_range, size=k)
        if cfg.monotone_truth:
            rates = np.sort(rates)
        campaigns.append((int(j), starts, rates))
    knots = np.concatenate([[0.0, cfg.horizon]] + [c[1] for c in campaigns])
    grid = KnotGrid(np.unique(knots))
    W = np.zeros((cfg.n_features + 1, grid.n_knots))
    for j, starts, rates in campaigns:
        for s, r in zip(starts, rates):
            W[j, grid.times >= s] = r
    variant = ModelVariant(monotone=cfg.monotone_truth)
    return GroundTruth(CoefficientSet(W, grid, variant), frozenset(int(j) for j in exploits))


def sample_hack_time(truth, tracks: Sequence[FeatureTrack], rng: np.random.Generator,
                     horizon: Optional[float] = None) -> Optional[float]:
    """First event of the site's piecewise-constant hazard before ``horizon``.

    Segment by segment an exponential waiting time is drawn at the segment's
    rate and accepted if it ends inside the segment; memorylessness makes
    this exact. ``horizon`` may be ``inf``. Returns ``None`` for survivors.
    """
    coeffs = truth.coeffs if isinstance(truth, GroundTruth) else truth
    if horizon is None:
        horizon = coeffs.grid.horizon
    probe = Observation("_", RightCensored(0.0), 1.0, tuple(tracks))
    starts, stops, rates = hazard_profile(coeffs, probe, horizon)
    for a, b, rate in zip(starts, stops, rates):
        if rate <= 0:
            continue
        t = a - math.log(1.0 - rng.random()) / rate
        if t < b:
            return float(t)
    return None


def censor(hack_time: Optional[float], checkpoints: Sequence[float], horizon: float):
    """Bracket a hack time by the surrounding checking points (0 and horizon implicit)."""
    if hack_time is None:
        return RightCensored(horizon)
    pts = np.unique(np.concatenate([[0.0, horizon], np.asarray(checkpoints, float)]))
    k = int(np.searchsorted(pts, hack_time, side="right"))
    return IntervalCensored(float(pts[k - 1]), float(pts[min(k, pts.size - 1)]))


def simulate_sites(truth: GroundTruth, cfg: SimConfig, n_sites: Optional[int] = None,
                   stream: int = 1, prefix: str = "s") -> list:
    """Draw sites against a fixed truth; ``stream`` separates train/test draws."""
    n = cfg.n_sites if n_sites is None else n_sites
    out = []
    for i in range(n):
        rng = np.random.default_rng([cfg.seed, stream, i])
        on = np.flatnonzero(rng.random(cfg.n_features) < cfg.feature_prob) + 1
        tracks = tuple(FeatureTrack.constant(int(j)) for j in on)
        t = sample_hack_time(truth, tracks, rng, cfg.horizon)
        n_check = rng.poisson(cfg.checkpoint_rate)
        checkpoints = np.sort(rng.uniform(0.0, cfg.horizon, size=n_check))
        out.append(Observation(f"{prefix}{i:05d}", censor(t, checkpoints, cfg.horizon),
                               1.0, tracks))
    return out


def generate_dataset(cfg: SimConfig):
    """Training sites and the truth that generated them."""
    truth = generate_truth(cfg)
    return simulate_sites(truth, cfg), truth
