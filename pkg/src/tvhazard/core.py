"""Data model for time-varying additive hazards.

Coefficients are right-continuous step functions on a shared knot grid.
Row 0 of a coefficient matrix is the baseline hazard ``w0``; row ``j``
(``1 <= j <= d``) multiplies feature ``j``.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np


class InvalidInputError(ValueError):
    """Raised for malformed observations, tracks or grids."""


class DomainError(ValueError):
    """Raised when a hazard is evaluated outside ``[0, horizon]``."""


class KnotGrid:
    """Sorted time points shared by every coefficient function.

    ``times[0]`` is 0 and ``times[-1]`` is the horizon. Segment ``l`` is
    ``[times[l], times[l+1])``; the last knot carries a value that extends
    to infinity but never enters the likelihood.
    """

    __slots__ = ("times",)

    def __init__(self, times: Sequence[float]):
        times = np.array(times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise InvalidInputError("a knot grid needs at least the points 0 and horizon")
        if times[0] != 0.0:
            raise InvalidInputError(f"knot grid must start at 0, got {times[0]}")
        if not np.all(np.diff(times) > 0):
            raise InvalidInputError("knot times must be strictly increasing")
        times.setflags(write=False)
        self.times = times

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_knots(self) -> int:
        return self.times.size

    @property
    def lengths(self) -> np.ndarray:
        """Lengths of the ``n_knots - 1`` finite segments."""
        return np.diff(self.times)

    def locate(self, t) -> np.ndarray:
        """Index of the segment containing ``t`` (right-continuous)."""
        return np.searchsorted(self.times, t, side="right") - 1

    def index_of(self, t: float) -> int:
        """Exact knot index of ``t``; raises if ``t`` is not a knot."""
        k = int(np.searchsorted(self.times, t))
        if k >= self.times.size or self.times[k] != t:
            raise InvalidInputError(f"time {t!r} is not a knot of the grid")
        return k

    def union(self, other: Union["KnotGrid", Iterable[float]]) -> "KnotGrid":
        extra = other.times if isinstance(other, KnotGrid) else np.asarray(list(other), float)
        return KnotGrid(np.union1d(self.times, extra))

    def refine(self, factor: int) -> "KnotGrid":
        """Split every finite segment into ``factor`` equal pieces."""
        if factor < 1:
            raise ValueError("refinement factor must be >= 1")
        t = self.times
        frac = np.arange(factor) / factor
        inner = (t[:-1, None] + np.diff(t)[:, None] * frac[None, :]).ravel()
        return KnotGrid(np.append(inner, t[-1]))

    def __eq__(self, other):
        return isinstance(other, KnotGrid) and np.array_equal(self.times, other.times)

    def __hash__(self):
        return hash(self.times.tobytes())

    def __len__(self):
        return self.times.size

    def __repr__(self):
        return f"KnotGrid(n_knots={self.n_knots}, horizon={self.horizon})"


@dataclass(frozen=True)
class StepFunction:
    """Piecewise-constant function: ``values[l]`` on ``[times[l], times[l+1])``."""

    values: np.ndarray
    grid: KnotGrid

    def __post_init__(self):
        if len(self.values) != self.grid.n_knots:
            raise InvalidInputError(
                f"step function has {len(self.values)} values for {self.grid.n_knots} knots")

    def __call__(self, t):
        idx = np.clip(self.grid.locate(t), 0, None)
        return self.values[idx]

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.values >= 0))

    def is_nondecreasing(self) -> bool:
        return bool(np.all(np.diff(self.values) >= 0))


@dataclass(frozen=True)
class FeatureTrack:
    """Piecewise-constant trajectory of one feature: 0 before the first event."""

    feature_id: int
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.feature_id < 1:
            raise InvalidInputError(f"feature ids start at 1, got {self.feature_id}")
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape or times.ndim != 1:
            raise InvalidInputError("track times and values must be 1-d of equal length")
        if np.any(values < 0):
            raise InvalidInputError(f"feature {self.feature_id} has negative values")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise InvalidInputError(f"feature {self.feature_id} event times not strictly increasing")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_events(cls, feature_id: int, events: Iterable[tuple]) -> "FeatureTrack":
        """Build a track from unsorted ``(time, value)`` events.

        Duplicate times keep the last event given and emit a warning.
        """
        merged: dict[float, float] = {}
        for t, v in events:
            t = float(t)
            if t in merged:
                warnings.warn(f"feature {feature_id}: duplicate event at t={t}, keeping the last one")
            merged[t] = float(v)
        ts = sorted(merged)
        return cls(feature_id, np.array(ts, float), np.array([merged[t] for t in ts], float))

    @classmethod
    def constant(cls, feature_id: int, value: float = 1.0) -> "FeatureTrack":
        return cls(feature_id, np.array([0.0]), np.array([float(value)]))

    def __call__(self, t: float) -> float:
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self.values[k]) if k >= 0 else 0.0


@dataclass(frozen=True)
class IntervalCensored:
    """Event known to lie in ``[t_lo, t_hi)``."""

    t_lo: float
    t_hi: float

    def __post_init__(self):
        if not (0.0 <= self.t_lo < self.t_hi):
            raise InvalidInputError(f"invalid bracket [{self.t_lo}, {self.t_hi}]")


@dataclass(frozen=True)
class RightCensored:
    """No event up to time ``T``."""

    T: float

    def __post_init__(self):
        if not self.T >= 0.0:
            raise InvalidInputError(f"invalid right-censoring time {self.T}")


Censor = Union[IntervalCensored, RightCensored]


@dataclass(frozen=True)
class Observation:
    site_id: str
    censor: Censor
    weight: float = 1.0
    tracks: tuple = ()

    def __post_init__(self):
        if not self.weight > 0:
            raise InvalidInputError(f"site {self.site_id}: weight must be positive")
        tracks = tuple(self.tracks)
        ids = [tr.feature_id for tr in tracks]
        if len(set(ids)) != len(ids):
            raise InvalidInputError(f"site {self.site_id}: several tracks for one feature")
        object.__setattr__(self, "tracks", tuple(sorted(tracks, key=lambda tr: tr.feature_id)))

    @property
    def is_interval(self) -> bool:
        return isinstance(self.censor, IntervalCensored)

    def censor_times(self) -> tuple:
        if self.is_interval:
            return (self.censor.t_lo, self.censor.t_hi)
        return (self.censor.T,)

    def end_time(self) -> float:
        """Last time the likelihood looks at."""
        return self.censor.t_hi if self.is_interval else self.censor.T

    def features_at(self, t: float) -> dict:
        return {tr.feature_id: tr(t) for tr in self.tracks}


def uncensored(site_id: str, t: float, horizon: float, weight: float = 1.0,
               tracks: tuple = (), width: Optional[float] = None) -> Observation:
    """Turn an exactly observed event into a narrow interval-censored record."""
    if width is None:
        width = horizon * 1e-6
    lo = max(0.0, t - width / 2)
    hi = min(horizon, lo + width)
    return Observation(site_id, IntervalCensored(lo, hi), weight, tracks)


class Penalty(str, enum.Enum):
    NONE = "none"
    TV = "tv"
    LOG = "log"


@dataclass(frozen=True)
class ModelVariant:
    penalty: Penalty = Penalty.NONE
    monotone: bool = False
    gamma: float = 0.0
    epsilon: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "penalty", Penalty(self.penalty))
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.penalty is Penalty.LOG and not (0 < self.epsilon <= 1):
            raise ValueError("log penalty needs 0 < epsilon <= 1")


@dataclass
class CoefficientSet:
    """Baseline plus ``d`` feature coefficients on one grid.

    ``values`` has shape ``(d + 1, n_knots)``. The solver is the only writer.
    """

    values: np.ndarray
    grid: KnotGrid
    variant: ModelVariant = field(default_factory=ModelVariant)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != self.grid.n_knots:
            raise InvalidInputError(
                f"coefficient matrix shape {self.values.shape} does not match grid of "
                f"{self.grid.n_knots} knots")

    @classmethod
    def zeros(cls, n_features: int, grid: KnotGrid, variant: Optional[ModelVariant] = None):
        return cls(np.zeros((n_features + 1, grid.n_knots)), grid, variant or ModelVariant())

    @property
    def n_features(self) -> int:
        return self.values.shape[0] - 1

    @property
    def w0(self) -> StepFunction:
        return StepFunction(self.values[0], self.grid)

    def function(self, j: int) -> StepFunction:
        return StepFunction(self.values[j], self.grid)

    def copy(self) -> "CoefficientSet":
        return CoefficientSet(self.values.copy(), self.grid, self.variant)

    def refine(self, grid: KnotGrid) -> "CoefficientSet":
        """Same step functions represented on a finer grid."""
        missing = np.setdiff1d(self.grid.times, grid.times)
        if missing.size:
            raise InvalidInputError("target grid must contain every knot of the source grid")
        idx = self.grid.locate(grid.times)
        return CoefficientSet(self.values[:, idx], grid, self.variant)

    def is_feasible(self, atol: float = 0.0) -> bool:
        if np.any(self.values < -atol):
            return False
        if self.variant.monotone and np.any(np.diff(self.values[1:], axis=1) < -atol):
            return False
        return True


def build_knot_grid(observations: Iterable[Observation], horizon: float) -> KnotGrid:
    """Union of 0, the horizon, all censoring boundaries and feature change times."""
    if not horizon > 0:
        raise InvalidInputError("horizon must be positive")
    pts = [np.array([0.0, float(horizon)])]
    for obs in observations:
        ts = np.concatenate([np.asarray(obs.censor_times(), float)]
                            + [tr.times for tr in obs.tracks])
        if ts.size and (ts.min() < 0 or ts.max() > horizon):
            raise InvalidInputError(
                f"site {obs.site_id}: time outside [0, {horizon}]")
        pts.append(ts)
    return KnotGrid(np.unique(np.concatenate(pts)))


def hazard_profile(coeffs: CoefficientSet, obs: Observation, end: float):
    """Piecewise-constant hazard of one site on ``[0, end)``.

    Returns ``(starts, stops, rates)``. ``end`` may exceed the grid horizon;
    the last knot's value then extends to ``end``.
    """
    d = coeffs.n_features
    bps = [coeffs.grid.times[coeffs.grid.times < end]]
    for tr in obs.tracks:
        if tr.feature_id > d:
            raise InvalidInputError(
                f"site {obs.site_id}: feature {tr.feature_id} exceeds model size {d}")
        bps.append(tr.times[tr.times < end])
    starts = np.unique(np.concatenate(bps + [np.array([0.0])]))
    stops = np.append(starts[1:], end)
    seg = np.clip(coeffs.grid.locate(starts), 0, None)
    rates = coeffs.values[0, seg].copy()
    for tr in obs.tracks:
        k = np.searchsorted(tr.times, starts, side="right") - 1
        x = np.where(k >= 0, tr.values[np.clip(k, 0, None)], 0.0)
        rates += x * coeffs.values[tr.feature_id, seg]
    return starts, stops, rates


def _check_domain(coeffs: CoefficientSet, t: float):
    if not (0.0 <= t <= coeffs.grid.horizon):
        raise DomainError(f"t={t} outside [0, {coeffs.grid.horizon}]")


def eval_hazard(coeffs: CoefficientSet, obs: Observation, t: float) -> float:
    """Instantaneous hazard ``w0(t) + sum_j x_j(t) w_j(t)``."""
    _check_domain(coeffs, t)
    seg = max(int(coeffs.grid.locate(t)), 0)
    lam = coeffs.values[0, seg]
    for tr in obs.tracks:
        x = tr(t)
        if x:
            lam += x * coeffs.values[tr.feature_id, seg]
    return float(lam)


def integrate_hazard(coeffs: CoefficientSet, obs: Observation, a: float, b: float) -> float:
    """Exact integral of the site's hazard over ``[a, b]``."""
    if b <= a:
        return 0.0
    starts, stops, rates = hazard_profile(coeffs, obs, b)
    lo = np.maximum(starts, a)
    return float(np.sum(rates * np.clip(stops - lo, 0.0, None)))


def eval_cumulative_hazard(coeffs: CoefficientSet, obs: Observation, t: float) -> float:
    """Cumulative hazard on ``[0, t]``."""
    _check_domain(coeffs, t)
    return integrate_hazard(coeffs, obs, 0.0, t)


def survival(coeffs: CoefficientSet, obs: Observation, t: float) -> float:
    return math.exp(-eval_cumulative_hazard(coeffs, obs, t))
