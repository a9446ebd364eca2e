"""CSV data files and versioned JSON model documents.

Observation rows: ``site_id,censor_type,t_lo,t_hi,weight``; right-censored
rows leave ``t_lo`` empty and put the censoring time in ``t_hi``.
Feature-event rows: ``site_id,feature,time,value``.
"""
from __future__ import annotations

import csv
import json
import logging
import warnings
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import (CoefficientSet, FeatureTrack, IntervalCensored, InvalidInputError, KnotGrid,
                   ModelVariant, Observation, RightCensored)

log = logging.getLogger(__name__)

MODEL_FORMAT = "tvhazard-model"
MODEL_VERSION = 1
BASELINE = "(baseline)"

OBS_COLUMNS = ("site_id", "censor_type", "t_lo", "t_hi", "weight")
OBS_REQUIRED = ("site_id", "censor_type", "t_hi")
EVENT_COLUMNS = ("site_id", "feature", "time", "value")


class FormatError(ValueError):
    """Malformed input file; the message names the file and line."""


@dataclass
class Dataset:
    observations: list
    feature_names: list

    @property
    def horizon(self) -> float:
        return max((t for o in self.observations for t in o.censor_times()), default=0.0)


def _fmt(x: float) -> str:
    return repr(float(x))


def _reader(path: Path, allowed: Sequence[str], required: Sequence[str]):
    fh = open(path, newline="")
    reader = csv.DictReader(fh)
    header = reader.fieldnames or []
    unknown = [c for c in header if c not in allowed]
    if unknown:
        fh.close()
        raise FormatError(f"{path}:1: unknown column(s) {', '.join(unknown)}")
    missing = [c for c in required if c not in header]
    if missing:
        fh.close()
        raise FormatError(f"{path}:1: missing required column(s) {', '.join(missing)}")
    return fh, reader


def _float(path, line, name, raw) -> float:
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise FormatError(f"{path}:{line}: column {name!r} is not a number: {raw!r}") from None


def read_observation_rows(path) -> list:
    """``[(site_id, censor, weight)]`` in file order."""
    path = Path(path)
    fh, reader = _reader(path, OBS_COLUMNS, OBS_REQUIRED)
    rows, seen = [], set()
    with fh:
        for line, rec in enumerate(reader, start=2):
            site = (rec.get("site_id") or "").strip()
            if not site:
                raise FormatError(f"{path}:{line}: empty site_id")
            if site in seen:
                raise FormatError(f"{path}:{line}: duplicate site_id {site!r}")
            seen.add(site)
            kind = (rec.get("censor_type") or "").strip()
            t_hi = _float(path, line, "t_hi", rec.get("t_hi"))
            raw_w = (rec.get("weight") or "").strip()
            weight = _float(path, line, "weight", raw_w) if raw_w else 1.0
            raw_lo = (rec.get("t_lo") or "").strip()
            try:
                if kind == "interval":
                    censor = IntervalCensored(_float(path, line, "t_lo", raw_lo), t_hi)
                elif kind == "right":
                    if raw_lo:
                        raise FormatError(f"{path}:{line}: right-censored rows leave t_lo empty")
                    censor = RightCensored(t_hi)
                else:
                    raise FormatError(f"{path}:{line}: censor_type must be 'interval' or 'right'")
                if not weight > 0:
                    raise InvalidInputError("weight must be positive")
            except InvalidInputError as exc:
                raise FormatError(f"{path}:{line}: {exc}") from None
            rows.append((site, censor, weight))
    return rows


def read_feature_events(path) -> list:
    """``[(site_id, feature, time, value, line)]``."""
    path = Path(path)
    fh, reader = _reader(path, EVENT_COLUMNS, EVENT_COLUMNS)
    out = []
    with fh:
        for line, rec in enumerate(reader, start=2):
            site = (rec.get("site_id") or "").strip()
            name = (rec.get("feature") or "").strip()
            if not site or not name:
                raise FormatError(f"{path}:{line}: empty site_id or feature")
            t = _float(path, line, "time", rec.get("time"))
            v = _float(path, line, "value", rec.get("value"))
            if v < 0:
                raise FormatError(f"{path}:{line}: feature values must be nonnegative")
            out.append((site, name, t, v, line))
    return out


def load_dataset(obs_path, events_path=None, feature_names: Optional[Sequence[str]] = None
                 ) -> Dataset:
    """Assemble observations with their feature tracks.

    Without ``feature_names`` the dictionary is the sorted set of names in
    the events file. With one, names outside it are dropped with a warning.
    """
    rows = read_observation_rows(obs_path)
    events = read_feature_events(events_path) if events_path else []
    known = {r[0] for r in rows}
    if feature_names is None:
        feature_names = sorted({e[1] for e in events})
    index = {name: j + 1 for j, name in enumerate(feature_names)}
    per_site = defaultdict(lambda: defaultdict(list))
    dropped = set()
    for site, name, t, v, line in events:
        if site not in known:
            raise FormatError(f"{events_path}:{line}: unknown site_id {site!r}")
        if name not in index:
            dropped.add(name)
            continue
        per_site[site][index[name]].append((t, v))
    if dropped:
        warnings.warn(f"ignoring features unknown to the model: {', '.join(sorted(dropped))}")
    observations = []
    for site, censor, weight in rows:
        tracks = tuple(FeatureTrack.from_events(j, evs) for j, evs in sorted(per_site[site].items()))
        observations.append(Observation(site, censor, weight, tracks))
    return Dataset(observations, list(feature_names))


def write_observations(path, observations: Iterable[Observation]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OBS_COLUMNS)
        for o in observations:
            if o.is_interval:
                w.writerow([o.site_id, "interval", _fmt(o.censor.t_lo), _fmt(o.censor.t_hi),
                            _fmt(o.weight)])
            else:
                w.writerow([o.site_id, "right", "", _fmt(o.censor.T), _fmt(o.weight)])


def write_feature_events(path, observations: Iterable[Observation],
                         feature_names: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for o in observations:
            for tr in o.tracks:
                name = feature_names[tr.feature_id - 1]
                for t, v in zip(tr.times, tr.values):
                    w.writerow([o.site_id, name, _fmt(t), _fmt(v)])


def default_feature_names(n: int) -> list:
    width = max(2, len(str(n)))
    return [f"x{j:0{width}d}" for j in range(1, n + 1)]


def _compress(row: np.ndarray) -> list:
    """``[[knot_index, value], ...]`` at every change, starting from an implicit 0."""
    out, prev = [], 0.0
    for k, v in enumerate(row):
        if v != prev:
            out.append([k, float(v)])
            prev = v
    return out


def _expand(pairs: list, n: int) -> np.ndarray:
    row = np.zeros(n)
    for k, v in pairs:
        row[int(k):] = float(v)
    return row


def model_document(coeffs: CoefficientSet, feature_names: Sequence[str],
                   metadata: Optional[dict] = None) -> dict:
    if len(feature_names) != coeffs.n_features:
        raise ValueError("feature name dictionary does not match the model size")
    v = coeffs.variant
    coefs = {BASELINE: _compress(coeffs.values[0])}
    for j, name in enumerate(feature_names, start=1):
        coefs[name] = _compress(coeffs.values[j])
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "horizon": coeffs.grid.horizon,
        "knots": [float(t) for t in coeffs.grid.times],
        "variant": {"penalty": v.penalty.value, "monotone": v.monotone,
                    "gamma": float(v.gamma), "epsilon": float(v.epsilon)},
        "features": list(feature_names),
        "coefficients": coefs,
        "metadata": metadata or {},
    }


def save_model(path, coeffs: CoefficientSet, feature_names: Sequence[str],
               metadata: Optional[dict] = None) -> None:
    doc = model_document(coeffs, feature_names, metadata)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def parse_model(doc: dict):
    if doc.get("format") != MODEL_FORMAT:
        raise FormatError("not a tvhazard model document")
    if doc.get("version") != MODEL_VERSION:
        raise FormatError(f"unsupported model version {doc.get('version')!r}; "
                          f"this build reads version {MODEL_VERSION}")
    grid = KnotGrid(doc["knots"])
    names = list(doc["features"])
    coefs = doc["coefficients"]
    W = np.zeros((len(names) + 1, grid.n_knots))
    W[0] = _expand(coefs.get(BASELINE, []), grid.n_knots)
    for j, name in enumerate(names, start=1):
        W[j] = _expand(coefs.get(name, []), grid.n_knots)
    var = doc["variant"]
    variant = ModelVariant(var["penalty"], bool(var["monotone"]), float(var["gamma"]),
                           float(var["epsilon"]))
    return CoefficientSet(W, grid, variant), names, doc.get("metadata", {})


def load_model(path):
    """``(coeffs, feature_names, metadata)`` from a model document."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{exc.lineno}: {exc.msg}") from None
    try:
        return parse_model(doc)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


def curve_rows(coeffs: CoefficientSet, feature_names: Sequence[str],
               selected: Optional[Sequence[str]] = None) -> list:
    """``(feature, knot_time, value)`` rows at every change of each selected curve."""
    names = [BASELINE] + list(feature_names)
    if selected is None:
        selected = list(feature_names)
    unknown = [s for s in selected if s not in names]
    if unknown:
        raise KeyError(unknown)
    rows = []
    times = coeffs.grid.times
    for name in selected:
        row = coeffs.values[names.index(name)]
        rows.append((name, float(times[0]), float(row[0])))
        for k in np.flatnonzero(np.diff(row) != 0) + 1:
            rows.append((name, float(times[k]), float(row[k])))
    return rows


def write_curves(path, rows: Sequence[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("feature", "knot_time", "coefficient"))
        for name, t, v in rows:
            w.writerow([name, _fmt(t), _fmt(v)])
