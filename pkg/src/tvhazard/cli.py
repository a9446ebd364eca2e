"""Command-line interface: ``tvhazard simulate | fit | evaluate | export-curves``.

Exit status is 0 on success, 2 for usage errors and 1 for runtime failures.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

from . import io
from .core import DomainError, InvalidInputError, ModelVariant, build_knot_grid
from .likelihood import ZeroProbabilityError
from .simulator import SimConfig, generate_truth, simulate_sites
from .solver import (DataError, DivergenceError, SolverConfig, count_active_breakpoints,
                     evaluate, fit)

log = logging.getLogger("tvhazard")

RUNTIME_ERRORS = (io.FormatError, InvalidInputError, DomainError, DataError, DivergenceError,
                  ZeroProbabilityError, OSError, KeyError, ValueError)


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _nonneg_float(s: str) -> float:
    v = float(s)
    if not v >= 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _positive_float(s: str) -> float:
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def _events_for(obs: Path, explicit: Optional[str]) -> Optional[Path]:
    """Events file given explicitly, or the sibling with 'observations' replaced by 'events'."""
    if explicit:
        return Path(explicit)
    if "observations" in obs.name:
        cand = obs.with_name(obs.name.replace("observations", "events"))
        if cand.exists():
            return cand
    return None


def cmd_simulate(args) -> int:
    cfg = SimConfig(n_sites=args.sites, n_features=args.features, n_exploits=args.exploits,
                    horizon=args.horizon, monotone_truth=args.monotone,
                    max_campaigns_per_exploit=args.max_campaigns,
                    hazard_range=(args.hazard_min, args.hazard_max),
                    checkpoint_rate=args.checkpoint_rate, feature_prob=args.feature_prob,
                    seed=args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = io.default_feature_names(cfg.n_features)
    truth = generate_truth(cfg)
    train = simulate_sites(truth, cfg, stream=1)
    io.write_observations(out / "train_observations.csv", train)
    io.write_feature_events(out / "train_events.csv", train, names)
    meta = {"kind": "ground-truth", "seed": cfg.seed,
            "exploits": [names[j - 1] for j in sorted(truth.exploit_ids)],
            "simulation": {k: (list(v) if isinstance(v, tuple) else v)
                           for k, v in cfg.__dict__.items()}}
    io.save_model(out / "truth.json", truth.coeffs, names, meta)
    hacked = sum(o.is_interval for o in train) / len(train)
    print(f"train sites: {len(train)}  hacked: {100 * hacked:.1f}%")
    if args.test_sites:
        test = simulate_sites(truth, cfg, n_sites=args.test_sites, stream=2, prefix="t")
        io.write_observations(out / "test_observations.csv", test)
        io.write_feature_events(out / "test_events.csv", test, names)
        hacked = sum(o.is_interval for o in test) / len(test)
        print(f"test sites: {len(test)}  hacked: {100 * hacked:.1f}%")
    print(f"wrote {out}")
    return 0


def cmd_fit(args) -> int:
    train_path = Path(args.train)
    names = io.default_feature_names(args.features) if args.features else None
    train = io.load_dataset(train_path, _events_for(train_path, args.train_events), names)
    names = train.feature_names
    horizon = args.horizon if args.horizon is not None else train.horizon
    if args.horizon is None:
        log.warning("no --horizon given; using the largest censoring time %g", horizon)
    grid = build_knot_grid(train.observations, horizon)
    variant = ModelVariant(args.penalty, args.monotone, args.gamma, args.epsilon)
    cfg = SolverConfig(eta=args.eta, minibatch=args.minibatch, epochs=args.epochs,
                       warmup_epochs=args.warmup_epochs, full_grad_every=args.full_grad_every,
                       adagrad=not args.no_adagrad, seed=args.seed, tol=args.tol,
                       polish_iters=args.polish_iters)
    test = None
    if args.test:
        test_path = Path(args.test)
        test = io.load_dataset(test_path, _events_for(test_path, args.test_events),
                               names).observations
    result = fit(train.observations, grid, variant, cfg, n_features=len(names), test=test)
    meta = {"kind": "fit", "seed": args.seed, "solver": cfg.to_dict(), "eta_used": result.eta,
            "passes": result.passes, "polish_iters": result.polish_iters,
            "converged": result.converged,
            "final_objective": result.objective_trace[-1],
            "train_file": train_path.name, "n_sites": len(train.observations)}
    io.save_model(args.out, result.coeffs, names, meta)
    trace_path = Path(args.trace) if args.trace else Path(str(args.out) + ".trace.csv")
    n = len(train.observations)
    with open(trace_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pass", "stage", "objective", "train_nll", "train_mean_nll",
                    "test_mean_nll"])
        for k, obj in enumerate(result.objective_trace):
            stage = "init" if k == 0 else ("sgd" if k <= cfg.warmup_epochs else "svrg")
            if result.polish_iters and k == len(result.objective_trace) - 1:
                stage = "polish"
            t = repr(result.test_trace[k]) if result.test_trace else ""
            nll = result.nll_trace[k]
            w.writerow([k, stage, repr(obj), repr(nll), repr(nll / n), t])
    final = result.objective_trace[-1]
    print(f"passes: {result.passes}  objective: {final:.6f}  mean: {final / n:.6f}")
    if result.test_trace:
        print(f"test mean NLL: {result.test_trace[-1]:.6f}")
    print(f"wrote {args.out} and {trace_path}")
    return 0


def cmd_evaluate(args) -> int:
    coeffs, names, _ = io.load_model(args.model)
    data_path = Path(args.data)
    data = io.load_dataset(data_path, _events_for(data_path, args.events), names)
    nll = evaluate(coeffs, data.observations)
    print(f"mean NLL: {nll:.6f}")
    print(f"active breakpoints: {count_active_breakpoints(coeffs, args.tol)}")
    print("feature max_coefficient")
    for j, name in enumerate([io.BASELINE] + names):
        print(f"{name} {coeffs.values[j].max():.6g}")
    return 0


def cmd_export_curves(args) -> int:
    coeffs, names, _ = io.load_model(args.model)
    selected = None
    if args.features:
        selected = [s.strip() for s in args.features.split(",") if s.strip()]
    try:
        rows = io.curve_rows(coeffs, names, selected)
    except KeyError as exc:
        missing = ", ".join(exc.args[0])
        print(f"error: unknown feature(s): {missing}", file=sys.stderr)
        print(f"available: {', '.join([io.BASELINE] + names)}", file=sys.stderr)
        return 1
    if args.out:
        io.write_curves(args.out, rows)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(("feature", "knot_time", "coefficient"))
        for name, t, v in rows:
            w.writerow([name, repr(t), repr(v)])
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tvhazard",
                                description="Time-varying additive hazard regression.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic campaign dataset")
    s.add_argument("--sites", type=_positive_int, default=1000)
    s.add_argument("--test-sites", type=int, default=0)
    s.add_argument("--features", type=_positive_int, default=40)
    s.add_argument("--exploits", type=int, default=4)
    s.add_argument("--horizon", type=_positive_float, default=10.0)
    s.add_argument("--monotone", action=argparse.BooleanOptionalAction, default=True)
    s.add_argument("--max-campaigns", type=_positive_int, default=3)
    s.add_argument("--hazard-min", type=_positive_float, default=0.05)
    s.add_argument("--hazard-max", type=_positive_float, default=1.0)
    s.add_argument("--checkpoint-rate", type=_nonneg_float, default=5.0)
    s.add_argument("--feature-prob", type=_nonneg_float, default=0.5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit a model to observation and event files")
    f.add_argument("--train", required=True, help="observations CSV")
    f.add_argument("--train-events", help="feature events CSV (default: sibling *events*.csv)")
    f.add_argument("--test", help="held-out observations CSV for the test trace")
    f.add_argument("--test-events")
    f.add_argument("--features", type=_positive_int,
                   help="use names x01..xN as the feature dictionary")
    f.add_argument("--horizon", type=_positive_float)
    f.add_argument("--penalty", choices=["none", "tv", "log"], default="tv")
    f.add_argument("--monotone", action=argparse.BooleanOptionalAction, default=False)
    f.add_argument("--gamma", type=_nonneg_float, default=1.0)
    f.add_argument("--epsilon", type=_positive_float, default=1.0)
    f.add_argument("--eta", type=_positive_float)
    f.add_argument("--minibatch", type=_positive_int, default=SolverConfig.minibatch)
    f.add_argument("--epochs", type=_positive_int, default=SolverConfig.epochs)
    f.add_argument("--warmup-epochs", type=int, default=SolverConfig.warmup_epochs)
    f.add_argument("--full-grad-every", type=_positive_int, default=SolverConfig.full_grad_every)
    f.add_argument("--polish-iters", type=int, default=SolverConfig.polish_iters,
                   help="full-batch accelerated iterations after SVRG (0 disables)")
    f.add_argument("--no-adagrad", action="store_true")
    f.add_argument("--tol", type=_nonneg_float, default=0.0)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", required=True, help="model JSON to write")
    f.add_argument("--trace", help="trace CSV (default: OUT.trace.csv)")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("evaluate", help="held-out NLL and sparsity summary")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True, help="observations CSV")
    e.add_argument("--events")
    e.add_argument("--tol", type=_nonneg_float, default=1e-6)
    e.set_defaults(func=cmd_evaluate)

    x = sub.add_parser("export-curves", help="write coefficient step functions as CSV")
    x.add_argument("--model", required=True)
    x.add_argument("--features", help="comma-separated names (default: all features)")
    x.add_argument("--out")
    x.set_defaults(func=cmd_export_curves)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
