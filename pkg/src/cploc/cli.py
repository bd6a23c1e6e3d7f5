"""Command-line entry point.

Exit codes: 0 on success, 2 when a configuration or argument is invalid,
1 when the computation itself fails. Every random draw flows from --seed.

Data files hold one observation per line; a non-numeric first line is
treated as a header and skipped.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .bounds import estimate_delay, hardness_profile, length_bound
from .detectors import DetectorSpec, cusum_lr, stop_time, weighted_cusum
from .harness import ConfigError, ExperimentConfig, duality_check, run_experiment
from .localize_adaptive import AdaptiveConfig, adaptive_set_known
from .localize_universal import known_pair_recipe, universal_set
from .models import from_dict, sample_path
from .survival import estimate_survival


class UsageFailure(Exception):
    """Bad input from the command line; maps to exit code 2."""


def read_series(path: str) -> np.ndarray:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageFailure(f"data: cannot read {path!r} ({exc.strerror})") from exc
    vals = []
    for k, line in enumerate(lines):
        cell = line.split(",")[0].strip()
        if not cell:
            continue
        try:
            vals.append(float(cell))
        except ValueError:
            if k == 0:
                continue  # header
            raise UsageFailure(f"data: line {k + 1} is not a number: {cell!r}") from None
    if not vals:
        raise UsageFailure("data: no observations found")
    return np.asarray(vals)


def _load_json(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageFailure(f"config: cannot read {path!r} ({exc.strerror})") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: malformed JSON ({exc.msg} at line {exc.lineno})") from exc


def _model(text: str):
    """'gaussian:0' / 'gaussian:0,1' / 'poisson:2' / a JSON object."""
    if text.lstrip().startswith("{"):
        try:
            return from_dict(json.loads(text))
        except (json.JSONDecodeError, TypeError, KeyError, ValueError) as exc:
            raise UsageFailure(f"model: cannot parse {text!r}") from exc
    kind, _, params = text.partition(":")
    try:
        nums = [float(v) for v in params.split(",")] if params else []
    except ValueError:
        raise UsageFailure(f"model: bad parameters in {text!r}") from None
    obj = {"gaussian": ("mean", "sd"), "poisson": ("rate",)}.get(kind)
    if obj is None:
        raise UsageFailure(f"model: unknown kind {kind!r}; use gaussian:MEAN[,SD] or poisson:RATE")
    return from_dict({"kind": kind, **dict(zip(obj, nums))})


def _detector(args) -> DetectorSpec:
    pre, post = _model(args.pre), _model(args.post)
    if args.detector == "cusum":
        return cusum_lr(pre, post, args.A)
    if args.detector == "lr_pfa":
        return DetectorSpec("lr_pfa", args.A, pre=pre, post=post)
    if args.detector == "wcusum":
        return weighted_cusum(args.boundary, getattr(pre, "mean", 0.0), args.A)
    raise UsageFailure(f"detector: unknown {args.detector!r}")


def _emit(obj, out: str | None, name: str) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        p = Path(out)
        p.mkdir(parents=True, exist_ok=True)
        (p / name).write_text(text + "\n")
    print(text)


# -- subcommands -----------------------------------------------------------------------

def cmd_simulate(args) -> int:
    pre, post = _model(args.pre), _model(args.post)
    T = math.inf if args.T <= 0 else args.T
    path = sample_path(pre, post, T, args.n, args.seed)
    lines = "\n".join(repr(float(v)) for v in path.values) + "\n"
    if args.out:
        Path(args.out).write_text(lines)
    else:
        sys.stdout.write(lines)
    return 0


def cmd_detect(args) -> int:
    x = read_series(args.data)
    tau = stop_time(_detector(args), x)
    print(json.dumps({"tau": tau if tau else None, "alarm": bool(tau)}))
    return 0


def cmd_localize(args) -> int:
    x = read_series(args.data)
    spec = _detector(args)
    tau = stop_time(spec, x)
    if not tau:
        print("no alarm")
        return 0
    pre, post = _model(args.pre), _model(args.post)
    pfa = spec.family == "lr_pfa"
    curve = None if pfa else estimate_survival(pre, spec, tau, args.N, seed=args.seed)
    if args.method == "universal":
        cs = universal_set(x, tau, args.alpha, curve, known_pair_recipe(pre, post),
                           "pfa" if pfa else "known_pre")
    else:
        cfg = AdaptiveConfig(alpha=args.alpha, N=args.N, B=args.B, pfa=pfa)
        cs = adaptive_set_known(x, tau, cfg, pre, post, spec, args.seed, curve=curve)
    text = cs.to_csv() if args.format == "csv" else cs.to_json() + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def _experiment_cfg(args) -> ExperimentConfig:
    obj = _load_json(args.config)
    if not isinstance(obj, dict):
        raise ConfigError("config: expected a JSON object")
    for key in ("runs", "seed", "out", "T"):
        v = getattr(args, key, None)
        if v is not None:
            obj[key] = v
    return ExperimentConfig.from_dict(obj)


def cmd_experiment(args) -> int:
    cfg = _experiment_cfg(args)
    res = run_experiment(cfg, keep_members=args.members)
    out = cfg.out or "out"
    for p in res.write(out, members=args.members):
        print(p)
    print(json.dumps({m: s.to_dict() for m, s in res.summaries.items()}, indent=2, sort_keys=True))
    return 0


def cmd_compare_wu(args) -> int:
    obj = {"setting": "wu_compare", "methods": ["adaptive", "wu"]}
    if args.config:
        obj.update(_load_json(args.config))
    obj.update({k: v for k, v in (("runs", args.runs), ("seed", args.seed), ("T", args.T),
                                  ("out", args.out)) if v is not None})
    cfg = ExperimentConfig.from_dict(obj)
    res = run_experiment(cfg)
    if cfg.out:
        res.write(cfg.out)
    print(json.dumps({m: s.to_dict() for m, s in res.summaries.items()}, indent=2, sort_keys=True))
    return 0


def cmd_duality(args) -> int:
    cfg = _experiment_cfg(args)
    ts = [int(v) for v in args.ts.split(",")] if args.ts else None
    rows = duality_check(cfg, ts, reps=args.reps)
    _emit([r.__dict__ for r in rows], cfg.out, "duality.json")
    return 0 if all(r.passed for r in rows) else 1


def cmd_bounds(args) -> int:
    pre, post = _model(args.pre), _model(args.post)
    prof = hardness_profile(pre, post)
    delay = args.delay
    if delay is None:
        delay = estimate_delay(pre, post, cusum_lr(pre, post, args.A), args.T, runs=args.runs,
                               seed=args.seed)
    b = length_bound(prof, args.alpha, args.p_T, args.T, delay, args.mode)
    out = json.loads(b.to_json(alpha=args.alpha, p_T=args.p_T, T=args.T, s0=prof.s0,
                               rho0=prof.rho0_min, s1=prof.s1, rho1=prof.rho1_min))
    _emit(out, args.out, "bounds.json")
    return 0


# -- parser --------------------------------------------------------------------------------

def _add_models(p):
    p.add_argument("--pre", default="gaussian:0", help="pre-change law, e.g. gaussian:0")
    p.add_argument("--post", default="gaussian:1", help="post-change law, e.g. gaussian:1")


def _add_detector(p):
    _add_models(p)
    p.add_argument("--detector", choices=("cusum", "lr_pfa", "wcusum"), default="cusum")
    p.add_argument("--A", type=float, default=1000.0, help="detector threshold")
    p.add_argument("--boundary", type=float, default=0.75, help="inf of the post class (wcusum)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cploc", description="Changepoint localization after detection.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a path with a change at T")
    _add_models(p)
    p.add_argument("--T", type=int, default=100, help="change index (<= 0 for no change)")
    p.add_argument("--n", type=int, default=300, help="number of observations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="run a detector over a data file")
    _add_detector(p)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("localize", help="confidence set for the changepoint after an alarm")
    _add_detector(p)
    p.add_argument("--data", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--method", choices=("universal", "adaptive"), default="universal")
    p.add_argument("--N", type=int, default=100)
    p.add_argument("--B", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_localize)

    for name, fn, hlp in (("experiment", cmd_experiment, "run a Monte Carlo experiment"),
                          ("duality", cmd_duality, "check test/set duality by simulation")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--config", required=True)
        p.add_argument("--runs", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--T", type=int)
        p.add_argument("--out")
        if name == "experiment":
            p.add_argument("--members", action="store_true", help="also write per-run set members")
        else:
            p.add_argument("--ts", help="comma-separated candidate changepoints")
            p.add_argument("--reps", type=int, default=200)
        p.set_defaults(func=fn)

    p = sub.add_parser("compare-wu", help="our sets against the reflected-CUSUM baseline")
    p.add_argument("--config")
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare_wu)

    p = sub.add_parser("bounds", help="expected conditional size bound")
    _add_models(p)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--p-T", dest="p_T", type=float, default=0.9, help="P(tau >= T)")
    p.add_argument("--T", type=int, default=100)
    p.add_argument("--delay", type=float, help="detection delay; simulated when omitted")
    p.add_argument("--A", type=float, default=1000.0)
    p.add_argument("--runs", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("plain", "sensitive", "composite", "composite_sensitive"),
                   default="plain")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bounds)
    return ap


def dispatch(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad usage, 0 on --help
        return int(exc.code or 0)
    try:
        return int(args.func(args))
    except (ConfigError, UsageFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
