"""Monte Carlo experiments: sample, detect, localize, aggregate.

Each named setting fixes the data-generating laws, the detector and the
recipe of every localization method. A run draws one path with the change at
T, stops the detector, and (when it stopped) builds each method's confidence
set. Conditional statistics use the runs with tau >= T; marginal ones use
every run, and a false alarm or a censored run never covers T.

Run i uses the seed ``derive_int(master, "run", i)`` for its data and for
every simulation inside the localization, so results do not depend on the
order in which runs are executed.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from typing import Any, Callable

import numpy as np

from ._seeding import derive_int
from .baseline_wu import reflected_cusum, wu_set
from .confseq import Interval, gaussian_cs, param_set_union, poisson_cs
from .detectors import (DetectorSpec, cusum_lr, default_weights, huber_cusum, ladder,
                        mixture_lr_pfa, stop_time, weighted_cusum, wu_reflected)
from .eprocesses import EProcessSpec, gaussian_mixture, huber_pair, lr_pair
from .localize_adaptive import (AdaptiveConfig, adaptive_set_comp, adaptive_set_comp_post,
                                adaptive_set_known)
from .localize_universal import (ConfidenceSetT, DetectorCriterion, EProcessCriterion,
                                 ProfileCriterion, TwoMeanCriterion, UniversalRecipe,
                                 known_pair_recipe, universal_set)
from .models import (Contaminated, Distribution, Gaussian, HuberLFD, Markov2, NamedDensity,
                     Poisson, Uniform, huber_clip_constants, sample_path)
from .survival import SurvivalCurve, estimate_survival

SETTINGS = ("I", "II", "III", "IV", "V", "VI", "A_pfa", "B_pfa", "C_pfa", "markov",
            "poisson_I", "poisson_II", "poisson_III", "wu_compare", "ratio_sweep")
METHODS = ("universal", "adaptive", "wu")

# methods each setting can run, and the default selection
SUPPORTED: dict[str, tuple[str, ...]] = {
    "I": ("universal", "adaptive"), "II": ("universal", "adaptive"),
    "III": ("universal", "adaptive"), "IV": ("universal",), "V": ("universal",),
    "VI": ("universal",), "A_pfa": ("universal", "adaptive"), "B_pfa": ("universal",),
    "C_pfa": ("universal",), "markov": ("adaptive",), "poisson_I": ("universal", "adaptive"),
    "poisson_II": ("adaptive",), "poisson_III": ("adaptive",),
    "wu_compare": ("universal", "adaptive", "wu"), "ratio_sweep": ("universal",),
}
DEFAULT_METHODS: dict[str, tuple[str, ...]] = {
    **SUPPORTED, "wu_compare": ("adaptive", "wu"),
}
# the universal level used by default in these settings (the adaptive
# methods use ``alpha`` and split the rest of the budget into beta, gamma)
UNIVERSAL_ALPHA = {"II": 0.075, "B_pfa": 0.075, "III": 0.1, "C_pfa": 0.1}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass(frozen=True)
class ExperimentConfig:
    setting: str
    T: int = 100
    runs: int = 200
    seed: int = 0
    methods: tuple[str, ...] | None = None
    A: float | None = None  # detector threshold; Wu's d for wu_compare
    alpha: float = 0.05
    alpha_universal: float | None = None
    beta: float = 0.025
    gamma: float = 0.025
    eta: float | None = None  # level of the parameter sets; None skips them
    N: int = 100
    B: int = 100
    L: float | None = None
    family: str = "gaussian"  # I and A_pfa: gaussian or poisson pair
    post_boundary: float | None = None  # inf Theta_1
    pre_boundary: float | None = None  # sup Theta_0
    eps: float = 0.01  # contamination level for VI
    shift: float = 0.25  # wu_compare: N(-shift) -> N(+shift)
    post_density: str = "cubic_decay"  # IV
    horizon: int | None = None
    localize_false_alarms: bool = True
    out: str | None = None

    def __post_init__(self):
        if self.methods is not None:
            object.__setattr__(self, "methods", tuple(self.methods))

    def validate(self) -> "ExperimentConfig":
        if self.setting not in SETTINGS:
            raise ConfigError(f"setting: unknown value {self.setting!r}; choose from {SETTINGS}")
        if int(self.runs) < 1:
            raise ConfigError("runs: must be at least 1")
        if int(self.T) < 1:
            raise ConfigError("T: must be at least 1")
        for name in ("alpha", "alpha_universal", "beta", "gamma", "eta", "eps"):
            v = getattr(self, name)
            if v is None:
                continue
            if name in ("beta", "gamma", "eps"):
                ok = 0 <= v < 1
            else:
                ok = 0 < v < 1
            if not ok:
                raise ConfigError(f"{name}: level {v} outside (0, 1)")
        for m in self.chosen_methods:
            if m not in METHODS:
                raise ConfigError(f"methods: unknown method {m!r}")
            if m not in SUPPORTED[self.setting]:
                raise ConfigError(f"methods: {m!r} is not implemented for setting {self.setting}")
        if self.family not in ("gaussian", "poisson"):
            raise ConfigError("family: must be 'gaussian' or 'poisson'")
        if self.family == "poisson" and self.setting not in ("I", "A_pfa"):
            raise ConfigError("family: 'poisson' is only a variant of settings I and A_pfa")
        if self.N < 1 or self.B < 1:
            raise ConfigError("N, B: must be at least 1")
        if self.A is not None and not self.A > 0:
            raise ConfigError("A: must be positive")
        if self.post_density not in ("cubic_decay", "step_mixture"):
            raise ConfigError("post_density: must be 'cubic_decay' or 'step_mixture'")
        return self

    @property
    def chosen_methods(self) -> tuple[str, ...]:
        return self.methods if self.methods is not None else DEFAULT_METHODS.get(self.setting, ())

    @property
    def universal_alpha(self) -> float:
        if self.alpha_universal is not None:
            return self.alpha_universal
        return UNIVERSAL_ALPHA.get(self.setting, self.alpha)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["methods"] = list(self.chosen_methods)
        if d["L"] is not None and not math.isfinite(d["L"]):
            d["L"] = "inf"
        return d

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config: expected a JSON object")
        if "setting" not in obj:
            raise ConfigError("setting: missing required field")
        known = {f.name for f in fields(cls)}
        extra = sorted(set(obj) - known)
        if extra:
            raise ConfigError(f"{extra[0]}: unknown field")
        obj = dict(obj)
        if obj.get("L") == "inf":
            obj["L"] = math.inf
        try:
            cfg = cls(**obj)
        except TypeError as exc:  # pragma: no cover - dataclass signature errors
            raise ConfigError(str(exc)) from exc
        return cfg.validate()

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: malformed JSON ({exc.msg} at line {exc.lineno})") from exc
        return cls.from_dict(obj)


# -- scenarios -------------------------------------------------------------------------

Localizer = Callable[[np.ndarray, int, int, "RunContext"], ConfidenceSetT]


@dataclass
class RunContext:
    """Per-run cache so that methods sharing a survival curve simulate it once."""

    seed: int
    curves: dict = field(default_factory=dict)

    def curve(self, model: Distribution, spec: DetectorSpec, tau: int, N: int) -> SurvivalCurve:
        key = (repr(model), tau)
        if key not in self.curves:
            self.curves[key] = estimate_survival(model, spec, tau, N, seed=self.seed)
        return self.curves[key]


@dataclass
class Scenario:
    pre: Distribution
    post: Distribution
    detector: DetectorSpec
    localizers: dict[str, Localizer]
    theta1: float | None = None  # true post-change parameter, for parameter sets
    theta0: float | None = None
    param_family: str = "gaussian"
    space0: Interval = Interval.everything()
    space1: Interval = Interval.everything()


def _universal(recipe: UniversalRecipe, alpha: float, mode: str, calib: Distribution | None,
               spec: DetectorSpec, N: int) -> Localizer:
    def run(x, tau, seed, ctx):
        curve = None if mode == "pfa" else ctx.curve(calib, spec, tau, N)
        return universal_set(x, tau, alpha, curve, recipe, mode)
    return run


def _mixture_recipe_known_pre(theta0: float, boundary: float, family: str = "gaussian") -> UniversalRecipe:
    """Known pre-change parameter, one-sided post-change class [boundary, inf)."""
    space1 = Interval(boundary, math.inf)
    pre = Gaussian(theta0) if family == "gaussian" else Poisson(theta0)
    star = Gaussian(boundary) if family == "gaussian" else Poisson(boundary)
    step = 0.2
    return UniversalRecipe(
        ProfileCriterion(theta0, family, space1),
        lr_pair(pre, star, "forward"),
        gaussian_mixture("backward", ladder(boundary, step), default_weights(), theta0, family))


def _mixture_recipe_composite(pre_bd: float, post_bd: float) -> UniversalRecipe:
    """Theta_0 = (-inf, pre_bd], Theta_1 = [post_bd, inf), Gaussian means."""
    return UniversalRecipe(
        TwoMeanCriterion("gaussian", Interval(-math.inf, pre_bd), Interval(post_bd, math.inf)),
        gaussian_mixture("forward", ladder(pre_bd, -0.2), default_weights(), post_bd),
        gaussian_mixture("backward", ladder(post_bd, 0.2), default_weights(), pre_bd))


def _adaptive_cfg(cfg: ExperimentConfig, **kw) -> AdaptiveConfig:
    return AdaptiveConfig(alpha=cfg.alpha, N=cfg.N, B=cfg.B, L=cfg.L, **kw)


def build_scenario(cfg: ExperimentConfig) -> Scenario:
    s = cfg.setting
    A = cfg.A
    ua = cfg.universal_alpha
    loc: dict[str, Localizer] = {}

    if s in ("I", "ratio_sweep", "A_pfa", "poisson_I", "markov", "wu_compare"):
        if s == "markov":
            pre, post = Markov2(0.75, 0.5, 0.5), Markov2(0.25, 0.5, 0.5)
        elif s == "wu_compare":
            pre, post = Gaussian(-cfg.shift), Gaussian(cfg.shift)
        elif s == "poisson_I" or cfg.family == "poisson":
            pre, post = Poisson(1.0), Poisson(2.0)
        else:
            pre, post = Gaussian(0.0), Gaussian(1.0)
        if s == "A_pfa":
            spec = DetectorSpec("lr_pfa", A or 1000.0, pre=pre, post=post)
        elif s == "wu_compare":
            spec = wu_reflected(A or 8.59)
        elif s == "markov":
            spec = DetectorSpec("markov_cusum", A or 1000.0, pre=pre, post=post)
        else:
            spec = cusum_lr(pre, post, A or (100.0 if s == "ratio_sweep" else 1000.0))
        pfa = s == "A_pfa"
        loc["universal"] = _universal(known_pair_recipe(pre, post), ua, "pfa" if pfa else "known_pre",
                                      pre, spec, cfg.N)
        acfg = _adaptive_cfg(cfg, pfa=pfa)

        def adaptive(x, tau, seed, ctx, pre=pre, post=post, spec=spec, acfg=acfg, pfa=pfa):
            curve = None if pfa else ctx.curve(pre, spec, tau, cfg.N)
            return adaptive_set_known(x, tau, acfg, pre, post, spec, seed, curve=curve)
        loc["adaptive"] = adaptive
        if s == "wu_compare":
            d = spec.threshold

            def wu(x, tau, seed, ctx, d=d):
                return wu_set(reflected_cusum(x[:tau], d), cfg.alpha, cfg.shift)
            loc["wu"] = wu
        return Scenario(pre, post, spec, loc)

    if s in ("II", "B_pfa", "poisson_II"):
        family = "poisson" if s == "poisson_II" else "gaussian"
        theta0 = 1.0 if family == "poisson" else 0.0
        theta1 = 2.0 if family == "poisson" else 1.0
        bd = cfg.post_boundary if cfg.post_boundary is not None else (1.9 if family == "poisson" else 0.75)
        pre = Gaussian(theta0) if family == "gaussian" else Poisson(theta0)
        post = Gaussian(theta1) if family == "gaussian" else Poisson(theta1)
        pfa = s == "B_pfa"
        if pfa:
            spec = mixture_lr_pfa(bd, theta0, A or 1000.0, param=family)
        else:
            spec = weighted_cusum(bd, theta0, A or 1000.0, param=family)
        space1 = Interval(bd, math.inf)
        loc["universal"] = _universal(_mixture_recipe_known_pre(theta0, bd, family), ua,
                                      "pfa" if pfa else "known_pre", pre, spec, cfg.N)
        acfg = _adaptive_cfg(cfg, beta=cfg.beta, pfa=pfa)

        def adaptive(x, tau, seed, ctx):
            curve = None if pfa else ctx.curve(pre, spec, tau, cfg.N)
            return adaptive_set_comp_post(x, tau, acfg, theta0, family, spec, seed, space1, curve=curve)
        loc["adaptive"] = adaptive
        return Scenario(pre, post, spec, loc, theta1, theta0, family, Interval(theta0, theta0), space1)

    if s in ("III", "C_pfa", "poisson_III"):
        family = "poisson" if s == "poisson_III" else "gaussian"
        theta0, theta1 = (1.0, 2.0) if family == "poisson" else (0.0, 1.0)
        pre_bd = cfg.pre_boundary if cfg.pre_boundary is not None else (0.9 if family == "poisson" else 0.25)
        post_bd = cfg.post_boundary if cfg.post_boundary is not None else (1.9 if family == "poisson" else 0.75)
        pre = Gaussian(theta0) if family == "gaussian" else Poisson(theta0)
        post = Gaussian(theta1) if family == "gaussian" else Poisson(theta1)
        lfd = Gaussian(pre_bd) if family == "gaussian" else Poisson(pre_bd)
        pfa = s == "C_pfa"
        if pfa:
            spec = mixture_lr_pfa(post_bd, pre_bd, A or 1000.0, param=family, ripr=True)
        else:
            spec = weighted_cusum(post_bd, pre_bd, A or 1000.0, param=family, ripr=True)
        lo0 = 0.0 if family == "poisson" else -math.inf
        space0, space1 = Interval(lo0, pre_bd), Interval(post_bd, math.inf)
        if family == "gaussian":
            loc["universal"] = _universal(_mixture_recipe_composite(pre_bd, post_bd), ua,
                                          "pfa" if pfa else "lfd_pre", lfd, spec, cfg.N)
        acfg = _adaptive_cfg(cfg, beta=cfg.beta, gamma=cfg.gamma, theta0_star=pre_bd, pfa=pfa)

        def adaptive(x, tau, seed, ctx):
            curve = None if pfa else ctx.curve(lfd, spec, tau, cfg.N)
            return adaptive_set_comp(x, tau, acfg, family, spec, seed, space0, space1, curve=curve)
        loc["adaptive"] = adaptive
        return Scenario(pre, post, spec, loc, theta1, theta0, family, space0, space1)

    if s == "IV":
        pre, post = Uniform(0.0, 1.0), NamedDensity(cfg.post_density)
        spec = DetectorSpec("e_hist", A or 1000.0, bins=10)
        recipe = UniversalRecipe(EProcessCriterion(EProcessSpec("forward", "histogram_plugin", bins=10)),
                                 EProcessSpec("forward", "numeraire_bounded_mean", mu=0.25),
                                 EProcessSpec("backward", "histogram_plugin", bins=10))
        loc["universal"] = _universal(recipe, ua, "known_pre", pre, spec, cfg.N)
        return Scenario(pre, post, spec, loc)

    if s == "V":
        pre, post = Gaussian(1.0), Uniform(-1.2, 0.8)
        bd = cfg.pre_boundary if cfg.pre_boundary is not None else 0.5
        spec = DetectorSpec("e_subgaussian", A or 1000.0, boundary=bd)
        recipe = UniversalRecipe(DetectorCriterion(spec),
                                 EProcessSpec("forward", "subgaussian_plugin", boundary=bd),
                                 EProcessSpec("backward", "subgaussian_plugin", boundary=bd))
        loc["universal"] = _universal(recipe, ua, "lfd_pre", Gaussian(bd), spec, cfg.N)
        return Scenario(pre, post, spec, loc)

    if s == "VI":
        eps = cfg.eps
        pre, post = Contaminated(Gaussian(0.0), eps), Contaminated(Gaussian(1.0), eps)
        clip = huber_clip_constants(0.0, 1.0, eps)
        spec = huber_cusum(0.0, 1.0, clip, A or 1000.0)
        recipe = UniversalRecipe(DetectorCriterion(spec), huber_pair(0.0, 1.0, clip, "forward"),
                                 huber_pair(0.0, 1.0, clip, "backward"))
        loc["universal"] = _universal(recipe, ua, "lfd_pre", HuberLFD(0.0, 1.0, eps, "pre"), spec, cfg.N)
        return Scenario(pre, post, spec, loc)

    raise ConfigError(f"setting: unknown value {s!r}")  # pragma: no cover


# -- records -----------------------------------------------------------------------------

@dataclass
class RunRecord:
    run: int
    seed: int
    tau: int | None
    censored: bool
    false_alarm: bool
    t_hat: int | None
    sizes: dict[str, int | None] = field(default_factory=dict)
    covered: dict[str, bool | None] = field(default_factory=dict)  # None unless tau >= T
    params: dict[str, dict[str, Any]] = field(default_factory=dict)
    members: dict[str, list[int]] = field(default_factory=dict)

    @property
    def conditional(self) -> bool:
        return not self.censored and not self.false_alarm


@dataclass(frozen=True)
class SummaryRow:
    method: str
    runs: int
    conditional_runs: int
    false_alarms: int
    censored: int
    conditional_coverage: float
    conditional_se: float
    marginal_coverage: float
    marginal_se: float
    mean_size: float
    mean_abs_error: float
    mean_delay: float
    param_coverage: float | None = None
    param_se: float | None = None
    param_mean_lo: float | None = None
    param_mean_hi: float | None = None
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["flags"] = list(self.flags)
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}


def _se(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n) if n > 0 else math.nan


def aggregate(records: list[RunRecord], method: str, T: int) -> SummaryRow:
    """Conditional statistics over runs with tau >= T, marginal over all runs."""
    if not records:
        raise ValueError("no records to aggregate")
    n = len(records)
    cond = [r for r in records if r.conditional]
    nc = len(cond)
    flags = []
    if nc == 0:
        flags.append("no run with tau >= T; conditional statistics undefined")
    hits = sum(1 for r in cond if r.covered.get(method))
    cc = hits / nc if nc else math.nan
    mc = hits / n
    sizes = [r.sizes[method] for r in cond if r.sizes.get(method) is not None]
    errs = [abs(r.t_hat - T) for r in cond if r.t_hat is not None]
    delays = [r.tau - T for r in cond]
    pc = pse = plo = phi = None
    prm = [r.params[method] for r in cond if method in r.params]
    if prm:
        pc = sum(1 for p in prm if p["covered"]) / len(prm)
        pse = _se(pc, len(prm))
        finite = [p for p in prm if p["lo"] is not None]
        if finite:
            plo = float(np.mean([p["lo"] for p in finite]))
            phi = float(np.mean([p["hi"] for p in finite]))
    mean = lambda v: float(np.mean(v)) if v else math.nan  # noqa: E731
    return SummaryRow(method, n, nc, sum(r.false_alarm for r in records),
                      sum(r.censored for r in records), cc, _se(cc, nc) if nc else math.nan,
                      mc, _se(mc, n), mean(sizes), mean(errs), mean(delays), pc, pse, plo, phi,
                      tuple(flags))


# -- execution -------------------------------------------------------------------------

def _data_horizon(cfg: ExperimentConfig) -> int:
    if cfg.horizon is not None:
        return int(cfg.horizon)
    return 3 * cfg.T + 3000


def run_seed(master: int, i: int) -> int:
    return derive_int(master, "run", i)


def _param_record(cs: ConfidenceSetT, x: np.ndarray, tau: int, sc: Scenario, eta: float,
                  curve: SurvivalCurve | None) -> dict[str, Any]:
    cons = gaussian_cs if sc.param_family == "gaussian" else poisson_cs
    ps = param_set_union(cs.members, x, tau, curve, eta, "theta1", cons, sc.space1)
    hull = ps.hull
    rec: dict[str, Any] = {"covered": sc.theta1 in ps,
                           "lo": None if hull.empty else float(hull.lo),
                           "hi": None if hull.empty else float(hull.hi)}
    return rec


def run_one(cfg: ExperimentConfig, i: int, keep_members: bool = False) -> RunRecord:
    sc = _scenario(cfg)
    seed = run_seed(cfg.seed, i)
    H = _data_horizon(cfg)
    path = sample_path(sc.pre, sc.post, cfg.T, H, seed)
    x = path.values
    tau = stop_time(sc.detector, x)
    if tau == 0:
        return RunRecord(i, seed, None, True, False, None,
                         {m: None for m in cfg.chosen_methods}, {m: None for m in cfg.chosen_methods})
    fa = tau < cfg.T
    rec = RunRecord(i, seed, tau, False, fa, None)
    if fa and not cfg.localize_false_alarms:
        rec.sizes = {m: None for m in cfg.chosen_methods}
        rec.covered = {m: None for m in cfg.chosen_methods}
        return rec
    ctx = RunContext(seed)
    for m in cfg.chosen_methods:
        cs = sc.localizers[m](x, tau, seed, ctx)
        rec.sizes[m] = cs.size
        rec.covered[m] = None if fa else (cfg.T in cs)
        if rec.t_hat is None and cs.t_hat is not None:
            rec.t_hat = int(cs.t_hat)
        if keep_members:
            rec.members[m] = cs.members.tolist()
        if cfg.eta is not None and sc.theta1 is not None and not fa and m != "wu":
            curve = None
            if ctx.curves:
                curve = next(iter(ctx.curves.values()))
            rec.params[m] = _param_record(cs, x, tau, sc, cfg.eta, curve)
    return rec


@lru_cache(maxsize=8)
def _scenario_cached(key: str) -> Scenario:
    return build_scenario(ExperimentConfig.from_dict(json.loads(key)))


def _scenario(cfg: ExperimentConfig) -> Scenario:
    return _scenario_cached(json.dumps(cfg.to_dict(), sort_keys=True))


def _worker(args):
    cfg_dict, i, keep = args
    return run_one(ExperimentConfig.from_dict(cfg_dict), i, keep)


def threads_from_env(default: int = 1) -> int:
    v = os.environ.get("CPL_THREADS")
    if v is None:
        return default
    try:
        return max(1, int(v))
    except ValueError:
        raise ConfigError(f"CPL_THREADS: expected an integer, got {v!r}") from None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[RunRecord]
    summaries: dict[str, SummaryRow]

    def csv_text(self) -> str:
        methods = list(self.config.chosen_methods)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["run", "seed", "tau", "censored", "false_alarm", "t_hat"]
        for m in methods:
            head += [f"{m}_size", f"{m}_covered"]
        w.writerow(head)
        fmt = lambda v: "" if v is None else (int(v) if isinstance(v, bool) else v)  # noqa: E731
        for r in self.records:
            row = [r.run, r.seed, fmt(r.tau), int(r.censored), int(r.false_alarm), fmt(r.t_hat)]
            for m in methods:
                row += [fmt(r.sizes.get(m)), fmt(r.covered.get(m))]
            w.writerow(row)
        return buf.getvalue()

    def summary_json(self) -> str:
        d = {"config": self.config.to_dict(),
             "summary": {m: s.to_dict() for m, s in self.summaries.items()}}
        return json.dumps(d, indent=2, sort_keys=True)

    def members_json(self) -> str:
        return json.dumps([{"run": r.run, "tau": r.tau, "members": r.members} for r in self.records],
                          sort_keys=True)

    def write(self, out_dir: str | Path, members: bool = False) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"setting_{self.config.setting}_T{self.config.T}"
        paths = [out / f"{stem}_runs.csv", out / f"{stem}_summary.json"]
        paths[0].write_text(self.csv_text())
        paths[1].write_text(self.summary_json() + "\n")
        if members:
            paths.append(out / f"{stem}_sets.json")
            paths[2].write_text(self.members_json() + "\n")
        return paths


def run_experiment(cfg: ExperimentConfig, threads: int | None = None,
                   keep_members: bool = False) -> ExperimentResult:
    cfg = cfg.validate()
    threads = threads_from_env() if threads is None else max(1, int(threads))
    idx = range(int(cfg.runs))
    if threads == 1 or cfg.runs == 1:
        records = [run_one(cfg, i, keep_members) for i in idx]
    else:
        d = cfg.to_dict()
        with ProcessPoolExecutor(max_workers=min(threads, cfg.runs)) as ex:
            records = list(ex.map(_worker, [(d, i, keep_members) for i in idx]))
    records.sort(key=lambda r: r.run)
    summaries = {m: aggregate(records, m, cfg.T) for m in cfg.chosen_methods}
    return ExperimentResult(cfg, records, summaries)


# -- duality check ------------------------------------------------------------------------

@dataclass(frozen=True)
class DualityRow:
    t: int
    reps: int
    rejections: int
    rate: float
    budget: float
    se: float
    passed: bool


def duality_check(cfg: ExperimentConfig, ts: list[int] | None = None, reps: int = 200,
                  method: str = "universal") -> list[DualityRow]:
    """Under a change at t, P(tau >= t and t is excluded) against alpha * P(tau >= t).

    P(tau >= t) is estimated from the same simulated paths; each t passes when
    the rejection rate is within three binomial standard errors of the budget.
    """
    cfg = cfg.validate()
    if method not in cfg.chosen_methods:
        raise ConfigError(f"methods: duality check needs {method!r} configured")
    sc = _scenario(cfg)
    level = cfg.universal_alpha if method == "universal" else cfg.alpha
    if ts is None:
        ts = [1, max(1, cfg.T // 4), max(1, cfg.T // 2), cfg.T]
    H = _data_horizon(cfg)
    rows = []
    for t in ts:
        rej = alive = 0
        for k in range(reps):
            seed = derive_int(cfg.seed, "duality", t, k)
            x = sample_path(sc.pre, sc.post, t, max(H, t + 3000), seed).values
            tau = stop_time(sc.detector, x)
            if tau == 0 or tau < t:
                continue
            alive += 1
            cs = sc.localizers[method](x, tau, seed, RunContext(seed))
            rej += int(t not in cs)
        rate = rej / reps
        budget = level * alive / reps
        se = math.sqrt(max(budget * (1 - budget), 1e-12) / reps)
        rows.append(DualityRow(int(t), reps, rej, rate, budget, se, rate <= budget + 3 * se))
    return rows


__all__ = [
    "ConfigError", "DualityRow", "ExperimentConfig", "ExperimentResult", "METHODS", "RunRecord",
    "SETTINGS", "Scenario", "SummaryRow", "aggregate", "build_scenario", "duality_check",
    "run_experiment", "run_one", "run_seed", "threads_from_env",
]
