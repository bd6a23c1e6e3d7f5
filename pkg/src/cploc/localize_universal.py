"""Changepoint point estimates, the test statistic M_t and the universal
confidence sets {t <= tau : M_t < 2 / (alpha r_t)}.

M_t compares the estimate T-hat with a candidate t: for t < T-hat it is a
forward e-process anchored at t and read at T-hat - 1, for t > T-hat a
backward e-process anchored at t and read at T-hat. Everything is on the log
scale.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np

from . import _kernels
from .confseq import Interval
from .detectors import DetectorSpec, scalar_increments
from .eprocesses import EProcessSpec, backward_all, forward_all, lr_pair
from .models import Distribution
from .survival import SurvivalCurve, unit_curve

MODES = ("known_pre", "lfd_pre", "pfa")


class CalibrationError(ValueError):
    """A survival estimate of zero makes the threshold 2/(alpha r_t) infinite."""


# -- point estimates ---------------------------------------------------------------

class Criterion(Protocol):
    def scores(self, data: np.ndarray, tau: int) -> np.ndarray:
        """Log criterion for every start j = 1..tau (index j - 1)."""


@dataclass(frozen=True)
class KnownPairCriterion:
    """sum_{i >= j} log f1(X_i)/f0(X_i)."""

    pre: Distribution
    post: Distribution

    def scores(self, data, tau):
        return forward_all(lr_pair(self.post, self.pre, "forward"), data, tau)


def _clip(v, space: Interval):
    return np.clip(v, space.lo, space.hi)


@dataclass(frozen=True)
class ProfileCriterion:
    """Known pre-change parameter, post-change parameter replaced by its MLE
    over X_j..X_tau (restricted to ``space``)."""

    theta0: float
    family: str = "gaussian"
    space: Interval = Interval.everything()

    def scores(self, data, tau):
        x = np.asarray(data, dtype=float)[:tau]
        m = np.arange(tau, 0, -1, dtype=float)
        s = np.cumsum(x[::-1])[::-1]
        th = _clip(s / m, self.space)
        if self.family == "gaussian":
            z = s - m * self.theta0
            d = th - self.theta0
            return d * z - m * d**2 / 2
        if self.family == "poisson":
            th = np.maximum(th, 1e-300)
            return s * np.log(th / self.theta0) - m * (th - self.theta0)
        raise ValueError(f"unsupported family {self.family!r}")


@dataclass(frozen=True)
class TwoMeanCriterion:
    """Split log-likelihood with both segment parameters replaced by MLEs."""

    family: str = "gaussian"
    space0: Interval = Interval.everything()
    space1: Interval = Interval.everything()

    def scores(self, data, tau):
        x = np.asarray(data, dtype=float)[:tau]
        C = np.concatenate([[0.0], np.cumsum(x)])
        j = np.arange(1, tau + 1)
        n0 = (j - 1).astype(float)
        n1 = (tau - j + 1).astype(float)
        s0 = C[j - 1]
        s1 = C[tau] - C[j - 1]
        th0 = _clip(np.divide(s0, n0, out=np.zeros_like(s0), where=n0 > 0), self.space0)
        th1 = _clip(s1 / n1, self.space1)
        if self.family == "gaussian":
            # -1/2 sum (x - theta)^2 with the sum of squares dropped (common to every j)
            return th0 * s0 - n0 * th0**2 / 2 + th1 * s1 - n1 * th1**2 / 2
        if self.family == "poisson":
            def part(s, n, th):
                th = np.maximum(th, 1e-300)
                return np.where(n > 0, s * np.log(th) - n * th, 0.0)
            return part(s0, n0, th0) + part(s1, n1, th1)
        raise ValueError(f"unsupported family {self.family!r}")


@dataclass(frozen=True)
class EProcessCriterion:
    """Any forward e-process evaluated at tau, one value per anchor."""

    spec: EProcessSpec

    def scores(self, data, tau):
        if self.spec.family == "histogram_plugin":
            x = np.ascontiguousarray(np.asarray(data, dtype=float)[:tau])
            return _kernels.ehist_path(x, self.spec.bins, math.inf, False)[1]
        return forward_all(self.spec, data, tau)


@dataclass(frozen=True)
class DetectorCriterion:
    """The detector's own product over X_j..X_tau, for scalar CUSUM-type detectors."""

    spec: DetectorSpec

    def scores(self, data, tau):
        inc = scalar_increments(self.spec, np.asarray(data, dtype=float)[:tau])
        return np.cumsum(inc[::-1])[::-1]


@dataclass(frozen=True)
class ChangepointEstimate:
    t_hat: int
    criterion: np.ndarray


def point_estimate(criterion: Criterion, data, tau: int) -> ChangepointEstimate:
    """argmax of the criterion over starts 1..tau; ties go to the smaller index."""
    if tau < 1:
        raise ValueError("tau must be at least 1")
    if len(data) < tau:
        raise ValueError(f"need {tau} observations, got {len(data)}")
    vals = np.asarray(criterion.scores(data, tau), dtype=float)
    return ChangepointEstimate(int(np.argmax(vals)) + 1, vals)


# -- test statistic ----------------------------------------------------------------

def test_statistic(t: int, est: ChangepointEstimate, fwd: EProcessSpec, bwd: EProcessSpec,
                   data, tau: float) -> float:
    """log M_t for one candidate t."""
    if t < 1:
        raise ValueError("t starts at 1")
    if not math.isfinite(tau) or t > tau:
        return -math.inf
    th = est.t_hat
    if t == th:
        return 0.0
    if t < th:
        return float(forward_all(fwd, data, th - 1)[t - 1])
    return float(backward_all(bwd, data, th, int(tau))[t - th - 1])


def test_statistics(est: ChangepointEstimate, fwd: EProcessSpec, bwd: EProcessSpec,
                    data, tau: int) -> np.ndarray:
    """log M_t for t = 1..tau."""
    th = est.t_hat
    out = np.zeros(tau)
    if th > 1:
        out[:th - 1] = forward_all(fwd, data, th - 1)
    if th < tau:
        out[th:] = backward_all(bwd, data, th, tau)
    return out


# not pytest tests, despite the names
test_statistic.__test__ = False  # type: ignore[attr-defined]
test_statistics.__test__ = False  # type: ignore[attr-defined]


# -- confidence sets -----------------------------------------------------------------

@dataclass
class ConfidenceSetT:
    members: np.ndarray
    tau: int
    alpha: float
    t_hat: int | None
    method: str
    thresholds: np.ndarray | None = None
    stats: np.ndarray | None = None
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.members = np.unique(np.asarray(self.members, dtype=np.int64))
        if self.members.size and (self.members[0] < 1 or self.members[-1] > self.tau):
            raise AssertionError("confidence set members must lie in [1, tau]")

    def __contains__(self, t: int) -> bool:
        return bool(np.any(self.members == t))

    def __len__(self) -> int:
        return int(self.members.size)

    @property
    def size(self) -> int:
        return len(self)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"tau": int(self.tau), "alpha": float(self.alpha),
                             "t_hat": None if self.t_hat is None else int(self.t_hat),
                             "method": self.method, "members": self.members.tolist()}
        if self.thresholds is not None:
            d["thresholds"] = [float(v) for v in self.thresholds]
        if self.flags:
            d["flags"] = list(self.flags)
        return d

    def to_json(self) -> str:
        # +-inf thresholds are written as strings to stay valid JSON
        d = self.to_dict()
        if "thresholds" in d:
            d["thresholds"] = [v if math.isfinite(v) else str(v) for v in d["thresholds"]]
        return json.dumps(d)

    CSV_HEADER = "method,tau,alpha,t_hat,size,members"

    def to_csv_row(self) -> str:
        mem = " ".join(str(int(m)) for m in self.members)
        return f"{self.method},{self.tau},{self.alpha},{self.t_hat},{self.size},{mem}"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(self.CSV_HEADER + "\n" + self.to_csv_row() + "\n")
        return buf.getvalue()


def log_thresholds(alpha: float, curve: SurvivalCurve, tau: int) -> np.ndarray:
    """log(2 / (alpha r_t)) for t = 1..tau."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if len(curve) < tau:
        raise ValueError(f"survival curve covers t <= {len(curve)}, need {tau}")
    r = np.asarray(curve.values[:tau], dtype=float)
    if np.any(r <= 0):
        bad = int(np.flatnonzero(r <= 0)[0]) + 1
        raise CalibrationError(
            f"r_t = 0 at t = {bad}; use the asymptotic or negative binomial estimator")
    return math.log(2.0) - np.log(alpha * r)


@dataclass(frozen=True)
class UniversalRecipe:
    """Estimate criterion plus the forward/backward e-processes used in M_t."""

    criterion: Criterion
    forward: EProcessSpec
    backward: EProcessSpec


def known_pair_recipe(pre: Distribution, post: Distribution) -> UniversalRecipe:
    return UniversalRecipe(KnownPairCriterion(pre, post), lr_pair(pre, post, "forward"),
                           lr_pair(post, pre, "backward"))


def universal_set(data, tau: int, alpha: float, curve: SurvivalCurve | None,
                  recipe: UniversalRecipe, mode: str = "known_pre") -> ConfidenceSetT:
    """{t <= tau : log M_t < log 2 - log(alpha r_t)}.

    ``pfa`` mode uses r_t = 1 (the curve argument is ignored); ``lfd_pre``
    expects a curve simulated under the least favourable pre-change law.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    tau = int(tau)
    if mode == "pfa" or curve is None:
        if mode != "pfa":
            raise ValueError(f"{mode} mode needs a survival curve")
        curve = unit_curve(tau)
    thr = log_thresholds(alpha, curve, tau)
    est = point_estimate(recipe.criterion, data, tau)
    stats = test_statistics(est, recipe.forward, recipe.backward, data, tau)
    members = np.flatnonzero(stats < thr) + 1
    return ConfidenceSetT(members, tau, alpha, est.t_hat, f"universal_{mode}", thr, stats)


def default_boundary(space: Interval, lower: bool) -> float:
    """Closest point of a one-sided class to the other segment's class."""
    v = space.lo if lower else space.hi
    if not math.isfinite(v):
        raise ValueError("cannot pick a boundary parameter for an unbounded side")
    return float(v)


__all__ = [
    "CalibrationError", "ChangepointEstimate", "ConfidenceSetT", "Criterion", "DetectorCriterion",
    "EProcessCriterion",
    "KnownPairCriterion", "ProfileCriterion", "TwoMeanCriterion", "UniversalRecipe",
    "default_boundary", "known_pair_recipe", "log_thresholds", "point_estimate", "test_statistic",
    "test_statistics", "universal_set",
]
