"""Size bounds for the universal confidence sets.

rho0(s) = E_{F0}(f1/f0)^s and rho1(s) = E_{F1}(f0/f1)^s measure how close the
two laws are; the bound on the expected conditional size is

    (2/alpha)^{s0} p_T^{-(s0+1)} (rho0 - rho0^{T-1}) / (1 - rho0) + 1 + Delta

with rho0 = rho0(s0) at its minimiser s0. For sensitive detectors Delta can be
replaced by min(Delta, Psi). Composite classes use the least favourable pair
and the numerator 1 - rho0^{T-1}.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from ._optim import golden_min
from ._seeding import derive
from .detectors import DetectorSpec, stop_times
from .models import (Bernoulli, Distribution, Exponential, Gaussian, NamedDensity, Poisson,
                     Uniform)

MODES = ("plain", "sensitive", "composite", "composite_sensitive")


class NonIntegrableError(ArithmeticError):
    pass


class DegenerateBoundError(ArithmeticError):
    """rho = 1: the two laws coincide and the bound is infinite."""


def _support(model: Distribution) -> tuple[float, float]:
    if isinstance(model, Uniform):
        return model.lo, model.hi
    if isinstance(model, NamedDensity):
        return 0.0, 1.0
    if isinstance(model, Exponential):
        return 0.0, math.inf
    return -math.inf, math.inf


def _discrete_points(m0: Distribution, m1: Distribution) -> np.ndarray:
    hi = 1
    for m in (m0, m1):
        if isinstance(m, Poisson):
            hi = max(hi, int(m.rate + 40.0 * math.sqrt(m.rate) + 60))
        elif not isinstance(m, Bernoulli):
            raise NonIntegrableError(f"no summation rule for {m.kind}")
    return np.arange(hi + 1, dtype=float)


def rho_eval(model0: Distribution, model1: Distribution, s: float) -> float:
    """E_{model0} (f1/f0)^s = integral of f0^{1-s} f1^s."""
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    if s == 0.0 or s == 1.0:
        return 1.0
    if model0.markov or model1.markov:
        raise NonIntegrableError("rho is defined for i.i.d. laws")
    if isinstance(model0, Gaussian) and isinstance(model1, Gaussian) and model0.sd == model1.sd:
        K = (model1.mean - model0.mean) ** 2 / (2.0 * model0.sd**2)
        return math.exp(-s * (1.0 - s) * K)
    if model0.discrete or model1.discrete:
        k = _discrete_points(model0, model1)
        with np.errstate(divide="ignore"):
            l0, l1 = model0.logpdf(k), model1.logpdf(k)
        terms = np.where(np.isfinite(l0) & np.isfinite(l1), np.exp((1 - s) * l0 + s * l1), 0.0)
        return float(terms.sum())

    def integrand(x):
        l0 = float(model0.logpdf(x))
        l1 = float(model1.logpdf(x))
        if not (math.isfinite(l0) and math.isfinite(l1)):
            return 0.0
        return math.exp((1 - s) * l0 + s * l1)

    lo = max(_support(model0)[0], _support(model1)[0])
    hi = min(_support(model0)[1], _support(model1)[1])
    val, err = integrate.quad(integrand, lo, hi, limit=400, epsabs=1e-13, epsrel=1e-11)
    if not math.isfinite(val):
        raise NonIntegrableError("divergent integrand")
    return float(val)


def rho_monte_carlo(model0: Distribution, model1: Distribution, s: float, n: int = 10**6,
                    seed: int = 0) -> tuple[float, float]:
    """Sample-mean estimate of rho and its standard error."""
    x = model0.sample(derive(seed, "rho"), n)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.exp(s * (model1.logpdf(x) - model0.logpdf(x)))
    v = np.where(np.isfinite(v), v, 0.0)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(n))


@dataclass(frozen=True)
class HardnessProfile:
    rho0: Callable[[float], float]
    rho1: Callable[[float], float]
    s0: float
    s1: float
    rho0_min: float
    rho1_min: float


def minimize_rho(profile: Callable[[float], float], tol: float = 1e-8) -> tuple[float, float]:
    """Golden-section minimiser of a convex profile on [0, 1]."""
    s = golden_min(profile, 0.0, 1.0, tol)
    return s, float(profile(s))


def hardness_profile(model0: Distribution, model1: Distribution) -> HardnessProfile:
    r0 = lambda s: rho_eval(model0, model1, s)  # noqa: E731
    r1 = lambda s: rho_eval(model1, model0, s)  # noqa: E731
    s0, m0 = minimize_rho(r0)
    s1, m1 = minimize_rho(r1)
    return HardnessProfile(r0, r1, s0, s1, m0, m1)


@dataclass(frozen=True)
class LengthBound:
    term_pre: float
    term_mid: float
    term_post: float
    total: float
    assumptions_used: str
    delta: float
    psi: float

    def to_json(self, **inputs) -> str:
        d = {"terms": {"pre": self.term_pre, "mid": self.term_mid, "post": self.term_post},
             "total": self.total, "assumptions_used": self.assumptions_used,
             "delta": self.delta, "psi": self.psi, "inputs": inputs}
        return json.dumps(d)


def psi_term(profile: HardnessProfile, alpha: float, p_T: float) -> float:
    r, s1 = profile.rho1_min, profile.s1
    if r >= 1.0:
        raise DegenerateBoundError("rho1 = 1")
    q = r**s1
    return ((2.0 / alpha) ** s1 * q / (1.0 - q) + r / (1.0 - r)) / p_T


def length_bound(profile: HardnessProfile, alpha: float, p_T: float, T: int, delay: float,
                 mode: str = "plain") -> LengthBound:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if not 0.0 < p_T <= 1.0:
        raise ValueError("p_T must lie in (0, 1]")
    if delay < 0:
        raise ValueError("delay must be nonnegative")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    rho, s0 = profile.rho0_min, profile.s0
    if rho >= 1.0:
        raise DegenerateBoundError("rho0 = 1: identical models give an infinite bound")
    head = 1.0 if mode.startswith("composite") else rho
    geo = (head - rho ** (T - 1)) / (1.0 - rho) if T > 1 else 0.0
    if mode.startswith("composite") and T <= 1:
        geo = 0.0
    term_pre = (2.0 / alpha) ** s0 * p_T ** (-(s0 + 1.0)) * geo
    psi = psi_term(profile, alpha, p_T)
    post = min(delay, psi) if mode in ("sensitive", "composite_sensitive") else delay
    return LengthBound(term_pre, 1.0, post, term_pre + 1.0 + post, mode, delay, psi)


def estimate_delay(pre: Distribution, post: Distribution, spec: DetectorSpec, T: int,
                   runs: int = 500, seed: int = 0, horizon: int | None = None) -> float:
    """Mean of tau - T over runs with tau >= T."""
    H = horizon or (T + 2000)
    rng = derive(seed, "delay")
    X = np.concatenate([pre.sample(rng, (runs, T - 1)), post.sample(rng, (runs, H - T + 1))], axis=1)
    st = stop_times(spec, X)
    ok = st >= T
    if not ok.any():
        raise RuntimeError("no run survived to T")
    return float(np.mean(st[ok] - T))


__all__ = ["DegenerateBoundError", "HardnessProfile", "LengthBound", "NonIntegrableError",
           "estimate_delay", "hardness_profile", "length_bound", "minimize_rho", "psi_term",
           "rho_eval", "rho_monte_carlo"]
