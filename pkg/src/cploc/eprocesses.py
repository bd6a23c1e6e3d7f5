"""Forward and backward t-delay e-processes.

A forward process anchored at t multiplies factors for X_t, ..., X_n; a
backward process anchored at t multiplies factors for X_{t-1}, ..., X_n,
visited in that (decreasing) order, so its plug-in estimates may only use
observations with larger index. Values are returned on the log scale.

Indices in this module are 1-based, as in the formulas; ``data[i - 1]`` is
X_i.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace
from typing import Any

import numpy as np
from scipy.special import logsumexp

from .models import Distribution, Gaussian, log_lr, log_lr_path

FAMILIES = ("likelihood_ratio", "discrete_mixture", "numeraire_bounded_mean",
            "histogram_plugin", "subgaussian_plugin", "huber_lfd")


@dataclass(frozen=True)
class NumeraireSolution:
    lambda_star: float
    residual: float


def numeraire_lambda_star(mu: float, tol: float = 1e-15) -> NumeraireSolution:
    """Root in (0, 1/mu) of g(l) = e^l (1 - l mu) - (1 + l (1 - mu)).

    g vanishes at 0 with g'(0) = 0 and g''(0) = 1 - 2 mu, so a root in
    (0, 1/mu) exists only for mu < 1/2. The search runs on
    h(l) = g(l) e^{-l}, which has the same roots and stays well scaled near
    l = 1/mu where e^l is large; ``residual`` is h at the returned root.
    """
    if not 0.0 < mu < 1.0:
        raise ValueError(f"mu must lie in (0, 1), got {mu}")

    def h(lam):
        return (1.0 - lam * mu) - (1.0 + lam * (1.0 - mu)) * math.exp(-lam)

    hi = 1.0 / mu
    lo = None
    # scan for a positive value away from the trivial root at 0
    for k in range(1, 2001):
        cand = hi * k / 2001
        if h(cand) > 0:
            lo = cand
        elif lo is not None:
            hi = cand
            break
    if lo is None:
        raise ArithmeticError(f"no sign change for mu={mu} (a positive root needs mu < 1/2)")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if h(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * max(1.0, hi):
            break
    lam = 0.5 * (lo + hi)
    return NumeraireSolution(lam, h(lam))


@functools.lru_cache(maxsize=64)
def _lambda_star(mu: float) -> float:
    return numeraire_lambda_star(mu).lambda_star


@dataclass(frozen=True)
class EProcessSpec:
    """One e-process family.

    Parameters by family:

    * ``likelihood_ratio``: ``num``, ``den`` (factor num(x)/den(x))
    * ``discrete_mixture``: ``param``, ``atoms``, ``masses``, ``ref``
      (sum_m w_m prod f_{atom_m}/f_{ref}); Gaussian unit variance or Poisson
    * ``numeraire_bounded_mean``: ``mu`` (factor 1 + lambda*(x - mu))
    * ``histogram_plugin``: ``bins``, ``window`` ("exclusive" or "literal")
    * ``subgaussian_plugin``: ``boundary``
    * ``huber_lfd``: ``clip``, ``num`` (=f1), ``den`` (=f0); the backward
      factor is clip(f1/f0), the forward factor its reciprocal
    """

    direction: str
    family: str
    anchor: int = 1
    num: Distribution | None = None
    den: Distribution | None = None
    param: str = "gaussian"
    atoms: tuple[float, ...] = ()
    masses: tuple[float, ...] = ()
    ref: float = 0.0
    mu: float = 0.25
    bins: int = 10
    window: str = "exclusive"
    boundary: float = 0.5
    clip: tuple[float, float] = (0.0, math.inf)

    def __post_init__(self):
        if self.direction not in ("forward", "backward"):
            raise ValueError("direction must be 'forward' or 'backward'")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown e-process family {self.family!r}")
        if self.family == "discrete_mixture":
            w = np.asarray(self.masses, dtype=float)
            if len(w) == 0 or len(w) != len(self.atoms) or abs(w.sum() - 1) > 1e-12 or np.any(w < 0):
                raise ValueError("mixture masses must be nonnegative, match the atoms and sum to 1")
        if self.family == "numeraire_bounded_mean" and not 0 < self.mu < 1:
            raise ValueError("numeraire needs 0 < mu < 1")
        if self.family == "histogram_plugin":
            if self.bins < 2:
                raise ValueError("bins must be at least 2")
            if self.window not in ("exclusive", "literal"):
                raise ValueError("window must be 'exclusive' or 'literal'")
        if self.family in ("likelihood_ratio", "huber_lfd") and (self.num is None or self.den is None):
            raise ValueError(f"{self.family} needs num and den models")

    def at(self, anchor: int) -> "EProcessSpec":
        return replace(self, anchor=int(anchor))

    def to_dict(self) -> dict[str, Any]:
        d = {"direction": self.direction, "family": self.family, "anchor": self.anchor}
        if self.num is not None:
            d["num"] = self.num.to_dict()
            d["den"] = self.den.to_dict()
        if self.family == "discrete_mixture":
            d.update(param=self.param, atoms=list(self.atoms), masses=list(self.masses), ref=self.ref)
        if self.family == "numeraire_bounded_mean":
            d["mu"] = self.mu
        if self.family == "histogram_plugin":
            d.update(bins=self.bins, window=self.window)
        if self.family == "subgaussian_plugin":
            d["boundary"] = self.boundary
        if self.family == "huber_lfd":
            d["clip"] = list(self.clip)
        return d


# -- per-observation factors for the non-adaptive families ---------------------

def _mixture_terms(spec: EProcessSpec, x: np.ndarray) -> np.ndarray:
    """Per-observation, per-atom log LR, shape (len(x), atoms)."""
    th = np.asarray(spec.atoms, dtype=float)
    x = np.asarray(x, dtype=float)[:, None]
    if spec.param == "gaussian":
        return (th - spec.ref) * x - (th**2 - spec.ref**2) / 2
    return np.log(th / spec.ref) * x - (th - spec.ref)


def _static_log_factors(spec: EProcessSpec, x: np.ndarray) -> np.ndarray:
    """Log factors for families whose factor depends only on X_i itself."""
    x = np.asarray(x, dtype=float)
    f = spec.family
    if f == "likelihood_ratio":
        # along the whole path so that Markov factors see the previous state
        return log_lr_path(spec.num, spec.den, x)
    if f == "numeraire_bounded_mean":
        return np.log1p(_lambda_star(spec.mu) * (x - spec.mu))
    if f == "huber_lfd":
        lo, hi = spec.clip
        lo_log = math.log(lo) if lo > 0 else -np.inf
        clipped = np.clip(log_lr(spec.num, spec.den, x), lo_log, math.log(hi))
        return -clipped if spec.direction == "forward" else clipped
    raise ValueError(f"{f} has no static factor")


def _bin_index(x: np.ndarray, bins: int) -> np.ndarray:
    return np.clip((np.asarray(x, dtype=float) * bins).astype(int), 0, bins - 1)


def forward_eval(spec: EProcessSpec, data, n: int) -> float:
    """log R^{(t)}_n with t = spec.anchor."""
    if spec.direction != "forward":
        raise ValueError("forward_eval needs a forward spec")
    t = spec.anchor
    if n < t:
        raise ValueError(f"forward process anchored at {t} is undefined at n={n}")
    x = np.asarray(data, dtype=float)
    if spec.family in _STATIC:
        return float(np.sum(_static_log_factors(spec, x[:n])[t - 1:n]))
    return float(_forward_segment(spec, x[t - 1:n]))


_STATIC = ("likelihood_ratio", "numeraire_bounded_mean", "huber_lfd")


def _forward_factors(spec: EProcessSpec, seg: np.ndarray) -> np.ndarray:
    """Per-observation log factors over X_t..X_n for the plug-in families."""
    f = spec.family
    if f == "subgaussian_plugin":
        csum = np.concatenate([[0.0], np.cumsum(seg)[:-1]])
        k = np.arange(len(seg))
        mean = np.divide(csum, k, out=np.zeros_like(csum), where=k > 0)
        lam = np.maximum(spec.boundary, mean)
        return lam * seg - lam**2 / 2
    if f == "histogram_plugin":
        bins = spec.bins
        counts = np.zeros(bins)
        out = np.empty(len(seg))
        for i, k in enumerate(_bin_index(seg, bins)):
            out[i] = math.log(bins * (1.0 + counts[k]) / (bins + i))
            counts[k] += 1
        return out
    raise ValueError(f"unhandled family {f}")


def _forward_segment(spec: EProcessSpec, seg: np.ndarray) -> float:
    if spec.family == "discrete_mixture":
        return float(logsumexp(_mixture_terms(spec, seg).sum(axis=0) + np.log(spec.masses)))
    return float(np.sum(_forward_factors(spec, seg)))


def forward_path(spec: EProcessSpec, data, end: int) -> np.ndarray:
    """log R^{(t)}_n for n = t..end, t = spec.anchor, in one pass."""
    if spec.direction != "forward":
        raise ValueError("forward_path needs a forward spec")
    t = spec.anchor
    if end < t:
        raise ValueError(f"forward process anchored at {t} is undefined at n={end}")
    x = np.asarray(data, dtype=float)
    if spec.family in _STATIC:
        return np.cumsum(_static_log_factors(spec, x[:end])[t - 1:end])
    seg = x[t - 1:end]
    if spec.family == "discrete_mixture":
        return logsumexp(np.cumsum(_mixture_terms(spec, seg), axis=0) + np.log(spec.masses), axis=1)
    return np.cumsum(_forward_factors(spec, seg))


def backward_eval(spec: EProcessSpec, data, n: int) -> float:
    """log S^{(t)}_n with t = spec.anchor, over X_n, ..., X_{t-1}."""
    if spec.direction != "backward":
        raise ValueError("backward_eval needs a backward spec")
    t = spec.anchor
    if n >= t:
        raise ValueError(f"backward process anchored at {t} is undefined at n={n}")
    x = np.asarray(data, dtype=float)
    return float(_backward_segment(spec, x, n, t))


def _backward_factors(spec: EProcessSpec, x: np.ndarray, n: int, t: int) -> np.ndarray:
    """Log factors for X_{t-1}, X_{t-2}, ..., X_n, in that (visiting) order."""
    seg = x[n - 1:t - 1]
    f = spec.family
    if f in _STATIC:
        return _static_log_factors(spec, x[:t - 1])[n - 1:t - 1][::-1]
    if f == "subgaussian_plugin":
        # mu_i = min(0, mean of X_{i+1}..X_{t-1}) - boundary, empty mean = 0
        rev = seg[::-1]
        csum = np.concatenate([[0.0], np.cumsum(rev)[:-1]])
        k = np.arange(len(rev))
        mean = np.divide(csum, k, out=np.zeros_like(csum), where=k > 0)
        mu = np.minimum(0.0, mean) - spec.boundary
        # centred at the boundary law N(boundary), the closest pre-change member
        return mu * (rev - spec.boundary) - mu**2 / 2
    if f == "histogram_plugin":
        bins = spec.bins
        out = np.empty(t - n)
        if spec.window == "exclusive":
            # X_i scored against the histogram of X_{i+1}..X_{t-1}
            counts = np.zeros(bins)
            for q, i in enumerate(range(t - 1, n - 1, -1)):
                k = _bin_index(x[i - 1], bins)
                width = t - 1 - i
                out[q] = math.log(bins * (1.0 + counts[k]) / (bins + width))
                counts[k] += 1
        else:
            # literal window X_{i-1}..X_{t-1} with denominator bins-1+t-i
            for q, i in enumerate(range(t - 1, n - 1, -1)):
                lo = max(i - 1, 1)
                win = _bin_index(x[lo - 1:t - 1], bins)
                k = _bin_index(x[i - 1], bins)
                c = np.count_nonzero(win == k)
                out[q] = math.log(bins * (1.0 + c) / (bins - 1 + t - i))
        return out
    raise ValueError(f"unhandled family {f}")


def _backward_segment(spec: EProcessSpec, x: np.ndarray, n: int, t: int) -> float:
    if spec.family == "discrete_mixture":
        seg = x[n - 1:t - 1]
        return float(logsumexp(_mixture_terms(spec, seg).sum(axis=0) + np.log(spec.masses)))
    return float(np.sum(_backward_factors(spec, x, n, t)))


def backward_path(spec: EProcessSpec, data, stop: int = 1) -> np.ndarray:
    """log S^{(t)}_n for n = t-1, t-2, ..., stop (visiting order), t = spec.anchor."""
    if spec.direction != "backward":
        raise ValueError("backward_path needs a backward spec")
    t = spec.anchor
    if not 1 <= stop < t:
        raise ValueError(f"backward process anchored at {t} is undefined at n={stop}")
    x = np.asarray(data, dtype=float)
    if spec.family == "discrete_mixture":
        rev = x[stop - 1:t - 1][::-1]
        return logsumexp(np.cumsum(_mixture_terms(spec, rev), axis=0) + np.log(spec.masses), axis=1)
    return np.cumsum(_backward_factors(spec, x, stop, t))


# -- all anchors at once (used by the universal sets) ---------------------------

def forward_all(spec: EProcessSpec, data, end: int) -> np.ndarray:
    """log R^{(t)}_{end} for t = 1..end (index t-1 of the result)."""
    x = np.asarray(data, dtype=float)[:end]
    if end <= 0:
        return np.zeros(0)
    f = spec.family
    if f in _STATIC:
        lf = _static_log_factors(replace(spec, direction="forward"), x)
        return np.cumsum(lf[::-1])[::-1]
    if f == "discrete_mixture":
        terms = _mixture_terms(spec, x)
        suffix = np.cumsum(terms[::-1], axis=0)[::-1]
        return logsumexp(suffix + np.log(spec.masses), axis=1)
    return np.array([_forward_segment(spec, x[t - 1:end]) for t in range(1, end + 1)])


def backward_all(spec: EProcessSpec, data, start: int, tau: int) -> np.ndarray:
    """log S^{(t)}_{start} for t = start+1..tau (index t-start-1 of the result)."""
    x = np.asarray(data, dtype=float)[:tau]
    if tau <= start:
        return np.zeros(0)
    f = spec.family
    if f in _STATIC:
        lf = _static_log_factors(replace(spec, direction="backward"), x[:tau - 1])[start - 1:]
        return np.cumsum(lf)
    if f == "discrete_mixture":
        terms = _mixture_terms(spec, x[start - 1:tau - 1])
        return logsumexp(np.cumsum(terms, axis=0) + np.log(spec.masses), axis=1)
    return np.array([_backward_segment(spec, x, start, t) for t in range(start + 1, tau + 1)])


# -- convenience constructors ----------------------------------------------------

def lr_pair(num: Distribution, den: Distribution, direction: str) -> EProcessSpec:
    return EProcessSpec(direction, "likelihood_ratio", num=num, den=den)


def gaussian_mixture(direction: str, atoms, masses, ref: float, param: str = "gaussian") -> EProcessSpec:
    return EProcessSpec(direction, "discrete_mixture", param=param, atoms=tuple(float(a) for a in atoms),
                        masses=tuple(float(m) for m in masses), ref=float(ref))


def huber_pair(mu0: float, mu1: float, clip: tuple[float, float], direction: str) -> EProcessSpec:
    return EProcessSpec(direction, "huber_lfd", num=Gaussian(mu1), den=Gaussian(mu0), clip=tuple(clip))
