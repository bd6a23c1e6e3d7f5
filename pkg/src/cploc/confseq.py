"""Confidence sequences and fixed-sample intervals for the segment parameters,
and the post-detection parameter sets built from a confidence set for T."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate, special
from scipy.optimize import brentq

from ._optim import golden_min


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    empty: bool = False

    def __post_init__(self):
        if not self.empty and self.lo > self.hi:
            object.__setattr__(self, "empty", True)

    @classmethod
    def everything(cls) -> "Interval":
        return cls(-math.inf, math.inf)

    def intersect(self, other: "Interval") -> "Interval":
        if self.empty or other.empty:
            return Interval(math.nan, math.nan, True)
        return Interval(max(self.lo, other.lo), min(self.hi, other.hi))

    def __contains__(self, x: float) -> bool:
        return (not self.empty) and self.lo <= x <= self.hi

    @property
    def width(self) -> float:
        return 0.0 if self.empty else self.hi - self.lo

    def to_list(self) -> list[float] | None:
        return None if self.empty else [self.lo, self.hi]


def _level(coverage: float) -> float:
    if not 0.0 < coverage < 1.0:
        raise ValueError(f"coverage must lie in (0, 1), got {coverage}")
    return 1.0 - coverage


def gaussian_cs_radius(n: int | np.ndarray, beta: float | np.ndarray,
                       scale: float = 1.0) -> np.ndarray:
    """scale * s_n(beta)/sqrt(n) with s_n(beta) = sqrt(loglog(2n) + 0.72 log(10.4/beta)).

    scale = 1 is the boundary as usually quoted for this method; its
    time-uniform miss rate is well above beta. scale = 1.7 restores the
    constant of the stitched boundary it comes from, which does cover.
    """
    n = np.asarray(n, dtype=float)
    s = np.sqrt(np.log(np.log(2.0 * n)) + 0.72 * np.log(10.4 / np.asarray(beta, dtype=float)))
    return scale * s / np.sqrt(n)


def gaussian_cs(window: Sequence[float], coverage: float,
                space: Interval = Interval.everything(), scale: float = 1.0) -> Interval:
    """Time-uniform unit-variance Gaussian mean interval, intersected with ``space``."""
    x = np.asarray(window, dtype=float)
    if x.size == 0:
        raise ValueError("confidence sequence needs at least one observation")
    if scale <= 0:
        raise ValueError("scale must be positive")
    beta = _level(coverage)
    rad = float(gaussian_cs_radius(x.size, beta, scale))
    m = float(x.mean())
    return Interval(m - rad, m + rad).intersect(space)


def normal_quantile(p: float | np.ndarray) -> np.ndarray:
    return special.ndtri(p)


def gaussian_ci(window: Sequence[float], coverage: float,
                space: Interval = Interval.everything()) -> Interval:
    """Fixed-n interval mean +- z_{gamma/2}/sqrt(n) for a unit-variance mean."""
    x = np.asarray(window, dtype=float)
    if x.size == 0:
        raise ValueError("interval needs at least one observation")
    gamma = _level(coverage)
    rad = float(normal_quantile(1.0 - gamma / 2.0)) / math.sqrt(x.size)
    m = float(x.mean())
    return Interval(m - rad, m + rad).intersect(space)


def log_I(a: float, b: float) -> float:
    """log of I(a, b) = int exp(-a e^x + b x) dx = Gamma(b) / a^b (a, b > 0).

    The integral diverges for b <= 0.
    """
    if a <= 0:
        raise ValueError("I(a, b) needs a > 0")
    if b <= 0:
        raise ValueError("I(a, b) diverges for b <= 0")
    return float(special.gammaln(b) - b * math.log(a))


def I_quadrature(a: float, b: float) -> float:
    """Direct numerical value of I(a, b), via the substitution u = e^x."""
    val, _ = integrate.quad(lambda u: u ** (b - 1.0) * math.exp(-a * u), 0.0, math.inf,
                            epsabs=1e-14, epsrel=1e-12, limit=200)
    return val


def poisson_boundary(theta, n: int, total: float, beta: float, c: float = 1.0):
    """h(theta) <= 0 defines the Poisson confidence sequence at sample size n."""
    theta = np.asarray(theta, dtype=float)
    lhs = n * theta - total * np.log(theta)
    rhs = (math.log(1.0 / beta) + special.gammaln(c * theta) - c * theta * math.log(c)
           - special.gammaln(total + c * theta) + (total + c * theta) * np.log(n + c))
    return lhs - rhs


def poisson_cs(window: Sequence[float], coverage: float, c: float = 1.0,
               space: Interval = Interval(0.0, math.inf)) -> Interval:
    """Time-uniform Poisson rate interval from the gamma-mixture boundary."""
    x = np.asarray(window, dtype=float)
    if x.size == 0:
        raise ValueError("confidence sequence needs at least one observation")
    if c <= 0:
        raise ValueError("c must be positive")
    beta = _level(coverage)
    n, total = x.size, float(x.sum())

    def h(th):
        return float(poisson_boundary(th, n, total, beta, c))

    lo_b = 1e-6
    hi_b = max(10.0, 3.0 * total / n)
    while h(hi_b) <= 0:  # coercive, so this terminates
        hi_b *= 2.0
    grid = np.geomspace(lo_b, hi_b, 400)
    vals = poisson_boundary(grid, n, total, beta, c)
    inside = np.flatnonzero(vals <= 0)
    if inside.size == 0:
        # the minimum may fall between grid points
        k = int(np.argmin(vals))
        a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
        res = golden_min(lambda v: h(math.exp(v)), math.log(a), math.log(b))
        if h(math.exp(res)) > 0:
            return Interval(math.nan, math.nan, True)
        inside = np.array([k])
        grid = grid.copy()
        grid[k] = math.exp(res)
    k0, k1 = int(inside[0]), int(inside[-1])
    if k0 == 0:
        lo = 0.0  # boundary stays negative as theta -> 0 (happens when total = 0)
    else:
        lo = brentq(h, grid[k0 - 1], grid[k0], xtol=1e-12)
    hi = brentq(h, grid[k1], grid[k1 + 1], xtol=1e-12)
    return Interval(lo, hi).intersect(space)


# -- parameter sets from a confidence set for T -----------------------------------

@dataclass
class ParamConfidenceSet:
    intervals: list[Interval]
    target: str
    levels: dict[str, float] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def __contains__(self, x: float) -> bool:
        return any(x in iv for iv in self.intervals)

    @property
    def hull(self) -> Interval:
        if not self.intervals:
            return Interval(math.nan, math.nan, True)
        return Interval(self.intervals[0].lo, self.intervals[-1].hi)

    @property
    def measure(self) -> float:
        return sum(iv.width for iv in self.intervals)

    def to_dict(self) -> dict:
        return {"target": self.target, "intervals": [iv.to_list() for iv in self.intervals],
                "levels": self.levels, "flags": self.flags}


def union_intervals(parts: Iterable[Interval]) -> list[Interval]:
    """Disjoint, sorted union of closed intervals."""
    ivs = sorted((iv for iv in parts if not iv.empty), key=lambda iv: (iv.lo, iv.hi))
    out: list[Interval] = []
    for iv in ivs:
        if out and iv.lo <= out[-1].hi:
            if iv.hi > out[-1].hi:
                out[-1] = Interval(out[-1].lo, iv.hi)
        else:
            out.append(iv)
    return out


def param_set_union(members: Iterable[int], data: Sequence[float], tau: int, curve,
                    eta: float, target: str = "theta1",
                    constructor: Callable[..., Interval] | None = None,
                    space: Interval = Interval.everything()) -> ParamConfidenceSet:
    """Union over t in the set of the segment intervals at level 1 - eta * r_t.

    theta1 uses X_t..X_tau with a confidence sequence (default Gaussian);
    theta0 uses X_1..X_{t-1} with a fixed-sample interval (default Gaussian),
    skipping t = 1 which has no pre-change data.
    """
    if target not in ("theta0", "theta1"):
        raise ValueError("target must be 'theta0' or 'theta1'")
    members = sorted(int(t) for t in members)
    x = np.asarray(data, dtype=float)
    if constructor is None:
        constructor = gaussian_cs if target == "theta1" else gaussian_ci
    flags = []
    if not members:
        flags.append("empty confidence set for T")
    parts = []
    for t in members:
        r = curve.r(t) if curve is not None else 1.0
        cov = 1.0 - eta * r
        if target == "theta1":
            parts.append(constructor(x[t - 1:tau], cov, space=space))
        elif t >= 2:
            parts.append(constructor(x[:t - 1], cov, space=space))
    return ParamConfidenceSet(union_intervals(parts), target, {"eta": eta}, flags)
