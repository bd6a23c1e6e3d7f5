"""Probability models, path sampling and the shared-noise couplings.

Every model exposes the same small surface:

* ``logpdf(x, prev=None)``: vectorised log density / pmf (``-inf`` off support)
* ``sample(rng, size)``: i.i.d. draws (a chain path for :class:`Markov2`)
* ``from_uniform(u, prev=None)``: a deterministic map from U(0,1) noise to a draw

``from_uniform`` is what the Monte Carlo engines use so that one array of
uniforms can be pushed through different models. For continuous kinds it is
the inverse cdf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, ClassVar, Sequence

import numpy as np
from scipy import special, stats
from scipy.optimize import brentq

from ._seeding import derive

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class DomainError(ValueError):
    """An observation outside the support of a model."""


class Distribution:
    kind: ClassVar[str] = "abstract"
    discrete: ClassVar[bool] = False
    markov: ClassVar[bool] = False

    def logpdf(self, x, prev=None):
        raise NotImplementedError

    def in_support(self, x) -> np.ndarray:
        return np.isfinite(np.asarray(x, dtype=float))

    def from_uniform(self, u, prev=None):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.from_uniform(rng.random(size))

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class Gaussian(Distribution):
    mean: float = 0.0
    sd: float = 1.0
    kind: ClassVar[str] = "gaussian"

    def __post_init__(self):
        if not self.sd > 0:
            raise ValueError(f"sd must be positive, got {self.sd}")

    def logpdf(self, x, prev=None):
        z = (np.asarray(x, dtype=float) - self.mean) / self.sd
        return -0.5 * z * z - math.log(self.sd) - _LOG_SQRT_2PI

    def cdf(self, x):
        return special.ndtr((np.asarray(x, dtype=float) - self.mean) / self.sd)

    def from_uniform(self, u, prev=None):
        return self.mean + self.sd * special.ndtri(u)

    def sample(self, rng, size):
        return self.mean + self.sd * rng.standard_normal(size)

    def to_dict(self):
        return {"kind": self.kind, "mean": self.mean, "sd": self.sd}


@dataclass(frozen=True)
class Poisson(Distribution):
    rate: float = 1.0
    kind: ClassVar[str] = "poisson"
    discrete: ClassVar[bool] = True

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")

    def in_support(self, x):
        x = np.asarray(x, dtype=float)
        return (x >= 0) & (x == np.floor(x)) & np.isfinite(x)

    def logpdf(self, x, prev=None):
        x = np.asarray(x, dtype=float)
        return x * math.log(self.rate) - self.rate - special.gammaln(x + 1.0)

    def cdf(self, x):
        return stats.poisson.cdf(x, self.rate)

    def from_uniform(self, u, prev=None):
        return stats.poisson.ppf(u, self.rate)

    def sample(self, rng, size):
        return rng.poisson(self.rate, size).astype(float)

    def to_dict(self):
        return {"kind": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class Bernoulli(Distribution):
    p: float = 0.5
    kind: ClassVar[str] = "bernoulli"
    discrete: ClassVar[bool] = True

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")

    def in_support(self, x):
        x = np.asarray(x, dtype=float)
        return (x == 0) | (x == 1)

    def logpdf(self, x, prev=None):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(x == 1, np.log(self.p), np.log1p(-self.p))

    def from_uniform(self, u, prev=None):
        # threshold map, the same one the Markov chain uses
        return (np.asarray(u) < self.p).astype(float)

    def to_dict(self):
        return {"kind": self.kind, "p": self.p}


@dataclass(frozen=True)
class Uniform(Distribution):
    lo: float = 0.0
    hi: float = 1.0
    kind: ClassVar[str] = "uniform"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")

    def in_support(self, x):
        x = np.asarray(x, dtype=float)
        return (x >= self.lo) & (x <= self.hi)

    def logpdf(self, x, prev=None):
        inside = self.in_support(x)
        return np.where(inside, -math.log(self.hi - self.lo), -np.inf)

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def from_uniform(self, u, prev=None):
        return self.lo + (self.hi - self.lo) * np.asarray(u, dtype=float)

    def to_dict(self):
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}


# Named densities on [0, 1] with closed-form cdf and inverse cdf.
def _cubic_pdf(x):
    return 4.0 * (1.0 - x) ** 3


def _cubic_cdf(x):
    return 1.0 - (1.0 - x) ** 4


def _cubic_ppf(u):
    return 1.0 - (1.0 - u) ** 0.25


def _step_pdf(x):
    return np.where(x <= 0.2, 4.0, 0.25)


def _step_cdf(x):
    return np.where(x <= 0.2, 4.0 * x, 0.8 + 0.25 * (x - 0.2))


def _step_ppf(u):
    return np.where(u <= 0.8, u / 4.0, 0.2 + (u - 0.8) / 0.25)


_NAMED = {
    # 4(1-x)^3
    "cubic_decay": (_cubic_pdf, _cubic_cdf, _cubic_ppf),
    # 0.8 U[0, 0.2] + 0.2 U[0.2, 1]
    "step_mixture": (_step_pdf, _step_cdf, _step_ppf),
}


@dataclass(frozen=True)
class NamedDensity(Distribution):
    name: str = "cubic_decay"
    kind: ClassVar[str] = "beta_like_density"

    def __post_init__(self):
        if self.name not in _NAMED:
            raise ValueError(f"unknown density {self.name!r}; choose from {sorted(_NAMED)}")

    def in_support(self, x):
        x = np.asarray(x, dtype=float)
        return (x >= 0.0) & (x <= 1.0)

    def logpdf(self, x, prev=None):
        x = np.asarray(x, dtype=float)
        pdf = _NAMED[self.name][0]
        inside = self.in_support(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(inside, np.log(pdf(np.clip(x, 0.0, 1.0))), -np.inf)

    def cdf(self, x):
        return _NAMED[self.name][1](np.clip(np.asarray(x, dtype=float), 0.0, 1.0))

    def from_uniform(self, u, prev=None):
        return _NAMED[self.name][2](np.asarray(u, dtype=float))

    def to_dict(self):
        return {"kind": self.kind, "name": self.name}


@dataclass(frozen=True)
class Cauchy(Distribution):
    loc: float = 0.0
    scale: float = 1.0
    kind: ClassVar[str] = "cauchy"

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def logpdf(self, x, prev=None):
        z = (np.asarray(x, dtype=float) - self.loc) / self.scale
        return -math.log(math.pi * self.scale) - np.log1p(z * z)

    def cdf(self, x):
        return 0.5 + np.arctan((np.asarray(x, dtype=float) - self.loc) / self.scale) / math.pi

    def from_uniform(self, u, prev=None):
        return self.loc + self.scale * np.tan(math.pi * (np.asarray(u, dtype=float) - 0.5))

    def to_dict(self):
        return {"kind": self.kind, "loc": self.loc, "scale": self.scale}


@dataclass(frozen=True)
class FiniteMixture(Distribution):
    weights: tuple[float, ...] = ()
    components: tuple[Distribution, ...] = ()
    kind: ClassVar[str] = "finite_mixture"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(w) == 0 or len(w) != len(self.components):
            raise ValueError("weights and components must be nonempty and of equal length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        object.__setattr__(self, "weights", tuple(float(v) for v in w))
        object.__setattr__(self, "components", tuple(self.components))

    def in_support(self, x):
        return np.logical_or.reduce([c.in_support(x) for c in self.components])

    def logpdf(self, x, prev=None):
        with np.errstate(divide="ignore"):
            logs = [math.log(w) + c.logpdf(x) for w, c in zip(self.weights, self.components) if w > 0]
        return special.logsumexp(np.stack(logs), axis=0)

    def cdf(self, x):
        return sum(w * c.cdf(x) for w, c in zip(self.weights, self.components))

    def sample(self, rng, size):
        which = rng.choice(len(self.weights), size=size, p=self.weights)
        u = rng.random(size)
        out = np.empty(size, dtype=float)
        for k, comp in enumerate(self.components):
            sel = which == k
            if sel.any():
                out[sel] = comp.from_uniform(u[sel])
        return out

    def to_dict(self):
        return {"kind": self.kind, "weights": list(self.weights),
                "components": [c.to_dict() for c in self.components]}


@dataclass(frozen=True)
class Contaminated(Distribution):
    """(1 - eps) * base + eps * contaminant."""

    base: Distribution = field(default_factory=Gaussian)
    eps: float = 0.01
    contaminant: Distribution = field(default_factory=lambda: Cauchy(-1.0, 10.0))
    kind: ClassVar[str] = "contaminated"

    def __post_init__(self):
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError(f"eps must lie in [0, 1], got {self.eps}")

    def logpdf(self, x, prev=None):
        with np.errstate(divide="ignore"):
            a = math.log1p(-self.eps) + self.base.logpdf(x) if self.eps < 1 else -np.inf
            b = math.log(self.eps) + self.contaminant.logpdf(x) if self.eps > 0 else -np.inf
        return np.logaddexp(a, b)

    def cdf(self, x):
        return (1 - self.eps) * self.base.cdf(x) + self.eps * self.contaminant.cdf(x)

    def sample(self, rng, size):
        branch = rng.random(size) < self.eps
        u = rng.random(size)
        out = self.base.from_uniform(u)
        if branch.any():
            out = np.where(branch, self.contaminant.from_uniform(u), out)
        return np.asarray(out, dtype=float)

    def to_dict(self):
        return {"kind": self.kind, "base": self.base.to_dict(), "eps": self.eps,
                "contaminant": self.contaminant.to_dict()}


@dataclass(frozen=True)
class Markov2(Distribution):
    """Two-state chain on {0, 1}.

    ``p01`` is P(next = 1 | current = 0), ``p11`` is P(next = 1 | current = 1)
    and the first state is Bernoulli(``init_p1``).
    """

    p01: float = 0.5
    p11: float = 0.5
    init_p1: float = 0.5
    kind: ClassVar[str] = "markov2"
    discrete: ClassVar[bool] = True
    markov: ClassVar[bool] = True

    def __post_init__(self):
        for name in ("p01", "p11", "init_p1"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    def in_support(self, x):
        x = np.asarray(x, dtype=float)
        return (x == 0) | (x == 1)

    def prob_one(self, prev=None):
        if prev is None:
            return self.init_p1
        prev = np.asarray(prev)
        return np.where(prev == 1, self.p11, self.p01)

    def logpdf(self, x, prev=None):
        x = np.asarray(x, dtype=float)
        p1 = self.prob_one(prev)
        with np.errstate(divide="ignore"):
            return np.where(x == 1, np.log(p1), np.log1p(-np.asarray(p1, dtype=float)))

    def from_uniform(self, u, prev=None):
        return (np.asarray(u) < self.prob_one(prev)).astype(float)

    def path_from_uniform(self, u: np.ndarray, prev=None) -> np.ndarray:
        """Run the chain along the last axis of ``u``, starting after ``prev``."""
        u = np.asarray(u, dtype=float)
        out = np.empty_like(u)
        state = prev
        for n in range(u.shape[-1]):
            state = self.from_uniform(u[..., n], state)
            out[..., n] = state
        return out

    def sample(self, rng, size):
        return self.path_from_uniform(rng.random(size))

    def to_dict(self):
        return {"kind": self.kind, "p01": self.p01, "p11": self.p11, "init_p1": self.init_p1}


@dataclass(frozen=True)
class Exponential(Distribution):
    rate: float = 1.0
    kind: ClassVar[str] = "exponential"

    def in_support(self, x):
        return np.asarray(x, dtype=float) >= 0

    def logpdf(self, x, prev=None):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, math.log(self.rate) - self.rate * x, -np.inf)

    def cdf(self, x):
        return -np.expm1(-self.rate * np.maximum(np.asarray(x, dtype=float), 0.0))

    def from_uniform(self, u, prev=None):
        return -np.log1p(-np.asarray(u, dtype=float)) / self.rate

    def to_dict(self):
        return {"kind": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class HuberLFD(Distribution):
    """One member of Huber's least favourable pair for two Gaussian locations.

    ``role="pre"`` is q0 = (1-eps) f0 below the upper clip point and
    (1-eps) f1 / c_hi above it; ``role="post"`` is the mirror image.
    The ratio q1/q0 equals clip(f1/f0, c_lo, c_hi).
    """

    mu0: float = 0.0
    mu1: float = 1.0
    eps: float = 0.01
    role: str = "pre"
    kind: ClassVar[str] = "huber_lfd"

    def __post_init__(self):
        if self.role not in ("pre", "post"):
            raise ValueError("role must be 'pre' or 'post'")
        if not self.mu1 > self.mu0:
            raise ValueError("need mu1 > mu0")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")

    @property
    def clips(self) -> tuple[float, float]:
        return huber_clip_constants(self.mu0, self.mu1, self.eps)

    def _cut(self, c: float) -> float:
        # x where f1/f0 = c
        d = self.mu1 - self.mu0
        return 0.5 * (self.mu0 + self.mu1) + math.log(c) / d

    def logpdf(self, x, prev=None):
        x = np.asarray(x, dtype=float)
        c_lo, c_hi = self.clips
        f0 = Gaussian(self.mu0).logpdf(x)
        f1 = Gaussian(self.mu1).logpdf(x)
        base = math.log1p(-self.eps)
        if self.role == "pre":
            return base + np.where(f1 - f0 < math.log(c_hi), f0, f1 - math.log(c_hi))
        return base + np.where(f1 - f0 > math.log(c_lo), f1, f0 + math.log(c_lo))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        c_lo, c_hi = self.clips
        k = 1.0 - self.eps
        F0 = lambda v: special.ndtr(v - self.mu0)  # noqa: E731
        F1 = lambda v: special.ndtr(v - self.mu1)  # noqa: E731
        if self.role == "pre":
            xc = self._cut(c_hi)
            return np.where(x < xc, k * F0(x), k * (F0(xc) + (F1(x) - F1(xc)) / c_hi))
        xc = self._cut(c_lo)
        return np.where(x <= xc, k * c_lo * F0(x), k * (c_lo * F0(xc) + F1(x) - F1(xc)))

    def from_uniform(self, u, prev=None):
        u = np.asarray(u, dtype=float)
        c_lo, c_hi = self.clips
        k = 1.0 - self.eps
        if self.role == "pre":
            xc = self._cut(c_hi)
            head = k * special.ndtr(xc - self.mu0)
            lower = self.mu0 + special.ndtri(np.minimum(u / k, 1.0))
            q = special.ndtr(xc - self.mu1) + c_hi * (u - head) / k
            upper = self.mu1 + special.ndtri(np.clip(q, 0.0, 1.0))
            return np.where(u < head, lower, upper)
        xc = self._cut(c_lo)
        head = k * c_lo * special.ndtr(xc - self.mu0)
        lower = self.mu0 + special.ndtri(np.clip(u / (k * c_lo), 0.0, 1.0)) if c_lo > 0 else np.full_like(u, -np.inf)
        q = special.ndtr(xc - self.mu1) + (u - head) / k
        upper = self.mu1 + special.ndtri(np.clip(q, 0.0, 1.0))
        return np.where(u <= head, lower, upper)

    def to_dict(self):
        return {"kind": self.kind, "mu0": self.mu0, "mu1": self.mu1, "eps": self.eps, "role": self.role}


def huber_clip_constants(mu0: float, mu1: float, eps: float) -> tuple[float, float]:
    """Clip constants (c', c'') making Huber's LFD pair integrate to one.

    Unit-variance Gaussian locations ``mu0 < mu1`` with contamination ``eps``.
    Solved on the log scale with Brent's method.
    """
    return _huber_clips(float(mu0), float(mu1), float(eps))


def _huber_clips_uncached(mu0, mu1, eps):
    d = mu1 - mu0
    mid = 0.5 * (mu0 + mu1)
    k = 1.0 - eps

    def cut(logc):
        return mid + logc / d

    def mass_pre(logc):
        x = cut(logc)
        return k * (special.ndtr(x - mu0) + math.exp(-logc) * special.ndtr(mu1 - x)) - 1.0

    def mass_post(logc):
        x = cut(logc)
        return k * (special.ndtr(mu1 - x) + math.exp(logc) * special.ndtr(x - mu0)) - 1.0

    span = 60.0
    log_hi = brentq(mass_pre, -span, span, xtol=1e-14)
    log_lo = brentq(mass_post, -span, span, xtol=1e-14)
    return math.exp(log_lo), math.exp(log_hi)


_HUBER_CACHE: dict[tuple[float, float, float], tuple[float, float]] = {}


def _huber_clips(mu0, mu1, eps):
    key = (mu0, mu1, eps)
    if key not in _HUBER_CACHE:
        _HUBER_CACHE[key] = _huber_clips_uncached(mu0, mu1, eps)
    return _HUBER_CACHE[key]


# ----------------------------------------------------------------------------
# JSON round trip

_KINDS: dict[str, type[Distribution]] = {
    cls.kind: cls
    for cls in (Gaussian, Poisson, Bernoulli, Uniform, NamedDensity, Cauchy,
                FiniteMixture, Contaminated, Markov2, HuberLFD, Exponential)
}


def from_dict(obj: dict[str, Any]) -> Distribution:
    """Inverse of ``Distribution.to_dict``."""
    obj = dict(obj)
    try:
        kind = obj.pop("kind")
        cls = _KINDS[kind]
    except KeyError as exc:
        raise ValueError(f"unknown or missing distribution kind in {obj!r}") from exc
    if cls is FiniteMixture:
        return FiniteMixture(tuple(obj["weights"]), tuple(from_dict(c) for c in obj["components"]))
    if cls is Contaminated:
        return Contaminated(from_dict(obj["base"]), float(obj["eps"]), from_dict(obj["contaminant"]))
    return cls(**obj)


def log_density(model: Distribution, x: float, prev: float | None = None) -> float:
    """log f(x), or the log transition probability for a Markov chain.

    Raises :class:`DomainError` when ``x`` is outside the model's support;
    zero-density interior points give ``-inf``.
    """
    if not bool(model.in_support(x)):
        raise DomainError(f"{x!r} is outside the support of {model.kind}")
    return float(model.logpdf(x, prev))


def log_lr(post: Distribution, pre: Distribution, x, prev=None) -> np.ndarray:
    """Vectorised log f1(x)/f0(x). For Markov chains ``prev`` is the previous
    state; the first observation (``prev=None``) contributes the ratio of the
    initial laws."""
    with np.errstate(invalid="ignore"):
        out = np.asarray(post.logpdf(x, prev) - pre.logpdf(x, prev), dtype=float)
    return np.nan_to_num(out, nan=0.0)


def log_lr_path(post: Distribution, pre: Distribution, x: np.ndarray) -> np.ndarray:
    """Per-observation log LR along paths stored in the last axis of ``x``."""
    x = np.asarray(x, dtype=float)
    if not pre.markov:
        return log_lr(post, pre, x)
    out = np.empty_like(x)
    out[..., 0] = log_lr(post, pre, x[..., 0])
    out[..., 1:] = log_lr(post, pre, x[..., 1:], x[..., :-1])
    return out


# ----------------------------------------------------------------------------
# paths


@dataclass(frozen=True)
class ObservationPath:
    values: np.ndarray
    change_index: float  # 1-based; math.inf for no change
    seed: int

    def __len__(self) -> int:
        return len(self.values)


def sample_path(pre: Distribution, post: Distribution, change_index: float, horizon: int,
                seed: int) -> ObservationPath:
    """Draw ``horizon`` observations with the first ``change_index - 1`` from ``pre``.

    A Markov pre-model hands its last state to the post-change kernel.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if not change_index >= 1:
        raise ValueError("change_index must be >= 1")
    rng = derive(seed, "data")
    n_pre = int(min(horizon, change_index - 1)) if math.isfinite(change_index) else horizon
    n_post = horizon - n_pre
    if pre.markov or post.markov:
        u = rng.random(horizon)
        values = np.empty(horizon)
        state = None
        for n in range(horizon):
            model = pre if n < n_pre else post
            state = float(model.from_uniform(u[n], state))
            values[n] = state
    else:
        values = np.concatenate([pre.sample(rng, n_pre), post.sample(rng, n_post)])
    return ObservationPath(np.asarray(values, dtype=float), change_index, seed)


# ----------------------------------------------------------------------------
# couplings


@dataclass(frozen=True)
class CouplingRule:
    """Map a draw from F_{base_param} to a draw from F_theta.

    ``location``: x + theta - base; ``scale``: x * theta / base;
    ``inverse_cdf``: F_theta^{-1}(F_base(x)) for a continuous ``family``
    (a callable theta -> Distribution); ``poisson_thinning`` is handled by
    :func:`poisson_thin`.
    """

    family: str
    base_param: float = 0.0
    model: Any = None

    def __post_init__(self):
        if self.family not in ("location", "scale", "inverse_cdf", "poisson_thinning"):
            raise ValueError(f"unknown coupling family {self.family!r}")
        if self.family == "scale" and self.base_param == 0:
            raise ValueError("scale coupling needs a nonzero base parameter")
        if self.family == "inverse_cdf" and self.model is None:
            raise ValueError("inverse_cdf coupling needs a parametric model callable")


def couple(rule: CouplingRule, x, theta: float):
    if rule.family == "location":
        return np.asarray(x, dtype=float) + theta - rule.base_param
    if rule.family == "scale":
        return np.asarray(x, dtype=float) * theta / rule.base_param
    if rule.family == "inverse_cdf":
        src = rule.model(rule.base_param)
        dst = rule.model(theta)
        if src.discrete or dst.discrete:
            raise ValueError("inverse_cdf coupling is for continuous models only")
        return dst.from_uniform(src.cdf(x))
    raise ValueError("poisson thinning acts on counts plus uniforms; use poisson_thin")


def poisson_thin(count: int, uniforms: Sequence[float], ratio: float) -> int:
    """#{i < count : uniforms[i] < ratio}; a Binomial(count, ratio) thinning."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"thinning ratio must lie in [0, 1], got {ratio}")
    u = np.asarray(uniforms, dtype=float)
    if len(u) < count:
        raise ValueError("need at least `count` uniforms")
    return int(np.count_nonzero(u[:count] < ratio))
