"""Online stopping rules.

A :class:`DetectorSpec` is an immutable description; :class:`DetectorState`
is its running statistic. All statistics are carried on the log scale and
compared with ``log A``.

Two evaluation routes exist on purpose. ``detector_step`` is a direct,
per-observation implementation that keeps every start row. The batch
functions (``stop_times`` and friends) are vectorised or compiled and are
what the Monte Carlo engines call; the tests check one against the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

from . import _kernels as K
from .models import Distribution, Gaussian, Markov2, from_dict, log_lr, log_lr_path

FAMILIES = (
    "cusum_lr", "weighted_cusum", "wcs_ripr", "sr", "lr_pfa", "mixture_lr_pfa",
    "mixture_lr_ripr_pfa", "e_hist", "e_subgaussian", "huber_cusum", "markov_cusum",
    "wu_reflected",
)
_ATOM_FAMILIES = ("weighted_cusum", "wcs_ripr", "mixture_lr_pfa", "mixture_lr_ripr_pfa")
# families whose statistic is a scalar CUSUM of per-observation increments
_SCALAR_CUSUM = ("cusum_lr", "huber_cusum", "markov_cusum", "wu_reflected", "e_subgaussian")


class UsageError(RuntimeError):
    pass


class UnsupportedDetector(ValueError):
    pass


def default_weights(n_atoms: int = 10) -> np.ndarray:
    """w_i = e^{-(i-1)/2} - e^{-i/2} for i < n, and e^{-(n-1)/2} for the last atom."""
    i = np.arange(1, n_atoms + 1, dtype=float)
    w = np.exp(-(i - 1) / 2) - np.exp(-i / 2)
    w[-1] = math.exp(-(n_atoms - 1) / 2)
    return w


def ladder(start: float, step: float, n_atoms: int = 10) -> np.ndarray:
    return start + step * np.arange(n_atoms)


@dataclass(frozen=True)
class DetectorSpec:
    """A stopping rule.

    ``threshold`` is A (natural scale). For ``wu_reflected`` it is the
    threshold d of the reflected sum, which is not a likelihood ratio.
    Atom families use ``param`` ("gaussian" or "poisson"), ``atoms``,
    ``masses`` and ``ref`` (theta0, or theta0* for the RIPr variants).
    """

    family: str
    threshold: float
    pre: Distribution | None = None
    post: Distribution | None = None
    param: str = "gaussian"
    atoms: tuple[float, ...] = ()
    masses: tuple[float, ...] = ()
    ref: float = 0.0
    bins: int = 10
    clip: tuple[float, float] = (0.0, math.inf)
    boundary: float = 0.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown detector family {self.family!r}")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if self.family in _ATOM_FAMILIES:
            object.__setattr__(self, "atoms", tuple(float(a) for a in self.atoms))
            object.__setattr__(self, "masses", tuple(float(m) for m in self.masses))
            w = np.asarray(self.masses)
            if len(w) == 0 or len(w) != len(self.atoms):
                raise ValueError("atoms and masses must be nonempty and of equal length")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("weight masses must be nonnegative and sum to 1")
            if self.param not in ("gaussian", "poisson"):
                raise ValueError("param must be 'gaussian' or 'poisson'")
        if self.family in ("cusum_lr", "sr", "lr_pfa", "huber_cusum", "markov_cusum"):
            if self.pre is None or self.post is None:
                raise ValueError(f"{self.family} needs pre and post models")
        if self.family == "markov_cusum" and not (isinstance(self.pre, Markov2) and isinstance(self.post, Markov2)):
            raise ValueError("markov_cusum needs Markov2 pre and post models")
        if self.family == "huber_cusum":
            lo, hi = self.clip
            if not 0 <= lo < hi:
                raise ValueError("huber_cusum needs clip constants 0 <= c' < c''")
        if self.family == "e_hist" and self.bins < 2:
            raise ValueError("bins must be at least 2")

    @property
    def log_threshold(self) -> float:
        return self.threshold if self.family == "wu_reflected" else math.log(self.threshold)

    # per-atom affine log LR: a_m x + b_m
    def atom_coefficients(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        th = np.asarray(self.atoms)
        if self.param == "gaussian":
            a = th - self.ref
            b = -(th**2 - self.ref**2) / 2
        else:
            a = np.log(th / self.ref)
            b = -(th - self.ref)
        with np.errstate(divide="ignore"):
            logw = np.log(np.asarray(self.masses))
        return a, b, logw

    @property
    def monotone_upward(self) -> bool:
        """Statistic nondecreasing in every observation (needed for brackets)."""
        if self.family in _ATOM_FAMILIES:
            a, _, _ = self.atom_coefficients()
            return bool(np.all(a >= 0))
        return False

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"family": self.family, "threshold": self.threshold}
        if self.pre is not None:
            d["pre"] = self.pre.to_dict()
        if self.post is not None:
            d["post"] = self.post.to_dict()
        if self.family in _ATOM_FAMILIES:
            d.update(param=self.param, atoms=list(self.atoms), masses=list(self.masses), ref=self.ref)
        if self.family == "e_hist":
            d["bins"] = self.bins
        if self.family == "huber_cusum":
            d["clip"] = list(self.clip)
        if self.family == "e_subgaussian":
            d["boundary"] = self.boundary
        return d

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "DetectorSpec":
        obj = dict(obj)
        for key in ("pre", "post"):
            if key in obj and obj[key] is not None:
                obj[key] = from_dict(obj[key])
        for key in ("atoms", "masses", "clip"):
            if key in obj:
                obj[key] = tuple(obj[key])
        return cls(**obj)


# -- constructors -----------------------------------------------------------

def cusum_lr(pre: Distribution, post: Distribution, A: float) -> DetectorSpec:
    return DetectorSpec("cusum_lr", A, pre=pre, post=post)


def weighted_cusum(boundary: float, ref: float, A: float, param: str = "gaussian",
                   step: float = 0.2, n_atoms: int = 10, ripr: bool = False) -> DetectorSpec:
    """Mixture CUSUM over the atoms boundary, boundary+step, ... against ``ref``.

    With ``ripr=True`` the denominator is the pre-class member closest to the
    post class (``ref`` is then theta0*).
    """
    family = "wcs_ripr" if ripr else "weighted_cusum"
    return DetectorSpec(family, A, param=param, atoms=tuple(ladder(boundary, step, n_atoms)),
                        masses=tuple(default_weights(n_atoms)), ref=ref)


def mixture_lr_pfa(boundary: float, ref: float, A: float, param: str = "gaussian",
                   step: float = 0.2, n_atoms: int = 10, ripr: bool = False) -> DetectorSpec:
    family = "mixture_lr_ripr_pfa" if ripr else "mixture_lr_pfa"
    return DetectorSpec(family, A, param=param, atoms=tuple(ladder(boundary, step, n_atoms)),
                        masses=tuple(default_weights(n_atoms)), ref=ref)


def huber_cusum(mu0: float, mu1: float, clip: tuple[float, float], A: float) -> DetectorSpec:
    return DetectorSpec("huber_cusum", A, pre=Gaussian(mu0), post=Gaussian(mu1), clip=tuple(clip))


def wu_reflected(d: float) -> DetectorSpec:
    return DetectorSpec("wu_reflected", d)


# -- per-observation increments for the scalar families ----------------------

def scalar_increments(spec: DetectorSpec, x: np.ndarray) -> np.ndarray:
    """Log-scale increments along paths stored in the last axis of ``x``.

    Defined for every family whose statistic is a one-dimensional recursion
    (CUSUM-type, Shiryaev-Roberts, and the likelihood-ratio PFA detector).
    """
    x = np.asarray(x, dtype=float)
    f = spec.family
    if f in ("cusum_lr", "sr", "lr_pfa", "markov_cusum"):
        return log_lr_path(spec.post, spec.pre, x)
    if f == "huber_cusum":
        lo, hi = spec.clip
        raw = log_lr(spec.post, spec.pre, x)
        with np.errstate(divide="ignore"):
            return np.clip(raw, math.log(lo) if lo > 0 else -np.inf, math.log(hi))
    if f == "wu_reflected":
        return x.copy()
    if f == "e_subgaussian":
        n = x.shape[-1]
        csum = np.cumsum(x, axis=-1)
        prev_mean = np.zeros_like(x)
        prev_mean[..., 1:] = csum[..., :-1] / np.arange(1, n)
        nu = np.minimum(0.0, prev_mean) - spec.boundary
        # likelihood ratio of N(boundary + nu) against the boundary law N(boundary)
        return nu * (x - spec.boundary) - nu**2 / 2
    raise UnsupportedDetector(f"{f} has no scalar increment form")


def cusum_from_increments(inc: np.ndarray) -> np.ndarray:
    """log W_n = max(log W_{n-1}, 0) + inc_n, i.e. P_n - min_{m<n} P_m."""
    P = np.cumsum(inc, axis=-1)
    lagged = np.concatenate([np.zeros(P.shape[:-1] + (1,)), P[..., :-1]], axis=-1)
    return P - np.minimum.accumulate(np.minimum(lagged, 0.0), axis=-1)


def _first_crossing(stat: np.ndarray, level: float) -> np.ndarray:
    hit = stat >= level
    first = np.argmax(hit, axis=-1) + 1
    return np.where(hit.any(axis=-1), first, 0)


def stop_times(spec: DetectorSpec, X: np.ndarray) -> np.ndarray:
    """Stop time (1-based, 0 = none) for each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    f = spec.family
    logA = spec.log_threshold
    if f in _SCALAR_CUSUM:
        return _first_crossing(cusum_from_increments(scalar_increments(spec, X)), logA)
    if f == "lr_pfa":
        return _first_crossing(np.cumsum(scalar_increments(spec, X), axis=-1), logA)
    if f == "sr":
        inc = scalar_increments(spec, X)
        stat = np.empty_like(inc)
        r = np.full(inc.shape[0], -np.inf)
        for n in range(inc.shape[1]):
            r = np.logaddexp(r, 0.0) + inc[:, n]
            stat[:, n] = r
        return _first_crossing(stat, logA)
    if f in ("mixture_lr_pfa", "mixture_lr_ripr_pfa"):
        a, b, logw = spec.atom_coefficients()
        out = np.zeros(X.shape[0], dtype=np.int64)
        for r in range(X.shape[0]):
            L = np.cumsum(np.outer(X[r], a) + b, axis=0)
            out[r] = _first_crossing(logsumexp(L + logw, axis=1), logA)
        return out
    if f in ("weighted_cusum", "wcs_ripr"):
        a, b, logw = spec.atom_coefficients()
        return K.wcusum_stop_rows(np.ascontiguousarray(X), a, b, logw, logA)
    if f == "e_hist":
        return K.ehist_stop_rows(np.ascontiguousarray(X), spec.bins, logA)
    raise UnsupportedDetector(f)


def stop_time(spec: DetectorSpec, x: Sequence[float]) -> int:
    return int(stop_times(spec, np.asarray(x, dtype=float)[None, :])[0])


# -- streaming state -----------------------------------------------------------

@dataclass
class DetectorState:
    """Running statistic. ``rows`` holds per-start values for the families that
    need them; ``log_stat`` is the current log statistic (for ``wu_reflected``
    the reflected sum itself)."""

    n: int = 0
    log_stat: float = -math.inf
    stopped: bool = False
    prev: float | None = None
    running_sum: float = 0.0
    rows: np.ndarray | None = None
    counts: np.ndarray | None = None
    history: list[float] = field(default_factory=list)

    @property
    def statistic(self) -> float:
        return math.exp(self.log_stat) if self.log_stat < 700 else math.inf


def initial_state(spec: DetectorSpec) -> DetectorState:
    st = DetectorState()
    if spec.family == "wu_reflected":
        st.log_stat = 0.0
    if spec.family in ("lr_pfa",):
        st.log_stat = 0.0
    if spec.family in _ATOM_FAMILIES:
        st.rows = np.zeros((0, len(spec.atoms)))
    if spec.family == "e_hist":
        st.rows = np.zeros(0)
        st.counts = np.zeros((0, spec.bins), dtype=np.int64)
    return st


def _one_increment(spec: DetectorSpec, st: DetectorState, x: float) -> float:
    f = spec.family
    if f in ("cusum_lr", "sr", "lr_pfa", "markov_cusum"):
        return float(log_lr(spec.post, spec.pre, x, st.prev if spec.pre.markov else None))
    if f == "huber_cusum":
        lo, hi = spec.clip
        raw = float(log_lr(spec.post, spec.pre, x))
        lo_log = math.log(lo) if lo > 0 else -math.inf
        return min(max(raw, lo_log), math.log(hi))
    if f == "e_subgaussian":
        mean = st.running_sum / st.n if st.n > 0 else 0.0
        nu = min(0.0, mean) - spec.boundary
        return nu * (x - spec.boundary) - nu * nu / 2
    raise UnsupportedDetector(f)


def detector_step(spec: DetectorSpec, state: DetectorState, x: float) -> DetectorState:
    """Consume one observation; returns a new state (the input is untouched)."""
    if state.stopped:
        raise UsageError("detector already stopped; start a new state")
    st = replace(state, history=list(state.history))
    if st.rows is not None:
        st.rows = st.rows.copy()
    if st.counts is not None:
        st.counts = st.counts.copy()
    x = float(x)
    f = spec.family
    if f in ("cusum_lr", "huber_cusum", "markov_cusum", "e_subgaussian"):
        inc = _one_increment(spec, st, x)
        st.log_stat = max(st.log_stat, 0.0) + inc
    elif f == "sr":
        st.log_stat = float(np.logaddexp(st.log_stat, 0.0)) + _one_increment(spec, st, x)
    elif f == "lr_pfa":
        st.log_stat += _one_increment(spec, st, x)
    elif f == "wu_reflected":
        st.log_stat = max(0.0, st.log_stat + x)
    elif f in _ATOM_FAMILIES:
        a, b, logw = spec.atom_coefficients()
        inc = a * x + b
        if f in ("weighted_cusum", "wcs_ripr"):
            st.rows = np.vstack([st.rows, np.zeros(len(a))]) + inc
            st.log_stat = float(np.max(logsumexp(st.rows + logw, axis=1)))
        else:
            st.rows = (st.rows[0] if len(st.rows) else np.zeros(len(a))) + inc
            st.rows = st.rows[None, :]
            st.log_stat = float(logsumexp(st.rows[0] + logw))
    elif f == "e_hist":
        bins = spec.bins
        k = min(max(int(x * bins), 0), bins - 1)
        st.rows = np.append(st.rows, 0.0)
        st.counts = np.vstack([st.counts, np.zeros(bins, dtype=np.int64)])
        width = st.n - np.arange(st.n + 1)
        st.rows += np.log(bins * (1.0 + st.counts[:, k]) / (bins + width))
        st.counts[:, k] += 1
        st.log_stat = float(st.rows.max())
    else:  # pragma: no cover - guarded by DetectorSpec
        raise UnsupportedDetector(f)
    st.n += 1
    st.prev = x
    st.running_sum += x
    st.stopped = st.log_stat >= spec.log_threshold
    return st


@dataclass(frozen=True)
class StopOutcome:
    tau: int | None
    cap: int | None = None

    @property
    def stopped(self) -> bool:
        return self.tau is not None

    def __repr__(self) -> str:
        return f"stopped_at({self.tau})" if self.stopped else f"censored({self.cap})"


def run_to_stop(spec: DetectorSpec, stream: Iterable[float], cap: float = math.inf) -> StopOutcome:
    """Feed ``stream`` until the statistic reaches A or ``cap`` observations."""
    if not cap >= 1:
        raise ValueError("cap must be at least 1")
    st = initial_state(spec)
    n = 0
    for x in stream:
        st = detector_step(spec, st, x)
        n += 1
        if st.stopped:
            return StopOutcome(n)
        if n >= cap:
            break
    return StopOutcome(None, n)


# -- brackets ----------------------------------------------------------------

@dataclass(frozen=True)
class MonotoneBracket:
    t1: float
    t2: float

    def __post_init__(self):
        if self.t1 > self.t2:
            raise ValueError("bracket needs t1 <= t2")


def _as_time(stop: int) -> float:
    return math.inf if stop == 0 else float(stop)


def stop_time_bounds(spec: DetectorSpec, base_noise: np.ndarray, t: int, theta_lo: float,
                     theta_hi: float, pre_lo: float | None = None,
                     pre_hi: float | None = None) -> MonotoneBracket:
    """Bracket the stop time of the coupled Gaussian location path over a
    parameter box.

    ``base_noise`` is a standard-normal path. The coupled path is
    ``noise + pre`` before ``t`` and ``noise + theta`` from ``t`` on; the pre
    value defaults to the detector reference (known pre-change) and may range
    over ``[pre_lo, pre_hi]``. For a statistic nondecreasing in every
    observation the fastest stop is at the top corner, the slowest at the
    bottom corner.
    """
    if not spec.monotone_upward or spec.param != "gaussian":
        raise UnsupportedDetector(f"{spec.family} has no declared monotonicity for Gaussian brackets")
    if theta_lo > theta_hi:
        raise ValueError("theta_lo must not exceed theta_hi")
    pre_lo = spec.ref if pre_lo is None else pre_lo
    pre_hi = spec.ref if pre_hi is None else pre_hi
    a, b, logw = spec.atom_coefficients()
    eps = np.ascontiguousarray(np.asarray(base_noise, dtype=float)[None, :])
    t1, t2 = K.gaussian_brackets(eps, np.array([t]), np.array([pre_hi]), np.array([theta_hi]),
                                 np.array([pre_lo]), np.array([theta_lo]), a, b, logw,
                                 spec.log_threshold)
    return MonotoneBracket(_as_time(int(t1[0, 0])), _as_time(int(t2[0, 0])))
