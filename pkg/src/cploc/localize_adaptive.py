"""Simulation-calibrated confidence sets for the changepoint.

For each candidate t the observed statistic M_t is compared with B
simulated copies generated under "the change happened at t". A candidate is
kept when M_t sits among the ceil((1 - c)(B + 1)) smallest of the B + 1
values, with c = alpha r_t (or alpha for detectors that control PFA).

Three engines share this rank rule:

* known pre- and post-change laws (any dependence that the models carry);
* Gaussian or Poisson, known pre-change parameter, post-change parameter in
  a confidence sequence;
* Gaussian or Poisson, both parameters in confidence intervals/sequences.

The composite engines reuse one batch of noise per simulation index across
all t and all parameters, bracket the detector stop time between the
fastest and slowest parameter corners, and bound the statistic over the
parameter box in closed form (Gaussian) or over a finite candidate set
(Poisson). A plain grid over the box is available as an alternative.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from ._seeding import derive
from .confseq import Interval, gaussian_ci, gaussian_cs, poisson_cs
from .detectors import (DetectorSpec, MonotoneBracket, UnsupportedDetector, stop_time,
                        stop_times)
from .localize_universal import (ConfidenceSetT, known_pair_recipe, point_estimate,
                                 test_statistics)
from .models import Distribution, Gaussian, Poisson, log_lr_path
from .survival import SurvivalCurve, estimate_survival, unit_curve

NEG_INF = -math.inf
POS_INF = math.inf
SAFETY_HORIZON = 10**6
PFA_FAMILIES = ("lr_pfa", "mixture_lr_pfa", "mixture_lr_ripr_pfa")
SUP_BOUNDS = ("gaussian_closed_form", "poisson_candidates", "grid")


# -- rank rule ---------------------------------------------------------------------

def rank_limit(c: float | np.ndarray, B: int) -> np.ndarray:
    """ceil((1 - c)(B + 1)); the small offset keeps exact products from rounding up."""
    c = np.asarray(c, dtype=float)
    if np.any((c <= 0) | (c >= 1)):
        raise ValueError("level must lie in (0, 1)")
    return np.ceil((1.0 - c) * (B + 1) - 1e-9).astype(np.int64)


def rank_quantile_accept(m_obs: float, sims: Sequence[float], c: float) -> bool:
    """Rank of m_obs among sims (1 + #strictly smaller) is at most ceil((1-c)(B+1))."""
    sims = np.asarray(sims, dtype=float)
    rank = 1 + int(np.count_nonzero(sims < m_obs))
    return rank <= int(rank_limit(c, sims.size))


def critical_values(sims: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Per row, the k-th smallest simulated value (+inf when k > B).

    rank <= k is the same as m_obs <= k-th smallest sim, so this is the
    effective threshold of the rank rule.
    """
    sims = np.atleast_2d(sims)
    B = sims.shape[1]
    k = rank_limit(c, B)
    srt = np.sort(sims, axis=1)
    out = np.full(sims.shape[0], POS_INF)
    ok = k <= B
    out[ok] = srt[np.flatnonzero(ok), k[ok] - 1]
    return out


# -- configuration -----------------------------------------------------------------

@dataclass(frozen=True)
class AdaptiveConfig:
    alpha: float = 0.05
    beta: float = 0.0
    gamma: float = 0.0
    N: int = 100
    B: int = 100
    L: float | None = None  # None picks the default for the detector
    theta0_star: float | None = None
    sup_bound: str = "gaussian_closed_form"
    grid_points: tuple[int, int] = (50, 50)
    horizon: int | None = None  # noise length for the composite engines
    survival_kind: str = "asymptotic"
    pfa: bool = False  # use alpha in place of alpha r_t
    # a candidate whose parameter set is empty: "reject" reads the supremum
    # over the empty set as -inf, "accept" keeps it
    empty_policy: str = "reject"
    cs_scale: float = 1.0  # radius multiplier of the Gaussian confidence sequence

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if name == "alpha" and not 0 < v < 1:
                raise ValueError("alpha must lie in (0, 1)")
            if not 0 <= v < 1:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.alpha + self.beta + self.gamma >= 1:
            raise ValueError("alpha + beta + gamma must be below 1")
        if self.B < 1 or self.N < 1:
            raise ValueError("B and N must be at least 1")
        if self.L is not None and not self.L >= 1:
            raise ValueError("L must be at least 1")
        if self.sup_bound not in SUP_BOUNDS:
            raise ValueError(f"sup_bound must be one of {SUP_BOUNDS}")
        if self.empty_policy not in ("reject", "accept"):
            raise ValueError("empty_policy must be 'reject' or 'accept'")
        if self.cs_scale <= 0:
            raise ValueError("cs_scale must be positive")
        if min(self.grid_points) < 1:
            raise ValueError("grid sizes must be at least 1")

    def to_json(self) -> str:
        d = asdict(self)
        if d["L"] is not None and not math.isfinite(d["L"]):
            d["L"] = "inf"
        return json.dumps(d)


def default_L(spec: DetectorSpec, tau: int) -> float:
    """4 tau for detectors that may never stop; infinity otherwise."""
    return 4.0 * tau if spec.family in PFA_FAMILIES else POS_INF


def _levels(cfg: AdaptiveConfig, curve: SurvivalCurve, ts: np.ndarray) -> np.ndarray:
    r = np.asarray(curve.values, dtype=float)[ts - 1]
    if np.any(r <= 0):
        raise ValueError("survival estimate of zero; use the asymptotic or negative binomial estimator")
    return cfg.alpha * r


def _curve(cfg: AdaptiveConfig, pre: Distribution, spec: DetectorSpec, tau: int, seed: int,
           curve: SurvivalCurve | None) -> SurvivalCurve:
    if cfg.pfa:
        return unit_curve(tau)
    if curve is not None:
        if len(curve) < tau:
            raise ValueError(f"survival curve covers t <= {len(curve)}, need {tau}")
        return curve
    return estimate_survival(pre, spec, tau, cfg.N, kind=cfg.survival_kind, seed=seed)


def _accepted(m_obs: np.ndarray, sims: np.ndarray, levels: np.ndarray):
    crit = critical_values(sims, levels)
    return m_obs <= crit, crit


# -- truncated statistic on a single path ---------------------------------------------

def known_pair_stat(pre: Distribution, post: Distribution) -> Callable[[np.ndarray, int], float]:
    """log M_t on a prefix for the known-pair statistic: P_{t-1} - min_{m < n} P_m."""

    def stat(prefix: np.ndarray, t: int) -> float:
        P = np.concatenate([[0.0], np.cumsum(log_lr_path(post, pre, prefix))])
        return float(P[t - 1] - P[:len(prefix)].min())

    return stat


def truncated_statistic(sim_path: np.ndarray, t: int, L: float, spec: DetectorSpec,
                        stat: Callable[[np.ndarray, int], float]) -> float:
    """M_{t,L} on one simulated path.

    -inf if the detector stops before t (or never stops within the path when
    L is infinite), +inf if it runs past a finite L, otherwise the statistic
    on the prefix up to the stop.
    """
    x = np.asarray(sim_path, dtype=float)
    cap = len(x) if not math.isfinite(L) else min(len(x), int(L))
    if math.isfinite(L) and len(x) < int(L):
        raise ValueError("path shorter than L")
    tp = stop_time(spec, x[:cap])
    if tp == 0:
        return POS_INF if math.isfinite(L) else NEG_INF
    if tp < t:
        return NEG_INF
    return stat(x[:tp], t)


# -- known pre- and post-change engine -----------------------------------------------

def _uniforms(seed: int, B: int, H: int) -> np.ndarray:
    # each index j has its own stream; a longer draw extends the shorter one
    return np.stack([derive(seed, "adaptive", j).random(H) for j in range(B)])


def _row_paths(pre: Distribution, post: Distribution, U: np.ndarray, t_rows: np.ndarray,
               j_rows: np.ndarray, H: int, cache: dict) -> np.ndarray:
    u = U[j_rows, :H]
    cols = np.arange(1, H + 1)
    use_pre = cols[None, :] < t_rows[:, None]
    if pre.markov or post.markov:
        if not (pre.markov and post.markov):
            raise ValueError("mixing Markov and i.i.d. models is not supported")
        out = np.empty_like(u)
        p1 = np.where(use_pre[:, 0], pre.init_p1, post.init_p1)
        state = (u[:, 0] < p1).astype(float)
        out[:, 0] = state
        for k in range(1, H):
            p1 = np.where(use_pre[:, k], pre.prob_one(state), post.prob_one(state))
            state = (u[:, k] < p1).astype(float)
            out[:, k] = state
        return out
    if cache.get("H") != H:
        cache["H"] = H
        cache["pre"] = pre.from_uniform(U[:, :H])
        cache["post"] = post.from_uniform(U[:, :H])
    return np.where(use_pre, cache["pre"][j_rows], cache["post"][j_rows])


def simulate_known(pre: Distribution, post: Distribution, spec: DetectorSpec, ts: np.ndarray,
                   B: int, seed: int, L: float, safety_horizon: int = SAFETY_HORIZON,
                   stat_pre: Distribution | None = None,
                   stat_post: Distribution | None = None) -> np.ndarray:
    """M^j_{t,L} for every t in ``ts`` (rows) and j < B (columns).

    Path j uses the same uniforms for every t: observations before t are
    pushed through the pre-change law and the rest through the post-change
    law (for chains, through the kernels, conditioned on the previous state).
    """
    stat_pre = pre if stat_pre is None else stat_pre
    stat_post = post if stat_post is None else stat_post
    ts = np.asarray(ts, dtype=np.int64)
    nt = len(ts)
    out = np.full((nt, B), np.nan)
    cap = int(min(L, safety_horizon))
    t_rows = np.repeat(ts, B)
    j_rows = np.tile(np.arange(B), nt)
    pending = np.arange(nt * B)
    H = min(cap, int(ts.max()) + 128)
    while pending.size:
        U = _uniforms(seed, B, H)
        cache: dict = {}
        chunk = max(1, (1 << 21) // H)
        still = []
        for s in range(0, pending.size, chunk):
            idx = pending[s:s + chunk]
            tr, jr = t_rows[idx], j_rows[idx]
            X = _row_paths(pre, post, U, tr, jr, H, cache)
            st = stop_times(spec, X)
            early = (st > 0) & (st < tr)
            done = st >= tr
            flat = out.reshape(-1)
            flat[idx[early]] = NEG_INF
            if np.any(done):
                sel = np.flatnonzero(done)
                P = np.zeros((sel.size, H + 1))
                P[:, 1:] = np.cumsum(log_lr_path(stat_post, stat_pre, X[sel]), axis=1)
                runmin = np.minimum.accumulate(P, axis=1)
                r = np.arange(sel.size)
                flat[idx[sel]] = P[r, tr[sel] - 1] - runmin[r, st[sel] - 1]
            left = idx[st == 0]
            if H >= cap:
                flat[left] = POS_INF if math.isfinite(L) else NEG_INF
            else:
                still.append(left)
        pending = np.concatenate(still) if still else np.zeros(0, dtype=np.int64)
        H = min(cap, 2 * H)
    return out


def adaptive_set_known(data, tau: int, cfg: AdaptiveConfig, pre: Distribution, post: Distribution,
                       spec: DetectorSpec, seed: int,
                       curve: SurvivalCurve | None = None) -> ConfidenceSetT:
    """Known pre- and post-change laws (i.i.d. or Markov)."""
    tau = int(tau)
    curve = _curve(cfg, pre, spec, tau, seed, curve)
    L = default_L(spec, tau) if cfg.L is None else cfg.L
    ts = np.arange(1, tau + 1)
    recipe = known_pair_recipe(pre, post)
    est = point_estimate(recipe.criterion, data, tau)
    m_obs = test_statistics(est, recipe.forward, recipe.backward, data, tau)
    sims = simulate_known(pre, post, spec, ts, cfg.B, seed, L)
    ok, crit = _accepted(m_obs, sims, _levels(cfg, curve, ts))
    return ConfidenceSetT(ts[ok], tau, cfg.alpha, est.t_hat, "adaptive_known", crit, m_obs)


# -- composite engines: observed statistics ------------------------------------------

def profile_stats(x: np.ndarray, family: str, theta0: float | None = None) -> np.ndarray:
    """log M_t for t = 1..n with MLE-profiled segment parameters.

    With ``theta0`` the pre-change parameter is known and only the
    post-change one is profiled; otherwise both are.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    C = np.concatenate([[0.0], np.cumsum(x)])
    i = np.arange(1, n + 1)
    s1 = C[n] - C[i - 1]
    m1 = (n - i + 1).astype(float)
    s0 = C[i - 1]
    m0 = (i - 1).astype(float)
    if family == "gaussian":
        if theta0 is not None:
            z = s1 - m1 * theta0
            F = z * z / m1
        else:
            F = s1 * s1 / m1 + np.divide(s0 * s0, m0, out=np.zeros(n), where=m0 > 0)
        return 0.5 * (F.max() - F)
    if family == "poisson":
        def xlogx(s, m):
            ok = (s > 0) & (m > 0)
            return np.where(ok, s * np.log(np.where(ok, s, 1.0) / np.where(m > 0, m, 1.0)), 0.0)
        if theta0 is not None:
            F = m1 * theta0 - s1 + xlogx(s1, m1 * theta0)
        else:
            F = xlogx(s1, m1) + xlogx(s0, m0)
        return F.max() - F
    raise ValueError(f"unsupported family {family!r}")


# -- composite engines: noise batches -------------------------------------------------

@dataclass
class SimulatedBatch:
    """Shared noise plus per-(t, j) brackets and bounds."""

    ts: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    bound: np.ndarray
    eps: np.ndarray | None = None
    counts: np.ndarray | None = None
    uoff: np.ndarray | None = None
    uvals: np.ndarray | None = None
    lam: float = math.nan


def gaussian_noise(seed: int, B: int, H: int) -> np.ndarray:
    return np.stack([derive(seed, "adaptive", j).standard_normal(H) for j in range(B)])


def poisson_noise(seed: int, B: int, H: int, lam: float):
    """Pois(lam) counts with their sorted uniforms, padded row-wise."""
    counts = np.empty((B, H), dtype=np.int64)
    offs = np.zeros((B, H + 1), dtype=np.int64)
    rows = []
    for j in range(B):
        rng = derive(seed, "adaptive", j)
        c = rng.poisson(lam, H)
        u = rng.random(int(c.sum()))
        seg = np.repeat(np.arange(H), c)
        u = u[np.lexsort((u, seg))]
        counts[j] = c
        offs[j, 1:] = np.cumsum(c)
        rows.append(u)
    width = max(1, max(len(u) for u in rows))
    uvals = np.full((B, width), 2.0)
    for j, u in enumerate(rows):
        uvals[j, :len(u)] = u
    return counts, offs, uvals


def _atoms(spec: DetectorSpec):
    if not spec.monotone_upward:
        raise UnsupportedDetector(f"{spec.family} has no declared monotonicity for brackets")
    a, b, logw = spec.atom_coefficients()
    return a, b, logw, spec.log_threshold


def _L_int(L: float) -> int:
    return int(L) if math.isfinite(L) else np.iinfo(np.int64).max


def gaussian_batch(eps: np.ndarray, ts: np.ndarray, pre_box: np.ndarray, post_box: np.ndarray,
                   spec: DetectorSpec, L: float, theta0: float | None) -> SimulatedBatch:
    """Brackets and closed-form bounds for Gaussian location paths.

    ``pre_box``/``post_box`` have one (lo, hi) row per t. With ``theta0``
    the pre-change mean is fixed and the bound profiles the post mean only.
    """
    a, b, logw, logA = _atoms(spec)
    ts = np.asarray(ts, dtype=np.int64)
    eps = np.ascontiguousarray(eps)
    t1, t2 = K.gaussian_brackets(eps, ts, pre_box[:, 1].copy(), post_box[:, 1].copy(),
                                 pre_box[:, 0].copy(), post_box[:, 0].copy(), a, b, logw, logA)
    C = np.zeros((eps.shape[0], eps.shape[1] + 1))
    C[:, 1:] = np.cumsum(eps, axis=1)
    if theta0 is not None:
        dlo, dhi = post_box[:, 0] - theta0, post_box[:, 1] - theta0
        double = False
    else:
        dlo = post_box[:, 0] - pre_box[:, 1]
        dhi = post_box[:, 1] - pre_box[:, 0]
        # with no pre-change data the statistic ignores the shift
        dlo = np.where(ts == 1, 0.0, dlo)
        dhi = np.where(ts == 1, 0.0, dhi)
        double = True
    bound = K.sup_bound_grid(C, ts, t1, t2, dlo.astype(float), dhi.astype(float), _L_int(L), double)
    return SimulatedBatch(ts, t1, t2, bound, eps=eps)


def poisson_batch(counts, uoff, uvals, lam: float, ts: np.ndarray, pre_box: np.ndarray,
                  post_box: np.ndarray, spec: DetectorSpec, L: float,
                  theta0: float | None) -> SimulatedBatch:
    a, b, logw, logA = _atoms(spec)
    ts = np.asarray(ts, dtype=np.int64)
    if np.any(pre_box[:, 1] > lam + 1e-12) or np.any(post_box[:, 1] > lam + 1e-12):
        raise ValueError("thinning rate must dominate every parameter in the box")
    t1, t2 = K.poisson_brackets(counts, uoff, uvals, lam, ts, pre_box[:, 1].copy(),
                                post_box[:, 1].copy(), pre_box[:, 0].copy(),
                                post_box[:, 0].copy(), a, b, logw, logA)
    double = theta0 is None
    bound = K.poisson_sup_grid(counts, uoff, uvals, lam, ts, t1, t2, pre_box[:, 0].copy(),
                               pre_box[:, 1].copy(), post_box[:, 0].copy(),
                               post_box[:, 1].copy(), 0.0 if double else float(theta0),
                               _L_int(L), double)
    return SimulatedBatch(ts, t1, t2, bound, counts=counts, uoff=uoff, uvals=uvals, lam=lam)


def sup_bound_gaussian(t: int, bracket: MonotoneBracket, noise_path: np.ndarray,
                       post_set: Interval, pre_set: Interval | None = None,
                       theta0: float | None = None, L: float = POS_INF) -> float:
    """V (known pre mean ``theta0``) or U (``pre_set`` given) for one noise path."""
    if (pre_set is None) == (theta0 is None):
        raise ValueError("give exactly one of theta0 (V) and pre_set (U)")
    t2 = 0 if math.isinf(bracket.t2) else int(bracket.t2)
    t1 = 0 if math.isinf(bracket.t1) else int(bracket.t1)
    C = np.concatenate([[0.0], np.cumsum(noise_path)])[None, :]
    if theta0 is not None:
        dlo, dhi = post_set.lo - theta0, post_set.hi - theta0
    elif t == 1:
        dlo = dhi = 0.0
    else:
        dlo, dhi = post_set.lo - pre_set.hi, post_set.hi - pre_set.lo
    return float(K.sup_bound_grid(C, np.array([t]), np.array([[t1]]), np.array([[t2]]),
                                  np.array([dlo]), np.array([dhi]), _L_int(L),
                                  theta0 is None)[0, 0])


def sup_bound_poisson(t: int, bracket: MonotoneBracket, counts: np.ndarray, uoff: np.ndarray,
                      uvals: np.ndarray, lam: float, post_set: Interval,
                      pre_set: Interval | None = None, theta0: float | None = None,
                      L: float = POS_INF) -> float:
    """Poisson analogue of :func:`sup_bound_gaussian` on one thinning path."""
    if (pre_set is None) == (theta0 is None):
        raise ValueError("give exactly one of theta0 and pre_set")
    t2 = 0 if math.isinf(bracket.t2) else int(bracket.t2)
    t1 = 0 if math.isinf(bracket.t1) else int(bracket.t1)
    pre = pre_set if pre_set is not None else Interval(theta0, theta0)
    return float(K.poisson_sup_grid(counts[None, :], uoff[None, :], uvals[None, :], lam,
                                    np.array([t]), np.array([[t1]]), np.array([[t2]]),
                                    np.array([pre.lo]), np.array([pre.hi]),
                                    np.array([post_set.lo]), np.array([post_set.hi]),
                                    0.0 if theta0 is None else float(theta0), _L_int(L),
                                    theta0 is None)[0, 0])


# -- composite engines: confidence sets ------------------------------------------------

def _post_cs(family: str, window, coverage: float, space: Interval, scale: float) -> Interval:
    if family == "gaussian":
        return gaussian_cs(window, coverage, space=space, scale=scale)
    return poisson_cs(window, coverage, space=space)


def _pre_ci(family: str, window, coverage: float, space: Interval) -> Interval:
    if family == "gaussian":
        return gaussian_ci(window, coverage, space=space)
    # the time-uniform interval is also valid at a fixed sample size
    return poisson_cs(window, coverage, space=space)


def _horizon(cfg: AdaptiveConfig, tau: int, L: float) -> int:
    if cfg.horizon is not None:
        return int(cfg.horizon)
    H = tau + max(500, 2 * tau)
    return int(min(H, L)) if math.isfinite(L) else H


def _composite(data, tau: int, cfg: AdaptiveConfig, family: str, spec: DetectorSpec, seed: int,
               curve: SurvivalCurve, theta0: float | None, space0: Interval,
               space1: Interval, method: str) -> ConfidenceSetT:
    if family not in ("gaussian", "poisson"):
        raise ValueError("composite engines support gaussian and poisson families")
    x = np.asarray(data, dtype=float)[:tau]
    L = default_L(spec, tau) if cfg.L is None else cfg.L
    ts_all = np.arange(1, tau + 1)
    levels = _levels(cfg, curve, ts_all)
    r = np.asarray(curve.values, dtype=float)[:tau]
    m_obs = profile_stats(x, family, theta0)
    flags: list[str] = []
    pre_box = np.zeros((tau, 2))
    post_box = np.zeros((tau, 2))
    live = np.ones(tau, dtype=bool)
    empty = np.zeros(tau, dtype=bool)
    for t in ts_all:
        post = _post_cs(family, x[t - 1:], 1.0 - cfg.beta * r[t - 1], space1, cfg.cs_scale)
        if theta0 is not None:
            pre = Interval(theta0, theta0)
        elif t == 1:
            pre = space0
        else:
            pre = _pre_ci(family, x[:t - 1], 1.0 - cfg.gamma * r[t - 1], space0)
        if post.empty or pre.empty:
            live[t - 1] = False
            empty[t - 1] = True
            flags.append(f"t={t}: empty parameter set ({cfg.empty_policy})")
            continue
        if t == 1 and theta0 is None and not np.all(np.isfinite([pre.lo, pre.hi])):
            # the pre-change law never acts when t = 1
            c = cfg.theta0_star if cfg.theta0_star is not None else post.lo
            pre = Interval(c, c)
        pre_box[t - 1] = (pre.lo, pre.hi)
        post_box[t - 1] = (post.lo, post.hi)
    ts = ts_all[live]
    crit = np.full(tau, POS_INF)
    if ts.size:
        if cfg.sup_bound == "grid":
            crit[live] = _grid_critical(x, ts, pre_box[live], post_box[live], cfg, spec, seed, L,
                                        theta0, levels[live], tau)
        else:
            H = _horizon(cfg, tau, L)
            if family == "gaussian":
                eps = gaussian_noise(seed, cfg.B, H)
                batch = gaussian_batch(eps, ts, pre_box[live], post_box[live], spec, L, theta0)
            else:
                lam = float(max(pre_box[live, 1].max(), post_box[live, 1].max()))
                counts, uoff, uvals = poisson_noise(seed, cfg.B, H, lam)
                batch = poisson_batch(counts, uoff, uvals, lam, ts, pre_box[live], post_box[live],
                                      spec, L, theta0)
            crit[live] = critical_values(batch.bound, levels[live])
    if cfg.empty_policy == "reject":
        crit[empty] = NEG_INF
    ok = m_obs <= crit
    t_hat = int(np.argmin(m_obs)) + 1
    return ConfidenceSetT(ts_all[ok], tau, cfg.alpha, t_hat, method, crit, m_obs, flags)


def adaptive_set_comp_post(data, tau: int, cfg: AdaptiveConfig, theta0: float, post_family: str,
                           spec: DetectorSpec, seed: int, space1: Interval = Interval.everything(),
                           curve: SurvivalCurve | None = None) -> ConfidenceSetT:
    """Known pre-change parameter, post-change parameter in ``space1``."""
    tau = int(tau)
    pre = Gaussian(theta0) if post_family == "gaussian" else Poisson(theta0)
    curve = _curve(cfg, pre, spec, tau, seed, curve)
    return _composite(data, tau, cfg, post_family, spec, seed, curve, theta0,
                      Interval(theta0, theta0), space1, "adaptive_comp_post")


def adaptive_set_comp(data, tau: int, cfg: AdaptiveConfig, family: str, spec: DetectorSpec,
                      seed: int, space0: Interval, space1: Interval,
                      curve: SurvivalCurve | None = None) -> ConfidenceSetT:
    """Both segment parameters unknown; calibration under ``cfg.theta0_star``."""
    tau = int(tau)
    if cfg.theta0_star is None:
        raise ValueError("theta0_star must be configured for unknown pre-change parameters")
    pre = Gaussian(cfg.theta0_star) if family == "gaussian" else Poisson(cfg.theta0_star)
    curve = _curve(cfg, pre, spec, tau, seed, curve)
    return _composite(data, tau, cfg, family, spec, seed, curve, None, space0, space1,
                      "adaptive_comp")


# -- grid alternative ------------------------------------------------------------------

def grid_values(box: tuple[float, float], n: int) -> np.ndarray:
    lo, hi = box
    if n == 1 or lo == hi:
        return np.array([0.5 * (lo + hi)]) if n == 1 else np.array([lo])
    return np.linspace(lo, hi, n)


def _grid_critical(x, ts, pre_box, post_box, cfg, spec, seed, L, theta0, levels, tau) -> np.ndarray:
    a, b, logw, logA = _atoms(spec)
    if spec.param != "gaussian":
        raise UnsupportedDetector("the grid method is implemented for Gaussian paths")
    H = _horizon(cfg, tau, L)
    eps = gaussian_noise(seed, cfg.B, H)
    n0, n1 = cfg.grid_points
    out = np.empty(len(ts))
    for q, t in enumerate(ts):
        post = grid_values(post_box[q], n1)
        if theta0 is not None:
            pre = np.array([theta0])
        else:
            pre = grid_values(pre_box[q], n0)
        P, Q = np.meshgrid(pre, post, indexing="ij")
        sims = K.grid_truncated(eps, int(t), P.ravel(), Q.ravel(),
                                0.0 if theta0 is None else float(theta0), a, b, logw, logA,
                                _L_int(L), theta0 is None)
        out[q] = critical_values(sims, np.full(sims.shape[0], levels[q])).max()
    return out


def grid_threshold(data, tau: int, cfg: AdaptiveConfig, family: str, spec: DetectorSpec,
                   seed: int, theta0: float | None = None,
                   space0: Interval = Interval.everything(),
                   space1: Interval = Interval.everything(),
                   curve: SurvivalCurve | None = None) -> ConfidenceSetT:
    """Keep t when some grid point of the parameter box admits M_t."""
    gcfg = AdaptiveConfig(**{**asdict(cfg), "sup_bound": "grid"})
    tau = int(tau)
    if theta0 is not None:
        pre = Gaussian(theta0)
    else:
        if cfg.theta0_star is None:
            raise ValueError("theta0_star must be configured for unknown pre-change parameters")
        pre = Gaussian(cfg.theta0_star)
    curve = _curve(gcfg, pre, spec, tau, seed, curve)
    s0 = Interval(theta0, theta0) if theta0 is not None else space0
    return _composite(data, tau, gcfg, family, spec, seed, curve, theta0, s0, space1, "grid")


__all__ = [
    "AdaptiveConfig", "SimulatedBatch", "adaptive_set_comp", "adaptive_set_comp_post",
    "adaptive_set_known", "critical_values", "default_L", "gaussian_batch", "gaussian_noise",
    "grid_threshold", "grid_values", "known_pair_stat", "poisson_batch", "poisson_noise",
    "profile_stats", "rank_limit", "rank_quantile_accept", "simulate_known", "sup_bound_gaussian",
    "sup_bound_poisson", "truncated_statistic",
]
