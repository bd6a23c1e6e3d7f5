"""Monte Carlo estimates r_t of the no-change survival probability P(tau >= t)."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from ._seeding import derive
from .detectors import DetectorSpec, stop_times
from .models import Distribution

KINDS = ("asymptotic", "plain", "negative_binomial")


@dataclass(frozen=True)
class SurvivalCurve:
    """r_t for t = 1..len(values); ``values[t - 1]`` is r_t."""

    values: np.ndarray
    kind: str
    N: int | np.ndarray
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.values)

    def r(self, t: int) -> float:
        if t < 1:
            raise ValueError("t starts at 1")
        if t > len(self.values):
            raise IndexError(f"curve covers t <= {len(self.values)}, asked for {t}")
        return float(self.values[t - 1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,r_t\n")
        for t, v in enumerate(self.values, start=1):
            buf.write(f"{t},{v:.17g}\n")
        return buf.getvalue()


def unit_curve(tau: int) -> SurvivalCurve:
    """r_t = 1, the calibration used with detectors that control PFA."""
    return SurvivalCurve(np.ones(int(tau)), "unit", 0)


def simulate_stop_times(pre_model: Distribution, spec: DetectorSpec, cap: int, N: int,
                        rng: np.random.Generator, chunk: int = 2048) -> np.ndarray:
    """N detector runs on no-change data, each cut at ``cap``.

    Returns stop times with censored runs reported as ``cap + 1`` (they
    survive through every t <= cap).
    """
    out = np.empty(N, dtype=np.int64)
    width = max(1, int(cap))
    # long horizons are simulated in column blocks to bound memory
    rows_per_block = max(1, min(N, (1 << 22) // width))
    done = 0
    while done < N:
        m = min(rows_per_block, N - done)
        X = pre_model.sample(rng, (m, width))
        st = stop_times(spec, X)
        out[done:done + m] = np.where(st == 0, width + 1, st)
        done += m
    return out


def estimate_survival(pre_model: Distribution, spec: DetectorSpec, tau_cap: int, N: int = 100,
                      kind: str = "asymptotic", seed: int = 0, r: int = 2,
                      max_runs: int = 1_000_000) -> SurvivalCurve:
    """Estimate r_t for t = 1..tau_cap.

    plain: mean of 1(tau_j >= t); asymptotic: (1 + sum)/(N + 1);
    negative_binomial: runs are drawn until r of them survive to t, and
    r_t = (r - 1)/(N_t - 1).
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    if N < 1 or tau_cap < 1:
        raise ValueError("N and tau_cap must be positive")
    cap = int(tau_cap)
    if kind in ("plain", "asymptotic"):
        taus = simulate_stop_times(pre_model, spec, cap, N, derive(seed, "survival", 0))
        return curve_from_stop_times(taus, cap, kind, seed=seed)
    if r < 2:
        raise ValueError("negative binomial estimator needs r >= 2")
    taus = np.zeros(0, dtype=np.int64)
    block = max(N, 16)
    k = 0
    while np.count_nonzero(taus >= cap) < r:
        if len(taus) >= max_runs:
            raise RuntimeError(f"fewer than {r} of {len(taus)} runs survived to t={cap}")
        fresh = simulate_stop_times(pre_model, spec, cap, block, derive(seed, "survival", k))
        taus = np.concatenate([taus, fresh])
        k += 1
        block = min(2 * block, max_runs)
    return curve_from_stop_times(taus, cap, kind, r, seed)


def curve_from_stop_times(taus, tau_cap: int, kind: str = "asymptotic", r: int = 2,
                          seed: int | None = None) -> SurvivalCurve:
    """r_t for t = 1..tau_cap from simulated stop times in simulation order.

    Censored runs must be reported as a value above ``tau_cap``.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    taus = np.asarray(taus, dtype=np.int64)
    t = np.arange(1, int(tau_cap) + 1)
    alive = taus[None, :] >= t[:, None]
    if kind in ("plain", "asymptotic"):
        N = len(taus)
        surv = alive.sum(axis=1)
        vals = surv / N if kind == "plain" else (1.0 + surv) / (N + 1.0)
        return SurvivalCurve(vals.astype(float), kind, N, seed)
    # N_t = index (1-based) of the r-th run with tau_j >= t
    running = np.cumsum(alive, axis=1)
    if np.any(running[:, -1] < r):
        raise ValueError(f"fewer than {r} runs survive to t={tau_cap}")
    Nt = np.argmax(running >= r, axis=1) + 1
    return SurvivalCurve((r - 1.0) / (Nt - 1.0), kind, Nt, seed)
