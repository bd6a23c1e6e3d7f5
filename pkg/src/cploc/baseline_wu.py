"""The asymptotic confidence set of Wu (2007) for a reflected CUSUM, and the
bias-corrected interval for the post-change mean. Used only as a baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .confseq import Interval, normal_quantile
from .localize_universal import ConfidenceSetT


class InapplicableError(ValueError):
    """The asymptotic variance term is undefined for this path."""


@dataclass(frozen=True)
class ReflectedPath:
    """T_0 = 0, T_n = max(0, T_{n-1} + x_n), run until T_n >= d.

    ``values[n]`` is T_n for n = 0..tau_prime (or to the end of the data).
    """

    values: np.ndarray
    tau_prime: int | None
    nu_hat: int
    zero_indices: np.ndarray
    d: float

    @property
    def stopped(self) -> bool:
        return self.tau_prime is not None


def reflected_cusum(data, d: float) -> ReflectedPath:
    if not d > 0:
        raise ValueError("d must be positive")
    x = np.asarray(data, dtype=float)
    T = np.zeros(len(x) + 1)
    stop = None
    for n in range(1, len(x) + 1):
        T[n] = max(0.0, T[n - 1] + x[n - 1])
        if T[n] >= d:
            stop = n
            break
    end = stop if stop is not None else len(x)
    T = T[:end + 1]
    zeros = np.flatnonzero(T == 0.0)
    before = zeros[zeros < end]
    nu = int(before[-1]) if before.size else 0
    return ReflectedPath(T, stop, nu, zeros, float(d))


def wu_constants(alpha: float, theta1: float) -> tuple[float, float]:
    """(s, c) from the symmetric-case approximations."""
    if theta1 <= 0:
        raise ValueError("theta1 must be positive")
    s = math.log(alpha) * (1.0 / (math.sqrt(2.0) * theta1) + 0.088)
    c = -math.log(1.0 - math.sqrt(1.0 - alpha)) / (2.0 * theta1) - 0.583
    return s, c


def wu_set(path: ReflectedPath, alpha: float, theta1: float) -> ConfidenceSetT:
    """V_c union [L_s, nu_hat) with L_s the ceil(|s|)-th last zero before nu_hat.

    The set is built on reflected-path indices k, where k is the last
    pre-change index. It is reported as changepoint candidates k + 1, the
    first post-change index, so it can be compared with T directly.
    """
    if not path.stopped:
        raise ValueError("the reflected CUSUM did not stop on this data")
    s, c = wu_constants(alpha, theta1)
    tau, nu = path.tau_prime, path.nu_hat
    T = path.values
    ks = np.arange(nu, tau + 1)
    vc = ks[T[nu:tau + 1] <= c]
    zeros = path.zero_indices[path.zero_indices <= nu]  # L_0 = nu, L_1, ... backwards
    back = int(math.ceil(abs(s)))
    flags = []
    if back < zeros.size:
        ls = int(zeros[zeros.size - 1 - back])
    else:
        ls = 0
        flags.append(f"fewer than {back} zeros before nu_hat; L_s clamped to 0")
    members = np.union1d(vc, np.arange(ls, nu)) + 1
    return ConfidenceSetT(members, tau, alpha, nu + 1, "wu", None, None, flags)


def wu_theta1_ci(path: ReflectedPath, d: float, alpha_prime: float) -> Interval:
    """theta_hat - 4/(5 sqrt(d theta_hat m)) +- z sqrt(1 - 13/(16 d theta_hat)) / sqrt(m),
    with m = tau - nu_hat and theta_hat = T_tau / m."""
    if not path.stopped:
        raise ValueError("the reflected CUSUM did not stop on this data")
    m = path.tau_prime - path.nu_hat
    if m <= 0:
        raise InapplicableError("tau must exceed nu_hat")
    th = path.values[path.tau_prime] / m
    if d * th <= 13.0 / 16.0:
        raise InapplicableError("d * theta_hat <= 13/16 makes the variance term negative")
    center = th - 4.0 / (5.0 * math.sqrt(d * th * m))
    half = float(normal_quantile(1.0 - alpha_prime / 2.0)) * math.sqrt(1.0 - 13.0 / (16.0 * d * th)) / math.sqrt(m)
    return Interval(center - half, center + half)


__all__ = ["InapplicableError", "ReflectedPath", "reflected_cusum", "wu_constants", "wu_set",
           "wu_theta1_ci"]
