"""Detect a mean shift on one simulated path and localize it two ways.

The path is N(0, 1) before T = 100 and N(1, 1) after. A CUSUM with
threshold 1000 raises the alarm; we then build the universal set and the
simulation-calibrated (adaptive) set for the changepoint.
"""

from cploc.detectors import cusum_lr, stop_time
from cploc.localize_adaptive import AdaptiveConfig, adaptive_set_known
from cploc.localize_universal import known_pair_recipe, universal_set
from cploc.models import Gaussian, sample_path
from cploc.survival import estimate_survival

pre, post, T, seed = Gaussian(0.0), Gaussian(1.0), 100, 3
x = sample_path(pre, post, T, 1000, seed).values
spec = cusum_lr(pre, post, 1000.0)
tau = stop_time(spec, x)
print(f"alarm at tau = {tau} (change at T = {T})")

# P(tau >= t) under no change sets the per-t level alpha * r_t
curve = estimate_survival(pre, spec, tau, N=100, seed=seed)

uni = universal_set(x, tau, 0.05, curve, known_pair_recipe(pre, post))
print(f"universal: T_hat = {uni.t_hat}, size {uni.size}, "
      f"range [{uni.members.min()}, {uni.members.max()}], covers T: {T in uni}")

ada = adaptive_set_known(x, tau, AdaptiveConfig(alpha=0.05, N=100, B=100), pre, post, spec,
                         seed, curve=curve)
print(f"adaptive:  size {ada.size}, range [{ada.members.min()}, {ada.members.max()}], "
      f"covers T: {T in ada}")
