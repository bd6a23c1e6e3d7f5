"""Expected conditional size bound for the Gaussian 0 -> 1 pair.

The bound needs the hardness profile rho(s), P(tau >= T) under no change and
the mean detection delay; the last two are simulated.
"""

from cploc.bounds import estimate_delay, hardness_profile, length_bound
from cploc.detectors import cusum_lr
from cploc.models import Gaussian
from cploc.survival import estimate_survival

pre, post, T = Gaussian(0.0), Gaussian(1.0), 100
spec = cusum_lr(pre, post, 1000.0)
prof = hardness_profile(pre, post)
p_T = estimate_survival(pre, spec, T, N=2000, kind="plain").r(T)
delay = estimate_delay(pre, post, spec, T, runs=500)
print(f"s0 = {prof.s0:.4f}, rho0(s0) = {prof.rho0_min:.4f}, P(tau >= T) = {p_T:.3f}, delay = {delay:.2f}")
for mode in ("plain", "sensitive"):
    b = length_bound(prof, 0.05, p_T, T, delay, mode)
    print(f"{mode:9s} pre {b.term_pre:.2f} + 1 + post {b.term_post:.2f} = {b.total:.2f}")
