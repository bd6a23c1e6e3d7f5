"""Desk-scale Monte Carlo for the Gaussian 0 -> 1 setting.

Runs 200 replications and prints conditional coverage and mean conditional
size for both methods, next to the 500-run target values.
Set CPL_THREADS to run replications in parallel.
"""

from cploc.harness import ExperimentConfig, run_experiment

res = run_experiment(ExperimentConfig("I", T=100, A=1000.0, runs=200, seed=1))
target = {"universal": (0.98, 15.63), "adaptive": (0.95, 12.34)}
for m, s in res.summaries.items():
    cov, size = target[m]
    print(f"{m:10s} coverage {s.conditional_coverage:.3f} (+/- {s.conditional_se:.3f}, target {cov})"
          f"  size {s.mean_size:.2f} (target {size})  |T_hat - T| {s.mean_abs_error:.2f}")
