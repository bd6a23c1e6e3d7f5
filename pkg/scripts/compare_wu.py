"""Our adaptive set against the reflected-CUSUM set of Wu (2007).

N(-0.25, 1) -> N(0.25, 1) at T = 100, threshold d = 8.59, 200 runs.
"""

from cploc.harness import ExperimentConfig, run_experiment

res = run_experiment(ExperimentConfig("wu_compare", T=100, A=8.59, runs=200, seed=10))
for m, s in res.summaries.items():
    print(f"{m:9s} conditional coverage {s.conditional_coverage:.3f}  marginal {s.marginal_coverage:.3f}"
          f"  size {s.mean_size:.2f}")
