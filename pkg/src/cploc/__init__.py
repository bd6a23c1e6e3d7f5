"""Confidence sets for the changepoint after a sequential detector raises an alarm."""

from .confseq import Interval
from .detectors import DetectorSpec, cusum_lr, stop_time, stop_times, weighted_cusum
from .harness import ExperimentConfig, run_experiment
from .localize_adaptive import (AdaptiveConfig, adaptive_set_comp, adaptive_set_comp_post,
                                adaptive_set_known)
from .localize_universal import ConfidenceSetT, known_pair_recipe, universal_set
from .models import Bernoulli, Gaussian, Poisson, sample_path
from .survival import SurvivalCurve, estimate_survival

__version__ = "0.1.0"

__all__ = [
    "AdaptiveConfig", "Bernoulli", "ConfidenceSetT", "DetectorSpec", "ExperimentConfig",
    "Gaussian", "Interval", "Poisson", "SurvivalCurve", "adaptive_set_comp",
    "adaptive_set_comp_post", "adaptive_set_known", "cusum_lr", "estimate_survival",
    "known_pair_recipe", "run_experiment", "sample_path", "stop_time", "stop_times",
    "universal_set", "weighted_cusum",
]
