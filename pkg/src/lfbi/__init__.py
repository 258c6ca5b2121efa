"""Likelihood-free Bayesian inference toolkit.

Sequential neural posterior estimation with calibration-kernel weighting,
defensive proposals, pooled-sample recycling, and bounded-support parameter
transforms; benchmark simulators, evaluation metrics, an SMC-ABC reference
baseline, and an experiment harness.
"""

from .simulators import ModelSpec, PriorSpec, get_model, model_names
from .snpe import TrainConfig, SnpeState, train, sample_posterior
from .metrics import mmd, c2st, lmd, nlog, MetricRecord
from .smcabc import smc_abc, reference_posterior
from .harness import ExperimentConfig, run_experiment, variance_check

__version__ = "0.1.0"

__all__ = [
    "ModelSpec", "PriorSpec", "get_model", "model_names",
    "TrainConfig", "SnpeState", "train", "sample_posterior",
    "mmd", "c2st", "lmd", "nlog", "MetricRecord",
    "smc_abc", "reference_posterior",
    "ExperimentConfig", "run_experiment", "variance_check",
    "__version__",
]
