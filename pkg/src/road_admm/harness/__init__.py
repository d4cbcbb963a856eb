"""Experiment configuration, synthetic data, runners and the command-line interface."""

from .config import ExperimentConfig
from .data import RegressionInstance, SvmInstance, synth_regression, synth_svm
from .experiment import ExperimentResult, build_instance, run_experiment

__all__ = ["ExperimentConfig", "ExperimentResult", "RegressionInstance", "SvmInstance", "build_instance",
           "run_experiment", "synth_regression", "synth_svm"]
