"""Extending causal inferences from a randomized trial to non-participants."""

__version__ = "0.1.0"

from .data import StudyDataset
from .design import Interaction, KnotSet, MainEffect, ModelSpec, Spline, build_design, choose_knots, rcs_basis
from .estimators import (
    ESTIMATORS,
    AnalysisConfig,
    EstimateReport,
    WeightSet,
    analyze,
    compute_weights,
    contrast,
    estimate_participation,
    estimate_treatment_prob,
    mu_dr1,
    mu_dr2,
    mu_dr3,
    mu_iow1,
    mu_iow2,
    mu_om,
    trial_only,
)
from .glm import FittedGlm, fit_linear, fit_logistic, predict
from .inference import BootstrapConfig, bootstrap

__all__ = [
    "StudyDataset", "ModelSpec", "MainEffect", "Interaction", "Spline", "KnotSet",
    "build_design", "choose_knots", "rcs_basis", "ESTIMATORS", "AnalysisConfig",
    "EstimateReport", "WeightSet", "analyze", "compute_weights", "contrast",
    "estimate_participation", "estimate_treatment_prob", "mu_om", "mu_iow1",
    "mu_iow2", "mu_dr1", "mu_dr2", "mu_dr3", "trial_only", "FittedGlm",
    "fit_linear", "fit_logistic", "predict", "BootstrapConfig", "bootstrap",
]
