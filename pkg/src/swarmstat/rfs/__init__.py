"""Labeled random finite set tracking: mixtures, set densities and the GLMB filter."""

from .densities import bernoulli_density, glmb_density, lmb_hypothesis_weight, multi_bernoulli_density
from .gaussian import Gaussian, GaussianMixture, gm_eval, kalman_predict, kalman_update
from .glmb import (
    BernoulliTrack,
    BirthModel,
    GlmbDensity,
    GlmbFilter,
    GlmbHypothesis,
    Label,
    cv_model,
    extract_states,
    glmb_predict,
    glmb_update,
    merge_hypotheses,
    prune_hypotheses,
)
from .sensors import CLUTTER, MeasurementScan, generate_clutter, generate_measurements

__all__ = [
    "BernoulliTrack", "BirthModel", "CLUTTER", "Gaussian", "GaussianMixture", "GlmbDensity", "GlmbFilter",
    "GlmbHypothesis", "Label", "MeasurementScan", "bernoulli_density", "cv_model", "extract_states",
    "generate_clutter", "generate_measurements", "glmb_density", "glmb_predict", "glmb_update", "gm_eval",
    "kalman_predict", "kalman_update", "lmb_hypothesis_weight", "merge_hypotheses", "multi_bernoulli_density",
    "prune_hypotheses",
]
