"""Cumulative-logit models for ordinal sensory acceptance data.

Fixed and panellist random-intercept models with proportional or
category-specific slopes, likelihood-ratio inference, acceptance
predictions, correspondence analysis, block-design construction and a
scenario simulation study.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .dataset import (CollapseMap, CsvSchema, HedonicScale, NINE_TO_FIVE, Observation,
                      OrdinalDataset, collapse_scale, contingency_table, dummy_encode, load_csv)
from .design import BIBDLayout, BIBDParams, assign_panellists, generate_bibd, validate_bibd
from .errors import (ConfigError, ConvergenceWarning, DataError, DesignError, FitError,
                     NestingError, SensilogitError)
from .explore import CAResult, correspondence_analysis, mca_coordinates
from .inference import (TestResult, chisq_association, lrt, test_covariate,
                        test_proportionality, test_random_effect, wald_tests)
from .kernels import BACKEND
from .mixed import (ProfileCI, fit_mixed, fit_model, gauss_hermite, marginal_loglik,
                    profile_ci_sigma)
from .model import (FitOptions, FittedModel, ModelData, ModelSpec, ParamVector, Term,
                    category_probs, cumulative_probs, fit_fixed, loglik_fixed)
from .predict import (PredictionTable, acceptance_score, conditional_probs,
                      population_averaged_probs, prediction_table, rank_formulations)
from .simulate import (ConcordanceReport, ScenarioSpec, concordance_study, infer_order,
                       simulate_dataset)

__all__ = [
    "BACKEND", "BIBDLayout", "BIBDParams", "CAResult", "CollapseMap", "ConcordanceReport",
    "ConfigError", "ConvergenceWarning", "CsvSchema", "DataError", "DesignError", "FitError",
    "FitOptions", "FittedModel", "HedonicScale", "ModelData", "ModelSpec", "NINE_TO_FIVE",
    "NestingError", "Observation", "OrdinalDataset", "ParamVector", "PredictionTable",
    "ProfileCI", "ScenarioSpec", "SensilogitError", "Term", "TestResult", "acceptance_score",
    "assign_panellists", "category_probs", "chisq_association", "collapse_scale",
    "concordance_study", "conditional_probs", "contingency_table", "correspondence_analysis",
    "cumulative_probs", "dummy_encode", "fit_fixed", "fit_mixed", "fit_model", "gauss_hermite",
    "generate_bibd", "infer_order", "load_csv", "loglik_fixed", "lrt", "marginal_loglik",
    "mca_coordinates", "population_averaged_probs", "prediction_table", "profile_ci_sigma",
    "rank_formulations", "simulate_dataset", "test_covariate", "test_proportionality",
    "test_random_effect", "validate_bibd", "wald_tests",
]
