"""Reference fit for a 13-formulation prebiotic beverage panel.

Coefficients of a mixed non-proportional unified model
(5-point scale, 5 attributes, panellist random intercept with
``sigma_u = 1.89``), packaged as a :class:`FittedModel` so the prediction
and ranking code can be exercised without the raw panel data.

Cutpoint and slope rows are stored in internal order ``j = 1..4``
(``logit P(Y <= j)``).  Tables that label rows ``2..5`` (by the upper
category of each split) list row ``k`` of this module as row ``k + 1``.
"""
from __future__ import annotations

import numpy as np

from .model import Convergence, FittedModel, ModelSpec, ParamVector, Term

FORMULATIONS = tuple(f"F{i}" for i in range(1, 14))
# aroma is the reference level and therefore listed last
ATTRIBUTES = ("body", "flavour", "sweetness", "overall impression", "aroma")
SIGMA_U = 1.89
N_PANELLISTS = 130
BLOCK_SIZE = 4

ALPHA = np.array([-1.92, 0.04, 2.02, 4.29])
ALPHA_SE = np.array([0.31, 0.27, 0.27, 0.38])

# rows j = 1..4, columns F2..F13
BETA = np.array([
    [-1.36, -0.61, -1.22, -0.50, -1.78, -0.21, -1.75, -1.60, -2.28, -1.93, -3.28, -2.31],
    [-0.84, -0.75, -1.84, -0.92, -1.96, 0.03, -1.58, -1.45, -1.16, -1.65, -1.80, -2.00],
    [-1.08, -1.05, -1.94, -0.99, -2.25, 0.24, -1.84, -1.65, -1.26, -1.75, -1.88, -2.09],
    [-0.97, -0.94, -1.66, -0.87, -2.44, -0.61, -1.23, -1.27, -0.87, -1.17, -0.91, -1.91],
])
BETA_SE = np.array([
    [0.34, 0.35, 0.32, 0.31, 0.34, 0.30, 0.35, 0.36, 0.45, 0.42, 0.71, 0.42],
    [0.25, 0.27, 0.27, 0.27, 0.27, 0.26, 0.27, 0.27, 0.27, 0.29, 0.31, 0.29],
    [0.26, 0.27, 0.27, 0.27, 0.27, 0.28, 0.27, 0.27, 0.26, 0.27, 0.29, 0.27],
    [0.37, 0.37, 0.39, 0.40, 0.38, 0.44, 0.40, 0.38, 0.39, 0.38, 0.42, 0.37],
])

# rows j = 1..4, columns body, flavour, sweetness, overall impression
DELTA = np.array([
    [-0.05, -0.12, 0.15, 0.81],
    [-0.26, -0.41, -0.42, 0.23],
    [0.81, -0.38, -0.52, -0.03],
    [0.35, -0.72, -0.84, -0.19],
])
DELTA_SE = np.array([
    [0.23, 0.23, 0.23, 0.21],
    [0.16, 0.16, 0.16, 0.16],
    [0.16, 0.15, 0.16, 0.15],
    [0.22, 0.20, 0.20, 0.21],
])

# Tabulated population-level P(Y >= 4) per attribute, F1..F13.
REPORTED_ACCEPTANCE = {
    "aroma": (0.23, 0.47, 0.46, 0.67, 0.44, 0.74, 0.19, 0.65, 0.61, 0.51, 0.63, 0.67, 0.71),
    "body": (0.11, 0.28, 0.27, 0.48, 0.26, 0.56, 0.09, 0.46, 0.41, 0.32, 0.43, 0.46, 0.52),
    "sweetness": (0.33, 0.60, 0.59, 0.78, 0.58, 0.83, 0.29, 0.76, 0.73, 0.64, 0.75, 0.77, 0.80),
    "flavour": (0.31, 0.57, 0.55, 0.75, 0.54, 0.80, 0.26, 0.73, 0.69, 0.61, 0.71, 0.74, 0.78),
    "overall impression": (0.23, 0.48, 0.47, 0.68, 0.45, 0.74, 0.19, 0.66, 0.62, 0.52, 0.64,
                           0.67, 0.72),
}

REPORTED_TOP3 = frozenset({"F4", "F6", "F13"})
REPORTED_WORST = "F7"


def reference_spec() -> ModelSpec:
    return ModelSpec(5, (Term("formulation", 13, False), Term("attribute", 5, False)),
                     random_intercept=True)


def reference_fit(sigma_u: float = SIGMA_U) -> FittedModel:
    """The reference coefficients as a fitted model.

    The covariance is diagonal (only standard errors are available) and
    the log-likelihood is unknown (NaN).
    """
    spec = reference_spec()
    params = ParamVector(spec, ALPHA.copy(), (BETA.copy(), DELTA.copy()), float(np.log(sigma_u)))
    se = np.concatenate([ALPHA_SE, BETA_SE.ravel(), DELTA_SE.ravel(), [np.nan]])
    vcov = np.diag(se ** 2)
    vcov[-1, -1] = np.nan
    levels = {"formulation": FORMULATIONS, "attribute": ATTRIBUTES}
    refs = {"formulation": "F1", "attribute": "aroma"}
    columns = {"formulation": FORMULATIONS[1:], "attribute": ATTRIBUTES[:-1]}
    return FittedModel(spec, params, float("nan"), vcov,
                       n_obs=N_PANELLISTS * BLOCK_SIZE * len(ATTRIBUTES),
                       convergence=Convergence(0, 0.0, "converged", 0, "reference values"),
                       data_fingerprint="reference", levels=levels, references=refs,
                       columns=columns, vcov_ok=False, quad_order=None)
