"""Likelihood-ratio, Wald and chi-square association tests."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaincc

from .errors import DataError, FitError, NestingError
from .model import FittedModel, ModelSpec

CLAMP_TOL = 1e-6


def chi2_sf(x: float, df: float) -> float:
    """Upper tail of the chi-square distribution."""
    if df <= 0:
        return 1.0 if x <= 0 else 0.0
    if x <= 0:
        return 1.0
    return float(gammaincc(0.5 * df, 0.5 * x))


def norm_sf2(z: float) -> float:
    """Two-sided standard normal tail probability P(|Z| >= |z|)."""
    return math.erfc(abs(z) / math.sqrt(2.0))


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: int | str
    p_value: float
    null_desc: str = ""
    alt_desc: str = ""
    name: str = ""

    __test__ = False  # keep pytest from collecting this class

    def to_json(self) -> dict:
        return {"name": self.name, "statistic": self.statistic, "df": self.df,
                "p_value": self.p_value, "p_display": format_p(self.p_value),
                "null": self.null_desc, "alternative": self.alt_desc}


def format_p(p: float) -> str:
    """Display a p-value the way sensory reports usually do."""
    if p < 0.001:
        return "< 0.001"
    if p < 0.01:
        return "< 0.01"
    return f"{p:.3f}"


def describe(spec: ModelSpec) -> str:
    parts = [f"{t.name}({'PO' if t.proportional else 'NPO'})" for t in spec.terms]
    if spec.random_intercept:
        parts.append("u_panellist")
    return " + ".join(parts) if parts else "cutpoints only"


def lrt(fit_null: FittedModel, fit_alt: FittedModel, *, boundary: bool = False,
        name: str = "") -> TestResult:
    """Likelihood-ratio test of ``fit_null`` against the larger ``fit_alt``.

    With ``boundary`` (a variance on the edge of its space under the null)
    the reference distribution is the equal mixture of chi-square(df-1) and
    chi-square(df); for a single random intercept that is 0.5 chi2_0 + 0.5 chi2_1.
    """
    if fit_null.data_fingerprint != fit_alt.data_fingerprint:
        raise NestingError("fits were made on different data")
    if not fit_null.spec.nested_in(fit_alt.spec):
        raise NestingError(f"{describe(fit_null.spec)} is not nested in {describe(fit_alt.spec)}")
    df = fit_alt.n_params - fit_null.n_params
    if df < 0 or (df == 0 and fit_null.spec != fit_alt.spec):
        raise NestingError("alternative must have more free parameters than the null")
    stat = -2.0 * (fit_null.loglik - fit_alt.loglik)
    if stat < -CLAMP_TOL:
        raise FitError(f"negative likelihood-ratio statistic {stat:.3g}; "
                       "the larger model was not fitted to its maximum")
    stat = max(stat, 0.0)
    if boundary:
        p = 0.5 * chi2_sf(stat, df - 1) + 0.5 * chi2_sf(stat, df)
        df_out: int | str = f"0.5*chi2_{df - 1} + 0.5*chi2_{df}"
    else:
        p = chi2_sf(stat, df)
        df_out = df
    return TestResult(stat, df_out, min(1.0, p), describe(fit_null.spec),
                      describe(fit_alt.spec), name)


def _default_fitter() -> Callable:
    from .mixed import fit_model
    return fit_model


def _fit(fitter, spec, data, which):
    try:
        return fitter(spec, data)
    except FitError as exc:
        raise FitError(f"{which} fit failed: {exc}") from exc


def test_proportionality(data, base_spec: ModelSpec, fitter: Callable | None = None,
                         return_fits: bool = False):
    """LRT of common slopes (null) against category-specific slopes."""
    if base_spec.J < 3:
        raise ValueError("proportionality vacuous for binary response")
    fitter = fitter or _default_fitter()
    null = _fit(fitter, base_spec.with_odds(True), data, "proportional (null)")
    alt = _fit(fitter, base_spec.with_odds(False), data, "non-proportional (alternative)")
    res = lrt(null, alt, name="proportional odds")
    return (res, null, alt) if return_fits else res


test_proportionality.__test__ = False


def test_covariate(data, spec: ModelSpec, term: str, fitter: Callable | None = None,
                   fit_full: FittedModel | None = None) -> TestResult:
    """LRT for dropping ``term`` from ``spec``."""
    spec.term(term)
    fitter = fitter or _default_fitter()
    alt = fit_full if fit_full is not None else _fit(fitter, spec, data, "full")
    null = _fit(fitter, spec.without(term), data, f"model without {term}")
    return lrt(null, alt, name=f"{term} effect")


test_covariate.__test__ = False


def test_random_effect(data, spec: ModelSpec, fitter: Callable | None = None,
                       fit_mixed: FittedModel | None = None) -> TestResult:
    """Boundary LRT for the panellist random intercept."""
    fitter = fitter or _default_fitter()
    alt = fit_mixed if fit_mixed is not None else _fit(
        fitter, spec.with_random_intercept(True), data, "mixed")
    null = _fit(fitter, spec.with_random_intercept(False), data, "fixed-effect")
    return lrt(null, alt, boundary=True, name="panellist random intercept")


test_random_effect.__test__ = False


@dataclass(frozen=True)
class WaldRow:
    label: str
    estimate: float
    se: float
    z: float
    p_value: float

    def to_json(self) -> dict:
        return {"label": self.label, "estimate": self.estimate, "se": self.se,
                "z": self.z, "p_value": self.p_value, "p_display": format_p(self.p_value)}


def wald_tests(fit: FittedModel) -> list[WaldRow]:
    """Per-parameter z tests from the observed information.

    Parameters held fixed during the fit (NaN rows of ``vcov``) are skipped.
    """
    V = np.asarray(fit.vcov, dtype=float)
    keep = np.flatnonzero(np.isfinite(np.diag(V)))
    if not len(keep):
        raise FitError("no covariance matrix available")
    sub = V[np.ix_(keep, keep)]
    if not np.all(np.isfinite(sub)):
        raise FitError("covariance matrix has non-finite entries")
    eig = np.linalg.eigvalsh(0.5 * (sub + sub.T))
    if eig[0] <= 0:
        raise FitError(f"covariance matrix not positive definite (smallest eigenvalue {eig[0]:.3g})")
    est = fit.estimates
    labels = fit.labels
    out = []
    for i in keep:
        se = math.sqrt(V[i, i])
        z = est[i] / se
        out.append(WaldRow(labels[i], float(est[i]), se, float(z), norm_sf2(z)))
    return out


def wald_from(estimate: float, se: float, label: str = "") -> WaldRow:
    if not se > 0:
        raise ValueError("standard error must be positive")
    z = estimate / se
    return WaldRow(label, float(estimate), float(se), float(z), norm_sf2(z))


def chisq_association(table) -> TestResult:
    """Pearson chi-square test of independence for a count table."""
    O = np.asarray(table)
    if O.ndim != 2:
        raise DataError("contingency table must be two-dimensional")
    if np.any(O < 0) or not np.allclose(O, np.round(O)):
        raise DataError("contingency table needs non-negative integer counts")
    O = O.astype(float)
    rows, cols = O.sum(1), O.sum(0)
    for kind, margin in (("row", rows), ("column", cols)):
        zero = np.flatnonzero(margin == 0)
        if len(zero):
            raise DataError(f"zero {kind} margin at {kind} {int(zero[0]) + 1}")
    E = np.outer(rows, cols) / O.sum()
    stat = float(np.sum((O - E) ** 2 / E))
    df = (O.shape[0] - 1) * (O.shape[1] - 1)
    if stat < 1e-12 * O.sum():
        stat = 0.0
    return TestResult(stat, df, chi2_sf(stat, df), "independence", "association",
                      "chi-square association")
