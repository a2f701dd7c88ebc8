"""Category probabilities, acceptance scores and formulation rankings.

Two kinds of prediction are offered for random-intercept fits:

``conditional``
    probabilities for a typical panellist (``u = 0``);
``population``
    probabilities averaged over the panellist distribution,
    ``int pi_j(u) phi(u; 0, sigma_u^2) du``.

Population averages are pulled towards the middle of the scale relative to
the ``u = 0`` values, so the two should not be mixed when comparing fits.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import OrdinalDataset, resolve_level
from .errors import DataError
from .model import FittedModel, category_probs

AVERAGING = ("population", "conditional")
DEFAULT_THRESHOLD = 4
DEFAULT_QUAD_ORDER = 41
TIE_TOL = 1e-10


def _levels(fit: FittedModel, term: str) -> tuple[str, ...]:
    if term in fit.levels:
        return tuple(fit.levels[term])
    return tuple(str(i) for i in range(1, fit.spec.term(term).n_levels + 1))


def _indicator(fit: FittedModel, term: str, level) -> np.ndarray:
    levels = _levels(fit, term)
    label = levels[resolve_level(levels, level, term) - 1]
    cols = tuple(fit.columns.get(term, levels[1:]))
    x = np.zeros(len(cols))
    if label in cols:
        x[cols.index(label)] = 1.0
    return x


def design_row(fit: FittedModel, F, A=None) -> dict[str, np.ndarray]:
    """Per-term indicator vectors for formulation ``F`` and attribute ``A``.

    Levels are registered names or 1-based indices.  ``A`` is ignored by a
    model without an attribute term and defaults to the reference otherwise.
    """
    row = {}
    for t in fit.spec.terms:
        if t.name == "formulation":
            row[t.name] = _indicator(fit, t.name, F)
        elif t.name == "attribute":
            ref = fit.references.get("attribute", _levels(fit, "attribute")[0])
            row[t.name] = _indicator(fit, t.name, ref if A is None else A)
    return row


def conditional_probs(fit: FittedModel, F, A=None, u: float = 0.0) -> np.ndarray:
    """Category probabilities ``pi_1..pi_J`` at random-intercept value ``u``."""
    return category_probs(fit.params, design_row(fit, F, A), u).probs


def population_averaged_probs(fit: FittedModel, F, A=None,
                              quad_order: int = DEFAULT_QUAD_ORDER) -> np.ndarray:
    """Category probabilities averaged over ``u ~ N(0, sigma_u^2)``.

    Uses a plain (non-adaptive) Gauss-Hermite rule; the integrand is smooth
    and bounded so modest orders suffice.  A fixed-effect fit returns the
    conditional probabilities.
    """
    row = design_row(fit, F, A)
    sigma = fit.sigma_u
    if sigma == 0.0:
        return category_probs(fit.params, row, 0.0).probs
    t, w = np.polynomial.hermite.hermgauss(quad_order)
    w = w / np.sqrt(np.pi)
    probs = np.array([category_probs(fit.params, row, np.sqrt(2.0) * sigma * tq).probs
                      for tq in t])
    return w @ probs


@dataclass(frozen=True, eq=False)
class PredictionTable:
    formulations: tuple[str, ...]
    attributes: tuple[str, ...]
    probs: np.ndarray  # (T, L, J)
    averaging: str
    threshold: int = DEFAULT_THRESHOLD

    @property
    def J(self) -> int:
        return self.probs.shape[2]

    @property
    def acceptance(self) -> np.ndarray:
        """(T, L) matrix of P(Y >= threshold)."""
        return self.probs[:, :, self.threshold - 1:].sum(axis=2)

    @property
    def attribute_mean(self) -> np.ndarray:
        return self.acceptance.mean(axis=1)

    def to_rows(self) -> list[list]:
        """Attribute blocks of category rows, one column per formulation."""
        rows = [["attribute", "category"] + list(self.formulations)]
        acc = self.acceptance
        for a, attr in enumerate(self.attributes):
            for j in range(self.J):
                rows.append([attr, str(j + 1)] + [f"{p:.6f}" for p in self.probs[:, a, j]])
            rows.append([attr, f">={self.threshold}"] + [f"{p:.6f}" for p in acc[:, a]])
        return rows

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.to_rows())

    def to_json(self) -> dict:
        return {
            "averaging": self.averaging, "threshold": self.threshold,
            "formulations": list(self.formulations), "attributes": list(self.attributes),
            "probabilities": {f: {a: [float(p) for p in self.probs[i, k]]
                                  for k, a in enumerate(self.attributes)}
                              for i, f in enumerate(self.formulations)},
            "acceptance": {f: {a: float(self.acceptance[i, k])
                               for k, a in enumerate(self.attributes)}
                           for i, f in enumerate(self.formulations)},
            "attribute_mean": {f: float(v) for f, v in zip(self.formulations, self.attribute_mean)},
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")


def _check(averaging: str, threshold: int, J: int) -> None:
    if averaging not in AVERAGING:
        raise ValueError(f"averaging must be one of {AVERAGING}, got {averaging!r}")
    if not 2 <= threshold <= J:
        raise ValueError(f"threshold must lie in 2..{J}, got {threshold}")


def prediction_table(fit: FittedModel, averaging: str = "population",
                     threshold: int = DEFAULT_THRESHOLD,
                     quad_order: int = DEFAULT_QUAD_ORDER) -> PredictionTable:
    """Probabilities for every (formulation, attribute) pair of the fit."""
    _check(averaging, threshold, fit.spec.J)
    forms = _levels(fit, "formulation")
    attrs = _levels(fit, "attribute") if fit.spec.has("attribute") else ("all",)
    out = np.empty((len(forms), len(attrs), fit.spec.J))
    for i, f in enumerate(forms):
        for k, a in enumerate(attrs):
            A = a if fit.spec.has("attribute") else None
            if averaging == "population":
                out[i, k] = population_averaged_probs(fit, f, A, quad_order)
            else:
                out[i, k] = conditional_probs(fit, f, A)
    return PredictionTable(forms, attrs, out, averaging, threshold)


@dataclass(frozen=True, eq=False)
class AcceptanceScores:
    formulations: tuple[str, ...]
    attributes: tuple[str, ...]
    scores: np.ndarray  # (T, L)
    mean: np.ndarray  # (T,)
    threshold: int
    averaging: str


def acceptance_score(fit: FittedModel, threshold: int = DEFAULT_THRESHOLD,
                     averaging: str = "population",
                     quad_order: int = DEFAULT_QUAD_ORDER) -> AcceptanceScores:
    """P(Y >= threshold) per (formulation, attribute) and its unweighted
    mean over attributes."""
    tab = prediction_table(fit, averaging, threshold, quad_order)
    return AcceptanceScores(tab.formulations, tab.attributes, tab.acceptance,
                            tab.attribute_mean, threshold, averaging)


@dataclass(frozen=True)
class RankEntry:
    rank: int
    formulation: str
    score: float
    tied: bool


def rank_scores(labels, scores, tol: float = TIE_TOL) -> list[RankEntry]:
    """Descending order of ``scores``; equal scores keep input order and are
    flagged as tied."""
    scores = np.asarray(scores, dtype=float)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    tied = [False] * len(order)
    for a, b in zip(range(len(order)), range(1, len(order))):
        if abs(scores[order[a]] - scores[order[b]]) <= tol * max(1.0, abs(scores[order[a]])):
            tied[a] = tied[b] = True
    return [RankEntry(r + 1, str(labels[i]), float(scores[i]), tied[r])
            for r, i in enumerate(order)]


def rank_formulations(fit: FittedModel, threshold: int = DEFAULT_THRESHOLD,
                      averaging: str = "population",
                      quad_order: int = DEFAULT_QUAD_ORDER) -> list[RankEntry]:
    """Formulations from most to least accepted by attribute-mean score.

    Ties are broken by formulation registration order and flagged.
    """
    sc = acceptance_score(fit, threshold, averaging, quad_order)
    return rank_scores(sc.formulations, sc.mean)


def observed_vs_predicted(fit: FittedModel, ds: OrdinalDataset, averaging: str = "population",
                          quad_order: int = DEFAULT_QUAD_ORDER) -> list[dict]:
    """Empirical category proportions beside model probabilities, per
    (formulation, attribute) cell that has observations."""
    if ds.J != fit.spec.J:
        raise DataError(f"dimension mismatch: data J={ds.J}, model J={fit.spec.J}")
    tab = prediction_table(fit, averaging, DEFAULT_THRESHOLD if fit.spec.J >= 4 else 2,
                           quad_order)
    arr = ds.arrays
    has_attr = fit.spec.has("attribute")
    rows = []
    for i, f in enumerate(tab.formulations):
        fi = ds.level_index("formulation", f)
        for k, a in enumerate(tab.attributes):
            mask = arr["formulation"] == fi
            if has_attr:
                mask &= arr["attribute"] == ds.level_index("attribute", a)
            n = int(mask.sum())
            if not n:
                continue
            counts = np.bincount(arr["response"][mask], minlength=ds.J + 1)[1:]
            for j in range(ds.J):
                rows.append({"formulation": f, "attribute": a, "category": j + 1, "n": n,
                             "observed": counts[j] / n, "predicted": float(tab.probs[i, k, j])})
    return rows


def write_observed_vs_predicted(rows: list[dict], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["formulation", "attribute", "category", "n", "observed", "predicted"])
        for r in rows:
            w.writerow([r["formulation"], r["attribute"], r["category"], r["n"],
                        f"{r['observed']:.6f}", f"{r['predicted']:.6f}"])
