import csv
import json
from dataclasses import replace

import numpy as np
import pytest
from scipy.special import expit

from sensilogit import beverage
from sensilogit.dataset import DataError
from sensilogit.model import ModelSpec, ParamVector, cumulative_logits, fit_fixed
from sensilogit.predict import (acceptance_score, conditional_probs, design_row,
                                observed_vs_predicted, population_averaged_probs,
                                prediction_table, rank_formulations, rank_scores,
                                write_observed_vs_predicted)

from conftest import synth


@pytest.fixture(scope="module")
def ref():
    return beverage.reference_fit()


def _with_params(fit, **kw):
    p = fit.params
    return replace(fit, params=ParamVector(p.spec, kw.get("alpha", p.alpha),
                                           kw.get("slopes", p.slopes),
                                           kw.get("log_sigma_u", p.log_sigma_u)))


def test_plug_in_cumulative_logit(ref):
    eta = cumulative_logits(ref.params, design_row(ref, "F4", "body"))
    # second cutpoint + F4 + body
    assert eta[1] == pytest.approx(0.04 - 1.84 - 0.26)
    assert expit(eta[1]) == pytest.approx(0.1131, abs=5e-4)


def test_reference_level_has_no_offset(ref):
    row = design_row(ref, "F1", "aroma")
    assert not any(v.any() for v in row.values())
    np.testing.assert_allclose(cumulative_logits(ref.params, row), beverage.ALPHA)


def test_uniform_model():
    spec = ModelSpec.unified(5, 2, 2)
    fit = fit_fixed(spec, synth(T=2, groups=20))
    theta = np.array([0.2, 0.4, 0.6, 0.8])
    fit = _with_params(fit, alpha=np.log(theta / (1 - theta)),
                       slopes=(np.zeros(1), np.zeros(1)))
    np.testing.assert_allclose(conditional_probs(fit, "F2", "A2"), 0.2, atol=1e-12)
    sc = acceptance_score(fit, averaging="conditional")
    np.testing.assert_allclose(sc.scores, 0.4, atol=1e-12)
    ranks = rank_formulations(fit, averaging="conditional")
    assert [r.formulation for r in ranks] == ["F1", "F2"] and all(r.tied for r in ranks)


def test_monotone_in_u(ref):
    s = ref.sigma_u
    lo = np.cumsum(conditional_probs(ref, "F5", "flavour", u=-3 * s))
    hi = np.cumsum(conditional_probs(ref, "F5", "flavour", u=3 * s))
    assert np.all(hi[:-1] > lo[:-1])


def test_population_average_matches_monte_carlo(ref):
    rng = np.random.default_rng(2024)
    u = rng.normal(0, ref.sigma_u, 1_000_000)
    eta = cumulative_logits(ref.params, design_row(ref, "F6", "aroma"))
    cum = expit(eta[None, :] + u[:, None]).mean(axis=0)
    mc = np.diff(np.concatenate(([0.0], cum, [1.0])))
    pa = population_averaged_probs(ref, "F6", "aroma")
    np.testing.assert_allclose(pa, mc, atol=1e-3)
    assert pa.sum() == pytest.approx(1.0, abs=1e-10)


def test_population_average_quadrature_converged(ref):
    # beyond the default order the averages move by less than 1e-6
    base = prediction_table(ref).probs
    for q in (51, 81):
        assert np.max(np.abs(prediction_table(ref, quad_order=q).probs - base)) < 1e-6


def test_population_average_between_extremes(ref):
    t = np.polynomial.hermite.hermgauss(41)[0] * np.sqrt(2) * ref.sigma_u
    acc = [conditional_probs(ref, "F3", "sweetness", u)[3:].sum() for u in t]
    pa = population_averaged_probs(ref, "F3", "sweetness")[3:].sum()
    assert min(acc) < pa < max(acc)


def test_zero_sigma_equals_conditional(ref):
    fit = _with_params(ref, log_sigma_u=-np.inf)
    np.testing.assert_allclose(population_averaged_probs(fit, "F2", "body"),
                               conditional_probs(fit, "F2", "body"), atol=1e-15)


def test_unknown_level(ref):
    with pytest.raises(DataError):
        conditional_probs(ref, "F99", "body")


def test_prediction_table_shape_and_exports(ref, tmp_path):
    tab = prediction_table(ref)
    assert tab.probs.shape == (13, 5, 5)
    np.testing.assert_allclose(tab.probs.sum(axis=2), 1.0, atol=1e-10)
    np.testing.assert_allclose(tab.acceptance, tab.probs[:, :, 3:].sum(axis=2))
    tab.write_csv(tmp_path / "p.csv")
    rows = list(csv.reader((tmp_path / "p.csv").open()))
    assert rows[0] == ["attribute", "category"] + list(beverage.FORMULATIONS)
    assert len(rows) == 1 + 5 * 6
    assert rows[6][1] == ">=4"
    doc = tab.to_json()
    assert doc["averaging"] == "population"
    assert doc["acceptance"]["F6"]["aroma"] == pytest.approx(tab.acceptance[5, 4])


def test_threshold_validation(ref):
    with pytest.raises(ValueError, match="threshold"):
        acceptance_score(ref, threshold=6)
    with pytest.raises(ValueError, match="averaging"):
        acceptance_score(ref, averaging="marginal")


def test_dominant_formulation_wins_everywhere(ref):
    beta = np.zeros((4, 12))
    beta[:, 4] = -4.0  # F6 far more accepted
    fit = _with_params(ref, slopes=(beta, ref.params.slopes[1]))
    sc = acceptance_score(fit)
    assert np.all(sc.scores.argmax(axis=0) == 5)
    assert rank_formulations(fit)[0].formulation == "F6"


def test_duplicate_coefficients_tie():
    ranks = rank_scores(["F1", "F2", "F3"], [0.5, 0.7, 0.5])
    assert [r.formulation for r in ranks] == ["F2", "F1", "F3"]
    assert [r.tied for r in ranks] == [False, True, True]


def test_rank_invariant_to_registration_order():
    rng = np.random.default_rng(1)
    scores = rng.random(8)
    labels = [f"F{i}" for i in range(1, 9)]
    perm = rng.permutation(8)
    a = [r.formulation for r in rank_scores(labels, scores)]
    b = [r.formulation for r in rank_scores([labels[i] for i in perm], scores[perm])]
    assert a == b


def test_observed_vs_predicted(small_ds, tmp_path):
    fit = fit_fixed(ModelSpec.unified(5, 3, 2), small_ds)
    rows = observed_vs_predicted(fit, small_ds)
    assert len(rows) == 3 * 2 * 5
    by_cell = {}
    for r in rows:
        by_cell.setdefault((r["formulation"], r["attribute"]), []).append(r)
    for cell in by_cell.values():
        assert sum(r["observed"] for r in cell) == pytest.approx(1.0)
        assert sum(r["predicted"] for r in cell) == pytest.approx(1.0)
    write_observed_vs_predicted(rows, tmp_path / "o.csv")
    assert (tmp_path / "o.csv").read_text().count("\n") == 31


def test_reference_ranking(ref):
    ranks = rank_formulations(ref)
    assert {r.formulation for r in ranks[:3]} == {"F4", "F6", "F13"}
    assert ranks[-1].formulation == "F7"
    json.dumps([r.__dict__ for r in ranks])
