import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sensilogit.dataset import OrdinalDataset
from sensilogit.errors import DataError, FitError, NestingError
from sensilogit.inference import (chi2_sf, chisq_association, format_p, lrt, norm_sf2,
                                  test_covariate as covariate_lrt,
                                  test_proportionality as proportionality_lrt,
                                  test_random_effect as random_effect_lrt, wald_from, wald_tests)
from sensilogit.mixed import fit_model
from sensilogit.model import ModelSpec, Term, fit_fixed

from conftest import synth
from oracles import chi2_tail, pearson_chi2

BASE = ModelSpec.unified(5, 3, 2)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 300.0), st.integers(1, 60))
def test_chi2_sf_matches_oracle(x, df):
    assert chi2_sf(x, df) == pytest.approx(chi2_tail(x, df), abs=1e-10)


def test_chi2_sf_edges():
    assert chi2_sf(0.0, 3) == 1.0
    assert chi2_sf(0.0, 0) == 1.0 and chi2_sf(1.0, 0) == 0.0
    assert norm_sf2(1.959963984540054) == pytest.approx(0.05, abs=1e-12)


def test_format_p():
    assert format_p(0.0004) == "< 0.001"
    assert format_p(0.004) == "< 0.01"
    assert format_p(0.1234) == "0.123"


@pytest.fixture(scope="module")
def fits(small_data):
    return {
        "cut": fit_fixed(ModelSpec(5, ()), small_data),
        "F": fit_fixed(BASE.without("attribute"), small_data),
        "FA": fit_fixed(BASE, small_data),
        "FA_npo": fit_fixed(BASE.with_odds(False), small_data),
    }


def test_lrt_nonnegative_and_additive(fits):
    chain = [fits[k] for k in ("cut", "F", "FA", "FA_npo")]
    steps = [lrt(a, b).statistic for a, b in zip(chain, chain[1:])]
    assert all(s >= 0 for s in steps)
    total = lrt(chain[0], chain[-1])
    assert total.statistic == pytest.approx(sum(steps), abs=1e-6)
    assert total.df == sum(b.n_params - a.n_params for a, b in zip(chain, chain[1:]))


def test_lrt_rejects_non_nested(fits, small_data):
    with pytest.raises(NestingError):
        lrt(fits["FA"], fits["F"])
    other = fit_fixed(BASE, synth(seed=99))
    with pytest.raises(NestingError, match="different data"):
        lrt(fits["F"], other)


def test_lrt_negative_statistic_raises(fits):
    from dataclasses import replace
    bad = replace(fits["FA"], loglik=fits["F"].loglik - 1.0)
    with pytest.raises(FitError, match="negative"):
        lrt(fits["F"], bad)
    tiny = replace(fits["FA"], loglik=fits["F"].loglik - 1e-9)
    assert lrt(fits["F"], tiny).statistic == 0.0


def test_boundary_mixture_halves_p(fits):
    plain = lrt(fits["F"], fits["FA"])
    mix = lrt(fits["F"], fits["FA"], boundary=True)
    # 0.5 chi2_0 + 0.5 chi2_1 with df = 1
    assert mix.p_value == pytest.approx(0.5 * plain.p_value)


def test_proportionality_binary_is_vacuous():
    with pytest.raises(ValueError, match="vacuous"):
        proportionality_lrt(synth(J=2), ModelSpec.unified(2, 3, 2))


def test_proportionality_detects_category_specific_effect():
    beta = np.array([[0.8, 0.0], [0.3, 0.0], [-0.3, 0.0], [-0.8, 0.0]])
    ds = synth(seed=6, groups=500, per_group=4, beta=beta, sigma=0.0)
    res = proportionality_lrt(ds, BASE, fitter=fit_model)
    assert res.p_value < 1e-4 and res.df == 9


def test_proportionality_null_not_rejected():
    ds = synth(seed=7, groups=300, per_group=4, beta=[0.5, -0.3], sigma=0.0)
    assert proportionality_lrt(ds, BASE, fitter=fit_model).p_value > 0.01


def test_covariate_and_random_effect(small_ds):
    spec = BASE.with_random_intercept(True)
    res = covariate_lrt(small_ds, spec, "formulation")
    assert res.df == 2 and res.p_value < 0.05
    re = random_effect_lrt(small_ds, BASE)
    assert re.p_value < 0.05
    assert "chi2_0" in re.df


def test_covariate_single_level_term_errors():
    ds = synth(T=3, L=1, groups=20)
    spec = ModelSpec(5, (Term("formulation", 3), Term("attribute", 1)))
    with pytest.raises(DataError, match="single level"):
        covariate_lrt(ds, spec, "attribute")


def test_lrt_invariant_to_row_and_panellist_order(small_ds):
    rng = np.random.default_rng(0)
    obs = list(small_ds.observations)
    rng.shuffle(obs)
    perm = OrdinalDataset(tuple(obs), small_ds.scale, small_ds.formulations,
                          small_ds.attributes)
    a = lrt(fit_fixed(BASE.without("attribute"), small_ds), fit_fixed(BASE, small_ds))
    b = lrt(fit_fixed(BASE.without("attribute"), perm), fit_fixed(BASE, perm))
    assert a.statistic == pytest.approx(b.statistic, abs=1e-6)


def test_wald_tests(fits):
    rows = wald_tests(fits["FA"])
    assert [r.label for r in rows] == fits["FA"].labels
    for r in rows:
        assert r.p_value == pytest.approx(norm_sf2(r.estimate / r.se))
    with pytest.raises(ValueError):
        wald_from(1.0, 0.0)


def test_wald_rejects_indefinite(fits):
    from dataclasses import replace
    V = fits["FA"].vcov.copy()
    V[0, 0] = -1.0
    with pytest.raises(FitError, match="positive definite"):
        wald_tests(replace(fits["FA"], vcov=V))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_chisq_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    t = rng.integers(1, 40, size=(rng.integers(2, 6), rng.integers(2, 6)))
    res = chisq_association(t)
    assert res.statistic == pytest.approx(pearson_chi2(t), rel=1e-10)
    assert res.df == (t.shape[0] - 1) * (t.shape[1] - 1)


def test_chisq_errors_and_degenerate():
    with pytest.raises(DataError, match="zero row margin at row 2"):
        chisq_association([[1, 2], [0, 0]])
    res = chisq_association([[1, 2, 3], [2, 4, 6]])
    assert res.statistic == 0.0 and res.p_value == 1.0
