import numpy as np
import pytest

from sensilogit import kernels
from sensilogit.mixed import (MixedOptions, fit_mixed, gauss_hermite, marginal_gradient,
                              marginal_loglik, profile_ci_sigma, profile_loglik, profile_trace,
                              write_profile_csv)
from sensilogit.model import ModelData, ModelSpec, ParamVector, fit_fixed, loglik_fixed

from conftest import random_params, synth
from oracles import trapezoid_marginal_loglik
from test_model import fd_grad

SPEC = ModelSpec.unified(5, 3, 2, random_intercept=True)


def _one_panellist(seed, n):
    rng = np.random.default_rng(seed)
    alpha = np.sort(rng.normal(0, 1.5, 4)) + np.arange(4) * 0.2
    eta = alpha[None, :] + rng.normal(0, 1, (n, 1))
    return eta, rng.integers(1, 6, n), rng.uniform(0.2, 2.5)


def _kernel_ll(eta, y, sigma, rule):
    out = kernels.mixed_loglik_grad(np.ascontiguousarray(eta), y.astype(np.int64),
                                    np.array([0, len(y)], dtype=np.int64), sigma,
                                    rule.nodes, rule.log_weights, rule.adaptive)
    return out[0][0], out[3]


@pytest.mark.parametrize("seed", range(5))
def test_quadrature_matches_trapezoid(seed):
    eta, y, sigma = _one_panellist(seed, 20)
    ll, nfb = _kernel_ll(eta, y, sigma, gauss_hermite(15))
    assert nfb == 0
    assert ll == pytest.approx(trapezoid_marginal_loglik(eta, y, sigma), abs=1e-8)


def test_short_panels_converge_with_order():
    # few responses and a wide effect make the integrand skewed; the
    # error at order 15 is real but shrinks quickly with the order
    eta, y, sigma = _one_panellist(7, 1)
    oracle = trapezoid_marginal_loglik(eta, y, 2.4)
    errs = [abs(_kernel_ll(eta, y, 2.4, gauss_hermite(q))[0] - oracle) for q in (5, 15, 40)]
    assert errs[2] < 1e-9 and errs[2] < errs[1] < errs[0]


def test_mode_search_does_not_oscillate():
    # this panellist sends undamped Newton into a two-cycle
    rng = np.random.default_rng([2, 1])
    n = int(rng.integers(4, 21))
    alpha = np.sort(rng.normal(0, 1.5, 4)) + np.arange(4) * 0.2
    eta = alpha[None, :] + rng.normal(0, 1, (n, 1))
    y = rng.integers(1, 6, n)
    sigma = rng.uniform(0.2, 2.5)
    for name, mod in kernels.BACKENDS.items():
        rule = gauss_hermite(15)
        out = mod.mixed_loglik_grad(np.ascontiguousarray(eta), y.astype(np.int64),
                                    np.array([0, n], dtype=np.int64), sigma, rule.nodes,
                                    rule.log_weights, True)
        assert out[3] == 0, name
        assert out[0][0] == pytest.approx(trapezoid_marginal_loglik(eta, y, sigma), abs=1e-8)


def test_nonadaptive_needs_more_nodes():
    eta, y, sigma = _one_panellist(3, 20)
    oracle = trapezoid_marginal_loglik(eta, y, sigma)
    ad = abs(_kernel_ll(eta, y, sigma, gauss_hermite(15, True))[0] - oracle)
    plain = abs(_kernel_ll(eta, y, sigma, gauss_hermite(15, False))[0] - oracle)
    assert ad < plain


def test_sigma_to_zero_matches_fixed(small_data):
    rng = np.random.default_rng(4)
    p = random_params(SPEC, rng, scale=0.5)
    fixed = ParamVector(SPEC.with_random_intercept(False), p.alpha, p.slopes)
    tiny = ParamVector(SPEC, p.alpha, p.slopes, np.log(1e-7))
    assert marginal_loglik(tiny, small_data) == pytest.approx(
        loglik_fixed(fixed, small_data), abs=1e-6)


def test_marginal_gradient_matches_fd(small_data):
    rng = np.random.default_rng(9)
    rule = gauss_hermite(25)
    for _ in range(3):
        p = random_params(SPEC, rng, scale=0.5)
        f = lambda x: marginal_loglik(ParamVector.unpack(SPEC, x), small_data, rule)
        g = marginal_gradient(p, small_data, rule)
        num = fd_grad(f, p.pack(), h=1e-5)
        assert np.max(np.abs(g - num) / np.maximum(np.abs(num), 1)) < 1e-5


def test_rule_validation():
    with pytest.raises(ValueError):
        gauss_hermite(0)
    r = gauss_hermite(10)
    assert np.exp(r.log_weights - r.nodes ** 2).sum() == pytest.approx(np.sqrt(np.pi))


@pytest.fixture(scope="module")
def mixed_case():
    ds = synth(seed=21, groups=250, per_group=6, beta=[0.8, -0.5], delta=[0.4], sigma=1.3)
    data = ModelData.from_dataset(ds)
    return data, fit_mixed(SPEC, data)


def test_fit_mixed_recovers(mixed_case):
    data, fit = mixed_case
    assert fit.converged and fit.vcov_ok
    truth = np.concatenate([np.linspace(-1.5, 1.5, 4), [0.8, -0.5, 0.4], [np.log(1.3)]])
    assert np.all(np.abs(fit.estimates - truth) < 3.5 * fit.se)
    assert np.linalg.norm(marginal_gradient(fit.params, data, gauss_hermite(15))) < 1e-3


def test_mixed_beats_fixed(mixed_case):
    data, fit = mixed_case
    fixed = fit_fixed(SPEC.with_random_intercept(False), data)
    assert fit.loglik > fixed.loglik


def test_profile_peaks_at_estimate(mixed_case):
    data, fit = mixed_case
    s = fit.sigma_u
    assert profile_loglik(fit, data, s) == pytest.approx(fit.loglik, abs=1e-6)
    pts = profile_trace(fit, data, [0.6 * s, s, 1.6 * s])
    assert pts[1][1] > pts[0][1] and pts[1][1] > pts[2][1]


def test_profile_ci(mixed_case, tmp_path):
    data, fit = mixed_case
    ci = profile_ci_sigma(fit, data)
    assert ci.lower < fit.sigma_u < ci.upper
    assert not (ci.lower_open or ci.upper_open or ci.contains_zero)
    assert ci.lower < 1.3 < ci.upper
    # endpoints sit on the chi-square(1) cutoff
    for end in (ci.lower, ci.upper):
        assert 2 * (fit.loglik - profile_loglik(fit, data, end)) == pytest.approx(3.8415, abs=2e-3)
    write_profile_csv(ci.trace, tmp_path / "p.csv", fit.loglik)
    assert (tmp_path / "p.csv").read_text().startswith("sigma_u,profile_loglik,deviance")


def test_boundary_when_no_heterogeneity():
    ds = synth(seed=2, groups=150, per_group=4, beta=[0.5, 0.0], sigma=0.0)
    fit = fit_mixed(SPEC, ds)
    assert fit.sigma_u < 0.3
    if fit.convergence.status == "boundary":
        assert np.isnan(fit.se[-1]) or fit.se[-1] == 0
    ci = profile_ci_sigma(fit, ds)
    assert ci.lower < 0.05


def test_fixed_sigma_fit(mixed_case):
    data, fit = mixed_case
    f2 = fit_mixed(SPEC, data, MixedOptions(), fixed_log_sigma=np.log(2.0))
    assert f2.sigma_u == pytest.approx(2.0)
    assert f2.fixed == ("log_sigma_u",)
    assert f2.loglik <= fit.loglik + 1e-8
