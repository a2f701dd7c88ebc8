"""Random-intercept (panellist) cumulative-logit models.

The marginal likelihood integrates each panellist's conditional likelihood
over ``u ~ N(0, sigma_u^2)``.  Integration is done on the standardised
scale ``z = u / sigma_u`` with Gauss-Hermite quadrature, recentred and
rescaled per panellist at the mode/curvature of the integrand (adaptive
quadrature).  ``sigma_u`` is optimised as ``log sigma_u``.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.stats import chi2

from . import kernels
from .errors import ConvergenceWarning, FitError
from .model import (FitOptions, FittedModel, ModelData, ModelSpec, ParamVector,
                    as_model_data, build_fit, eta_gradient, fit_fixed, initial_params,
                    linear_predictor)
from .optimize import maximize

DEFAULT_QUAD_ORDER = 15
BOUNDARY_SIGMA = 1e-3
PROFILE_SIGMA_MIN = 1e-6


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    order: int
    adaptive: bool = True

    def __post_init__(self):
        if len(self.nodes) != self.order or len(self.weights) != self.order:
            raise ValueError("node and weight counts must equal the order")
        if np.any(np.asarray(self.weights) <= 0):
            raise ValueError("quadrature weights must be positive")

    @property
    def log_weights(self) -> np.ndarray:
        """log(w_q) + t_q^2, the form the kernels expect."""
        return np.log(self.weights) + self.nodes ** 2


@lru_cache(maxsize=64)
def _hermgauss(order: int):
    t, w = np.polynomial.hermite.hermgauss(order)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def gauss_hermite(order: int = DEFAULT_QUAD_ORDER, adaptive: bool = True) -> QuadratureRule:
    """Physicists' Gauss-Hermite rule (weight ``exp(-t^2)``)."""
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    t, w = _hermgauss(int(order))
    return QuadratureRule(t, w, int(order), adaptive)


def _mixed_eval(params: ParamVector, data: ModelData, rule: QuadratureRule):
    spec = params.spec
    if not spec.random_intercept:
        raise ValueError("model has no random intercept")
    data.check(spec)
    sigma = float(np.exp(params.log_sigma_u))
    eta = linear_predictor(params, data)
    ll_g, D, dsig, nfb = kernels.mixed_loglik_grad(
        eta, data.y, data.offsets, sigma, rule.nodes, rule.log_weights, rule.adaptive)
    if not np.all(np.isfinite(ll_g)):
        raise FitError("non-finite integrand in marginal likelihood")
    grad = np.append(eta_gradient(params, data, D), sigma * float(np.sum(dsig)))
    return float(np.sum(ll_g)), grad, nfb


def marginal_loglik(params: ParamVector, data, rule: QuadratureRule | None = None) -> float:
    """Sum over panellists of log of the integrated conditional likelihood."""
    return _mixed_eval(params, as_model_data(data), rule or gauss_hermite())[0]


def marginal_gradient(params: ParamVector, data, rule: QuadratureRule | None = None) -> np.ndarray:
    """Gradient of :func:`marginal_loglik` in packing order.

    Differentiates under the integral with the quadrature nodes held at
    their adaptive positions; the difference from differentiating the
    quadrature approximation itself is of the order of the quadrature error.
    """
    return _mixed_eval(params, as_model_data(data), rule or gauss_hermite())[1]


@dataclass(frozen=True)
class MixedOptions:
    quad_order: int = DEFAULT_QUAD_ORDER
    adaptive: bool = True
    max_iter: int = 1000
    grad_tol: float = 1e-6
    initializer: ParamVector | None = None
    polish: bool = True
    start_log_sigma: float = 0.0


def _start(spec: ModelSpec, data: ModelData, opts: MixedOptions) -> ParamVector:
    if opts.initializer is not None:
        if opts.initializer.spec != spec:
            raise ValueError("initializer does not match the model spec")
        return opts.initializer
    fixed_spec = spec.with_random_intercept(False)
    try:
        with warnings.catch_warnings():
            # only a starting point; its own convergence does not matter
            warnings.simplefilter("ignore", ConvergenceWarning)
            base = fit_fixed(fixed_spec, data, FitOptions(max_iter=opts.max_iter, polish=False))
        x = np.append(base.params.pack(), opts.start_log_sigma)
        return ParamVector.unpack(spec, x)
    except (FitError, np.linalg.LinAlgError):
        return initial_params(spec, data, opts.start_log_sigma)


def fit_mixed(spec: ModelSpec, data, opts: MixedOptions | None = None, *,
              fixed_log_sigma: float | None = None) -> FittedModel:
    """Maximum marginal-likelihood fit of a random-intercept model.

    With ``fixed_log_sigma`` the random-effect scale is held fixed and the
    remaining parameters are maximised (one point of the profile likelihood).
    """
    if not spec.random_intercept:
        raise ValueError("fit_mixed needs a random-intercept spec; use fit_fixed")
    opts = opts or MixedOptions()
    data = as_model_data(data)
    data.check(spec)
    rule = gauss_hermite(opts.quad_order, opts.adaptive)
    start = _start(spec, data, opts).pack()
    fixed = np.zeros(spec.n_params, dtype=bool)
    if fixed_log_sigma is not None:
        start[-1] = fixed_log_sigma
        fixed[-1] = True

    def objective(x):
        ll, g, _ = _mixed_eval(ParamVector.unpack(spec, x), data, rule)
        return ll, g

    res = maximize(objective, start, spec.K, max_iter=opts.max_iter,
                   grad_tol=opts.grad_tol, fixed=fixed, polish=False, hessian=False)
    iterations, message = res.iterations, res.message
    boundary = fixed_log_sigma is None and np.exp(res.x[-1]) < BOUNDARY_SIGMA
    if boundary:
        # sigma has collapsed and its curvature vanishes: hold it where the
        # optimiser left it for the polish and the information matrix
        fixed = fixed.copy()
        fixed[-1] = True
    res = maximize(objective, res.x, spec.K, max_iter=opts.max_iter if boundary else 0,
                   grad_tol=opts.grad_tol, fixed=fixed, polish=opts.polish)
    res.iterations += iterations
    if not boundary:
        res.message = message
    fixed_names = ("log_sigma_u",) if fixed_log_sigma is not None else ()
    return build_fit(spec, data, res, objective=objective, notes=[],
                     quad_order=opts.quad_order, fixed_names=fixed_names, boundary=boundary)


def fit_model(spec: ModelSpec, data, *, quad_order: int = DEFAULT_QUAD_ORDER,
              max_iter: int = 1000, grad_tol: float = 1e-6) -> FittedModel:
    """Dispatch to :func:`fit_fixed` or :func:`fit_mixed` by the spec."""
    if spec.random_intercept:
        return fit_mixed(spec, data, MixedOptions(quad_order=quad_order, max_iter=max_iter,
                                                  grad_tol=grad_tol))
    return fit_fixed(spec, data, FitOptions(max_iter=max_iter, grad_tol=grad_tol))


@dataclass(frozen=True)
class ProfileCI:
    parameter: str
    level: float
    estimate: float
    lower: float
    upper: float
    contains_zero: bool
    lower_open: bool = False
    upper_open: bool = False
    trace: tuple[tuple[float, float], ...] = field(default=())

    def to_json(self) -> dict:
        return {"parameter": self.parameter, "level": self.level, "estimate": self.estimate,
                "lower": self.lower, "upper": self.upper, "contains_zero": self.contains_zero,
                "lower_open": self.lower_open, "upper_open": self.upper_open}


def profile_loglik(fit: FittedModel, data, sigma: float, opts: MixedOptions | None = None) -> float:
    """Log-likelihood maximised over all other parameters at fixed sigma_u."""
    opts = opts or MixedOptions(quad_order=fit.quad_order or DEFAULT_QUAD_ORDER)
    data = as_model_data(data)
    spec = fit.spec
    rule = gauss_hermite(opts.quad_order, opts.adaptive)
    start = fit.params.pack()
    start[-1] = np.log(sigma)
    fixed = np.zeros(spec.n_params, dtype=bool)
    fixed[-1] = True

    def objective(x):
        ll, g, _ = _mixed_eval(ParamVector.unpack(spec, x), data, rule)
        return ll, g

    res = maximize(objective, start, spec.K, max_iter=opts.max_iter, grad_tol=opts.grad_tol,
                   fixed=fixed, polish=False, hessian=False)
    return res.loglik


def profile_ci_sigma(fit: FittedModel, data, level: float = 0.95,
                     opts: MixedOptions | None = None, tol: float = 1e-4) -> ProfileCI:
    """Likelihood-ratio interval for sigma_u from the profile likelihood.

    Endpoints solve ``2 [l(sigma_hat) - l_p(sigma)] = chi2_1(level)`` inside
    ``[1e-6, 10 sigma_hat]``; an endpoint that the profile never crosses is
    flagged open.  A lower end at the 1e-6 boundary counts as containing zero.
    """
    if not fit.spec.random_intercept:
        raise ValueError("profile CI needs a random-intercept fit")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    data = as_model_data(data)
    opts = opts or MixedOptions(quad_order=fit.quad_order or DEFAULT_QUAD_ORDER)
    half = 0.5 * chi2.ppf(level, 1)
    s_hat = fit.sigma_u
    trace: dict[float, float] = {}

    def drop(s):
        if s not in trace:
            trace[s] = profile_loglik(fit, data, s, opts)
        return fit.loglik - trace[s] - half

    lo_end = PROFILE_SIGMA_MIN
    if s_hat <= lo_end or drop(lo_end) <= 0:
        lower, lower_open = lo_end, True
    else:
        lower, lower_open = brentq(drop, lo_end, s_hat, xtol=tol), False
    hi_end = 10 * max(s_hat, 0.1)
    if drop(hi_end) <= 0:
        upper, upper_open = hi_end, True
    else:
        upper, upper_open = brentq(drop, max(s_hat, lo_end), hi_end, xtol=tol), False
    return ProfileCI("sigma_u", level, s_hat, float(lower), float(upper),
                     contains_zero=lower_open, lower_open=lower_open, upper_open=upper_open,
                     trace=tuple(sorted(trace.items())))


def profile_trace(fit: FittedModel, data, grid, opts: MixedOptions | None = None):
    """Profile log-likelihood of sigma_u over ``grid``."""
    data = as_model_data(data)
    return [(float(s), profile_loglik(fit, data, float(s), opts)) for s in grid]


def write_profile_csv(points, path, loglik_max: float | None = None) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sigma_u", "profile_loglik", "deviance"])
        for s, ll in points:
            dev = "" if loglik_max is None else f"{2 * (loglik_max - ll):.10g}"
            w.writerow([f"{s:.10g}", f"{ll:.10g}", dev])
