"""Reference computations written independently of the package code."""
import math

import numpy as np
from scipy.special import expit, logsumexp


def trapezoid_marginal_loglik(eta, y, sigma, n_points=100_001, half_width=12.0):
    """log of the integral over u ~ N(0, sigma^2) of prod_k P(y_k | eta_k + u),
    by the trapezoid rule on z = u / sigma in [-half_width, half_width]."""
    eta = np.asarray(eta, float)
    y = np.asarray(y)
    z = np.linspace(-half_width, half_width, n_points)
    cum = expit(eta[None, :, :] + sigma * z[:, None, None])          # (Z, n, K)
    ones = np.ones(cum.shape[:2] + (1,))
    full = np.concatenate([np.zeros_like(ones), cum, ones], axis=2)   # P(Y<=0..J)
    idx = np.arange(len(y))
    p = full[:, idx, y] - full[:, idx, y - 1]
    logint = np.log(p).sum(axis=1) - 0.5 * z ** 2 - 0.5 * math.log(2 * math.pi)
    w = np.full(n_points, z[1] - z[0])
    w[0] = w[-1] = 0.5 * w[0]
    return float(logsumexp(logint, b=w))


def upper_gamma_q(a, x, tol=1e-16):
    """Regularised upper incomplete gamma Q(a, x): power series below a+1,
    Lentz continued fraction above."""
    if x <= 0:
        return 1.0
    log_pref = a * math.log(x) - x - math.lgamma(a)
    if x < a + 1:
        term = total = 1.0 / a
        n = 0
        while abs(term) > tol * abs(total):
            n += 1
            term *= x / (a + n)
            total += term
        return 1.0 - math.exp(log_pref) * total
    tiny = 1e-300
    b = x + 1 - a
    c = 1 / tiny
    d = 1 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1 / d
        delta = d * c
        h *= delta
        if abs(delta - 1) < tol:
            break
    return math.exp(log_pref) * h


def chi2_tail(x, df):
    return upper_gamma_q(df / 2, x / 2)


def pearson_chi2(table):
    t = np.asarray(table, float)
    expected = np.outer(t.sum(1), t.sum(0)) / t.sum()
    return float(((t - expected) ** 2 / expected).sum())


def spearman(a, b):
    """Spearman correlation via average ranks."""
    def ranks(v):
        v = np.asarray(v, float)
        order = np.argsort(v, kind="stable")
        r = np.empty(len(v))
        r[order] = np.arange(1, len(v) + 1)
        for val in np.unique(v):
            m = v == val
            r[m] = r[m].mean()
        return r
    ra, rb = ranks(a), ranks(b)
    return float(np.corrcoef(ra, rb)[0, 1])
