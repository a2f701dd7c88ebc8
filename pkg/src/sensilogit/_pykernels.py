"""NumPy implementation of the likelihood kernels.

Vectorised over observations (and panellists for the mixed kernel).  The
Cython module ``_ckernels`` exposes the same two functions with identical
semantics; ``sensilogit.kernels`` picks one at import.
"""
import numpy as np
from scipy.special import expit

PROB_FLOOR = 1e-300
LOG_FLOOR = np.log(PROB_FLOOR)
NEWTON_STEPS = 60
NEWTON_TOL = 1e-10


def _bounds(eta, y):
    """Upper/lower cumulative logits of the observed category (+-inf at the ends)."""
    n, K = eta.shape
    rows = np.arange(n)
    up = np.full(n, np.inf)
    lo = np.full(n, -np.inf)
    has_up = y <= K
    has_lo = y >= 2
    up[has_up] = eta[rows[has_up], y[has_up] - 1]
    lo[has_lo] = eta[rows[has_lo], y[has_lo] - 2]
    return up, lo, has_up, has_lo


def _terms(up, lo):
    A = expit(up)
    B = expit(lo)
    with np.errstate(invalid="ignore"):
        pi = np.where(lo > 0, expit(-lo) - expit(-up), A - B)
    fA = A * (1.0 - A)
    fB = B * (1.0 - B)
    ok = pi > PROB_FLOOR
    safe = np.where(ok, pi, 1.0)
    logp = np.where(ok, np.log(safe), LOG_FLOOR)
    dup = np.where(ok, fA / safe, 0.0)
    dlo = np.where(ok, -fB / safe, 0.0)
    return A, B, fA, fB, safe, ok, logp, dup, dlo


def fixed_loglik_grad(eta, y):
    """Log-likelihood, d/d(eta) matrix and floored-probability count.

    Parameters
    ----------
    eta : (n, K) float array of cumulative logits ``alpha_k + x_n . b_k``.
    y : (n,) int array of responses in 1..K+1.
    """
    eta = np.ascontiguousarray(eta, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    n, K = eta.shape
    D = np.zeros((n, K))
    if n == 0:
        return 0.0, D, 0
    up, lo, has_up, has_lo = _bounds(eta, y)
    _, _, _, _, _, ok, logp, dup, dlo = _terms(up, lo)
    rows = np.arange(n)
    D[rows[has_up], y[has_up] - 1] = dup[has_up]
    D[rows[has_lo], y[has_lo] - 2] = dlo[has_lo]
    return float(np.sum(logp)), D, int(np.count_nonzero(~ok))


def _shift_derivs(up, lo, shift):
    A, B, fA, fB, safe, ok, logp, dup, dlo = _terms(up + shift, lo + shift)
    s1 = np.where(ok, (fA - fB) / safe, 0.0)
    s2 = np.where(ok, (fA * (1 - 2 * A) - fB * (1 - 2 * B)) / safe - s1 * s1, 0.0)
    return logp, s1, s2, dup, dlo


def mixed_loglik_grad(eta, y, offsets, sigma, nodes, logw, adaptive=True):
    """Per-panellist marginal log-likelihood under a Gaussian random intercept.

    The integral over the standardised effect ``z`` is evaluated with
    Gauss-Hermite nodes ``nodes`` (log-weights ``logw`` already include the
    ``t**2`` term), recentred at the mode of the panellist's integrand when
    ``adaptive`` is set.

    Returns ``(ll_groups, D, dsigma_groups, n_fallback)`` where ``D`` is the
    derivative w.r.t. ``eta`` and ``dsigma_groups`` w.r.t. ``sigma``.
    """
    eta = np.ascontiguousarray(eta, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    nodes = np.asarray(nodes, dtype=np.float64)
    logw = np.asarray(logw, dtype=np.float64)
    n, K = eta.shape
    G = len(offsets) - 1
    counts = np.diff(offsets)
    gidx = np.repeat(np.arange(G), counts)
    starts = offsets[:-1]
    up, lo, has_up, has_lo = _bounds(eta, y)

    zhat = np.zeros(G)
    h = np.ones(G)
    n_fallback = 0
    if adaptive and G:
        active = np.ones(G, dtype=bool)
        fail = np.zeros(G, dtype=bool)
        # the mode lies where |z| <= sigma * n_i since each |s1| < 1
        zhi = sigma * counts + 1.0
        zlo = -zhi
        for _ in range(NEWTON_STEPS):
            if not active.any():
                break
            _, s1, s2, _, _ = _shift_derivs(up, lo, sigma * zhat[gidx])
            grad = sigma * np.add.reduceat(s1, starts) - zhat
            curv = 1.0 - sigma * sigma * np.add.reduceat(s2, starts)
            bad = active & ~(np.isfinite(curv) & (curv > 0) & np.isfinite(grad))
            fail |= bad
            active &= ~bad
            # concave in z: keep a bracket and bisect when Newton leaves it
            up_side = grad > 0
            zlo = np.where(active & up_side, zhat, zlo)
            zhi = np.where(active & ~up_side, zhat, zhi)
            znew = zhat + grad / np.where(curv > 0, curv, 1.0)
            znew = np.where((zlo < znew) & (znew < zhi), znew, 0.5 * (zlo + zhi))
            step = np.where(active, znew - zhat, 0.0)
            zhat = zhat + step
            active &= ~(np.abs(step) < NEWTON_TOL)
        fail |= active
        _, s1, s2, _, _ = _shift_derivs(up, lo, sigma * zhat[gidx])
        h = 1.0 - sigma * sigma * np.add.reduceat(s2, starts)
        fail |= ~(np.isfinite(h) & (h > 0))
        zhat[fail] = 0.0
        h[fail] = 1.0
        n_fallback = int(np.count_nonzero(fail))

    scale = np.sqrt(2.0 / h)
    Z = zhat[None, :] + scale[None, :] * nodes[:, None]  # (Q, G)
    shift = sigma * Z[:, gidx]  # (Q, n)
    logp, s1, _, dup, dlo = _shift_derivs(up[None, :], lo[None, :], shift)
    g = np.add.reduceat(logp, starts, axis=1) - 0.5 * Z * Z
    lw = logw[:, None] + g
    m = lw.max(axis=0)
    lse = m + np.log(np.exp(lw - m).sum(axis=0))
    ll_groups = np.log(scale) - 0.5 * np.log(2 * np.pi) + lse
    post = np.exp(lw - lse)  # (Q, G)
    pn = post[:, gidx]
    D = np.zeros((n, K))
    rows = np.arange(n)
    dup_w = (pn * dup).sum(axis=0)
    dlo_w = (pn * dlo).sum(axis=0)
    D[rows[has_up], y[has_up] - 1] = dup_w[has_up]
    D[rows[has_lo], y[has_lo] - 2] = dlo_w[has_lo]
    S1 = np.add.reduceat(s1, starts, axis=1)
    dsigma = (post * Z * S1).sum(axis=0)
    return ll_groups, D, dsigma, n_fallback
