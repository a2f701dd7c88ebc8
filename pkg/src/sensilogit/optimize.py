"""Maximum-likelihood driver shared by the fixed and mixed fits.

Optimisation runs BFGS on an unconstrained reparameterisation in which the
leading ``n_alpha`` coordinates (the cutpoints) become
``alpha_1, log(alpha_2 - alpha_1), ...`` so they stay strictly increasing.
The BFGS solution is then polished with a few safeguarded Newton steps on
the natural scale, using a finite-difference Hessian of the analytic
gradient; the same Hessian gives the observed information.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize

MIN_GAP = 1e-6


def to_free(x: np.ndarray, n_alpha: int) -> np.ndarray:
    phi = np.array(x, dtype=float)
    if n_alpha > 1:
        gaps = np.diff(x[:n_alpha])
        phi[1:n_alpha] = np.log(np.maximum(gaps, MIN_GAP))
    return phi


def from_free(phi: np.ndarray, n_alpha: int) -> np.ndarray:
    x = np.array(phi, dtype=float)
    if n_alpha > 1:
        x[:n_alpha] = phi[0] + np.concatenate(([0.0], np.cumsum(np.exp(phi[1:n_alpha]))))
    return x


def free_gradient(g: np.ndarray, phi: np.ndarray, n_alpha: int) -> np.ndarray:
    """Chain rule from the natural-scale gradient ``g`` to the free scale."""
    out = np.array(g, dtype=float)
    if n_alpha > 1:
        tail = np.cumsum(g[:n_alpha][::-1])[::-1]  # sum_{k >= m} dl/dalpha_k
        out[0] = tail[0]
        out[1:n_alpha] = np.exp(phi[1:n_alpha]) * tail[1:]
    return out


def fd_hessian(grad: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
               idx: np.ndarray, rel_step: float = 1e-5) -> np.ndarray:
    """Central-difference Hessian of ``grad`` over coordinates ``idx``."""
    m = len(idx)
    H = np.zeros((m, m))
    for a, i in enumerate(idx):
        h = rel_step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        H[:, a] = (grad(xp)[idx] - grad(xm)[idx]) / (2 * h)
    return 0.5 * (H + H.T)


def _ordered(x: np.ndarray, n_alpha: int) -> bool:
    return n_alpha < 2 or bool(np.all(np.diff(x[:n_alpha]) > 0))


@dataclass
class OptimResult:
    x: np.ndarray
    loglik: float
    grad: np.ndarray
    grad_norm: float
    iterations: int
    converged: bool
    message: str
    free_idx: np.ndarray
    hessian: np.ndarray | None = None
    newton_steps: int = 0
    extra: dict = field(default_factory=dict)


def maximize(objective: Callable[[np.ndarray], tuple[float, np.ndarray]],
             x0: np.ndarray, n_alpha: int, *, max_iter: int = 1000,
             grad_tol: float = 1e-6, fixed: np.ndarray | None = None,
             polish: bool = True, polish_steps: int = 8,
             hessian: bool = True) -> OptimResult:
    """Maximise ``objective(x) -> (loglik, gradient)`` starting at ``x0``.

    Coordinates flagged in the boolean mask ``fixed`` are held at their
    starting values.  Convergence is judged by the Euclidean norm of the
    natural-scale gradient over the free coordinates.
    """
    x0 = np.asarray(x0, dtype=float)
    p = len(x0)
    fixed = np.zeros(p, dtype=bool) if fixed is None else np.asarray(fixed, dtype=bool)
    free_idx = np.flatnonzero(~fixed)
    phi_full = to_free(x0, n_alpha)

    def assemble(phi_free):
        phi = phi_full.copy()
        phi[free_idx] = phi_free
        return phi

    def f(phi_free):
        phi = assemble(phi_free)
        x = from_free(phi, n_alpha)
        ll, g = objective(x)
        if not np.isfinite(ll):
            return np.inf, np.zeros_like(phi_free)
        gphi = free_gradient(g, phi, n_alpha)
        return -ll, -gphi[free_idx]

    if len(free_idx):
        res = minimize(f, phi_full[free_idx], jac=True, method="BFGS",
                       options={"gtol": grad_tol * 1e-2, "maxiter": max_iter})
        x = from_free(assemble(res.x), n_alpha)
        iterations, message = int(res.nit), str(res.message)
    else:
        x, iterations, message = x0.copy(), 0, "no free parameters"

    ll, g = objective(x)

    def grad_only(z):
        return objective(z)[1]

    H = None
    steps = 0
    if polish and len(free_idx):
        for _ in range(polish_steps):
            if np.linalg.norm(g[free_idx]) < grad_tol * 1e-3:
                break
            H = fd_hessian(grad_only, x, free_idx)
            try:
                np.linalg.cholesky(-H)
            except np.linalg.LinAlgError:
                break
            step = np.linalg.solve(-H, g[free_idx])
            t = 1.0
            accepted = False
            for _ in range(12):
                cand = x.copy()
                cand[free_idx] += t * step
                if _ordered(cand, n_alpha):
                    ll_c, g_c = objective(cand)
                    if np.isfinite(ll_c) and ll_c >= ll - 1e-12 * max(1.0, abs(ll)):
                        accepted = True
                        break
                t *= 0.5
            if not accepted:
                break
            x, ll, g = cand, ll_c, g_c
            H = None
            steps += 1
            if np.max(np.abs(t * step)) < 1e-12:
                break

    if hessian and len(free_idx) and H is None:
        H = fd_hessian(grad_only, x, free_idx)
    gnorm = float(np.linalg.norm(g[free_idx])) if len(free_idx) else 0.0
    return OptimResult(x=x, loglik=float(ll), grad=g, grad_norm=gnorm,
                       iterations=iterations, converged=gnorm < grad_tol,
                       message=message, free_idx=free_idx, hessian=H,
                       newton_steps=steps)


def covariance(hessian: np.ndarray | None, free_idx: np.ndarray, p: int) -> tuple[np.ndarray, bool]:
    """Inverse observed information embedded in a p x p matrix (NaN for
    held-fixed coordinates).  Returns ``(vcov, positive_definite)``."""
    V = np.full((p, p), np.nan)
    if hessian is None or not len(free_idx):
        return V, False
    info = -hessian
    try:
        L = np.linalg.cholesky(info)
        Linv = np.linalg.solve(L, np.eye(len(free_idx)))
        sub = Linv.T @ Linv
        ok = True
    except np.linalg.LinAlgError:
        sub = np.linalg.pinv(info)
        ok = False
    sub = 0.5 * (sub + sub.T)
    V[np.ix_(free_idx, free_idx)] = sub
    return V, ok
