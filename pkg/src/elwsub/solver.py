"""Weighted M-estimation: minimize sum_i w_i * loss(z_i, theta)."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .models import ModelFamily, check_function, curvature, loss, score

log = logging.getLogger(__name__)

GRAD_TOL = 1e-8
MAX_NEWTON = 100
ARMIJO_C = 1e-4


class RankDeficientError(ValueError):
    pass


@dataclass
class FitResult:
    theta_hat: np.ndarray
    converged: bool
    iterations: int
    final_gradient_norm: float


def _prepare(y, X, weights):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    if w.shape != y.shape or X.shape[0] != y.shape[0]:
        raise ValueError("y, X and weights must have matching numbers of rows")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    keep = w > 0
    Xk = X[keep]
    if Xk.shape[0] < X.shape[1] or np.linalg.matrix_rank(Xk) < X.shape[1]:
        raise RankDeficientError(
            f"rank deficient: {Xk.shape[0]} positively weighted rows for {X.shape[1]} parameters")
    return y[keep], Xk, w[keep]


def empirical_risk(family: ModelFamily, y, X, weights, theta) -> float:
    """sum_i w_i * loss(z_i, theta)."""
    w = np.asarray(weights, dtype=float)
    if not np.any(w):
        return 0.0
    return float(w @ loss(family, y, X, theta))


def weighted_gradient(family, y, X, w, theta):
    return w @ score(family, y, X, theta)


def fit(family: ModelFamily, y, X, weights, theta_init=None, tol=GRAD_TOL,
        max_iter=MAX_NEWTON) -> FitResult:
    """Minimize the weighted loss.

    Smooth families use damped Newton with Armijo backtracking; the stopping
    rule is applied to the gradient of the weighted loss normalized by
    ``sum(w)``, so the result does not depend on the scale of the weights.
    The quantile family is solved exactly as a linear program (the bounded
    dual, via HiGHS), with majorize-minimize IRLS as a fallback.
    """
    y, X, w = _prepare(y, X, weights)
    w = w / w.sum()
    q = X.shape[1]
    theta = np.zeros(q) if theta_init is None else np.array(theta_init, dtype=float)
    if family.kind == "quantile":
        return _fit_quantile(family.tau, y, X, w, theta, tol)
    return _fit_newton(family, y, X, w, theta, tol, max_iter)


def _fit_newton(family, y, X, w, theta, tol, max_iter):
    f = w @ loss(family, y, X, theta)
    g = weighted_gradient(family, y, X, w, theta)
    for it in range(1, max_iter + 1):
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= tol:
            return FitResult(theta, True, it - 1, gnorm)
        c = curvature(family, y, X, theta)
        H = (X * (w * c)[:, None]).T @ X
        try:
            step = np.linalg.solve(H, -g)
            if not np.all(np.isfinite(step)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            H = H + 1e-10 * np.trace(H) * np.eye(len(g))
            step = np.linalg.lstsq(H, -g, rcond=None)[0]
        slope = g @ step
        if slope >= 0:
            step, slope = -g, -(g @ g)
        t = 1.0
        while True:
            cand = theta + t * step
            fc = w @ loss(family, y, X, cand)
            if fc <= f + ARMIJO_C * t * slope or t < 1e-12:
                break
            t *= 0.5
        if t < 1e-12 and fc > f:
            # no descent possible at floating-point resolution
            break
        theta, f = cand, fc
        g = weighted_gradient(family, y, X, w, theta)
    gnorm = float(np.max(np.abs(g)))
    return FitResult(theta, bool(gnorm <= tol), it, gnorm)


def quantile_kkt_residual(tau, y, X, w, theta, zero_tol=1e-9):
    """Subgradient-balance residual of the weighted check loss at ``theta``.

    Rows with |residual| <= zero_tol may take any subgradient in
    [tau - 1, tau]; their contribution is chosen by least squares and
    clipped to that box before the residual is measured.
    """
    r = y - X @ theta
    scale = max(1.0, np.max(np.abs(y)))
    zero = np.abs(r) <= zero_tol * scale
    g = -(w[~zero] * (tau - (r[~zero] < 0))) @ X[~zero]
    if np.any(zero):
        A = -(X[zero] * w[zero][:, None]).T
        s = np.linalg.lstsq(A, -g, rcond=None)[0]
        s = np.clip(s, tau - 1.0, tau)
        g = g + A @ s
    return float(np.max(np.abs(g)))


def _fit_quantile(tau, y, X, w, theta, tol):
    # max y'd  s.t.  X'd = 0,  (tau - 1) w <= d <= tau w;  theta is the equality multiplier
    q = X.shape[1]
    lp = linprog(-y, A_eq=X.T, b_eq=np.zeros(q), bounds=np.column_stack([(tau - 1) * w, tau * w]),
                 method="highs")
    if lp.status == 0 and lp.eqlin is not None:
        cand = -np.asarray(lp.eqlin.marginals, dtype=float)
        primal = w @ check_function(y - X @ cand, tau)
        if abs(primal + lp.fun) <= 1e-9 * max(1.0, abs(lp.fun)):
            kkt = quantile_kkt_residual(tau, y, X, w, cand)
            return FitResult(cand, True, int(lp.nit), kkt)
        log.warning("quantile LP multipliers inconsistent with the dual value; using IRLS")
    else:
        log.warning("quantile LP failed (%s); using IRLS", lp.message)
    return _fit_quantile_irls(tau, y, X, w, theta, tol)


def _fit_quantile_irls(tau, y, X, w, theta, tol, max_iter=500):
    r = y - X @ theta
    eps = max(np.median(np.abs(r)), 1e-3) * 1e-1
    eps_min = 1e-6
    it = 0
    for it in range(1, max_iter + 1):
        r = y - X @ theta
        c = w / (np.abs(r) + eps)
        A = (X * c[:, None]).T @ X
        rhs = X.T @ (c * y) + (2 * tau - 1) * (X.T @ w)
        try:
            new = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError:
            new = np.linalg.lstsq(A + 1e-10 * np.trace(A) * np.eye(len(rhs)), rhs, rcond=None)[0]
        change = np.max(np.abs(new - theta))
        theta = new
        if change <= 1e-3 * eps or change <= tol:
            if eps <= eps_min:
                break
            eps = max(eps * 0.1, eps_min)
    theta = _polish_vertex(tau, y, X, w, theta)
    kkt = quantile_kkt_residual(tau, y, X, w, theta)
    return FitResult(theta, bool(kkt <= 1e-8 + np.max(w[:, None] * np.abs(X))), it, kkt)


def _polish_vertex(tau, y, X, w, theta):
    # LP optima sit on a vertex: q rows interpolated exactly
    q = X.shape[1]
    r = y - X @ theta
    idx = np.argsort(np.abs(r))[:q]
    try:
        cand = np.linalg.solve(X[idx], y[idx])
    except np.linalg.LinAlgError:
        return theta
    f0 = w @ check_function(r, tau)
    fc = w @ check_function(y - X @ cand, tau)
    return cand if fc <= f0 + 1e-15 * max(1.0, abs(f0)) else theta
