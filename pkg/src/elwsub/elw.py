"""Empirical likelihood weights for a capture-recapture sample.

For sampled units with overall inclusion probabilities ``phi_i`` the
weights maximize ``sum log p_i`` subject to ``p_i > 0``, ``sum p_i = 1``
and ``sum p_i he_i = 0`` where ``he_i = (phi_i - alpha0, h_i)``.  They take
the form ``p_i = 1 / (n (1 + lambda' he_i))`` with ``lambda`` maximizing the
concave dual ``g(lambda) = sum log(1 + lambda' he_i)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)

GRAD_TOL = 1e-10
MAX_ITER = 200
COLLAPSE_STEP = 1e-14
COLLAPSE_GRAD = 1e-6
COLLAPSE_COUNT = 5
DIVERGENCE = 1e10


class ELInfeasibleError(RuntimeError):
    """The origin is not inside the convex hull of the constraint rows."""


@dataclass
class ConstraintMatrix:
    he: np.ndarray
    mode: str
    alpha0: float
    bn: float = 1.0

    @property
    def d(self) -> int:
        return self.he.shape[1] - 1


@dataclass
class ELWSolution:
    lam: np.ndarray
    p: np.ndarray
    status: str
    iterations: int
    alpha_hat: Optional[float] = None


def build_constraints(phi_sampled, alpha0, aux_sampled=None, mode="standard",
                      bn=None) -> ConstraintMatrix:
    """Stack rows ``(phi_i - alpha0, h_i)`` for the sampled units.

    In ``negligible`` mode the first component is multiplied by ``bn``
    (``phi_* = bn*phi`` and ``alpha_* = bn*alpha0``; default ``bn =
    1/alpha0``).  The factor is absorbed by the multiplier, so the weights
    coincide with the standard mode.
    """
    phi = np.asarray(phi_sampled, dtype=float)
    first = phi - alpha0
    if mode == "negligible":
        bn = 1.0 / alpha0 if bn is None else float(bn)
        first = bn * first
    elif mode == "standard":
        bn = 1.0
    else:
        raise ValueError(f"unknown mode {mode!r}")
    cols = [first[:, None]]
    if aux_sampled is not None:
        h = np.asarray(aux_sampled, dtype=float)
        if h.ndim == 1:
            h = h[:, None]
        if h.shape[0] != phi.shape[0]:
            raise ValueError(
                f"alignment mismatch: {h.shape[0]} auxiliary rows for {phi.shape[0]} sampled units")
        if h.shape[1]:
            cols.append(h)
    return ConstraintMatrix(np.hstack(cols), mode, float(alpha0), bn)


def dual(lam, he):
    return float(np.sum(np.log1p(he @ lam)))


def solve_lambda(constraints, tol=GRAD_TOL, max_iter=MAX_ITER) -> ELWSolution:
    """Maximize the EL dual by damped Newton; raise ELInfeasibleError if unbounded.

    Convergence is judged on the constraint residual ``sum p_i he_i`` with
    ``p`` normalized to sum one, i.e. the dual gradient divided by
    ``sum 1/(1 + lambda' he_i)``.
    """
    he = constraints.he if isinstance(constraints, ConstraintMatrix) else np.asarray(constraints, float)
    if he.ndim == 1:
        he = he[:, None]
    n, k = he.shape
    if n <= k:
        raise ValueError(f"need more sampled units ({n}) than constraints ({k})")
    if not np.any(he):
        # every constraint holds for any weights; the maximizer is uniform
        return _solution(np.zeros(k), np.ones(n), n, 0)
    if np.all(np.ptp(he, axis=0) == 0):
        raise ValueError("degenerate constraint matrix: all rows are identical")
    floor = 1.0 / n**2
    hmax = np.max(np.abs(he))
    lam = np.zeros(k)
    u = np.ones(n)
    g = dual(lam, he)
    collapsed = 0
    for it in range(1, max_iter + 1):
        inv = 1.0 / u
        grad = he.T @ inv
        gnorm = np.max(np.abs(grad)) / inv.sum()
        if gnorm <= tol:
            return _solution(lam, u, n, it - 1)
        hess = (he * inv[:, None] ** 2).T @ he
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        slope = grad @ step
        if not slope > 0:
            step, slope = grad, grad @ grad
        t = 1.0
        while t >= COLLAPSE_STEP:
            cand = lam + t * step
            uc = 1.0 + he @ cand
            if np.all(uc > floor):
                gc = float(np.sum(np.log(uc)))
                if gc >= g + 1e-4 * t * slope:
                    break
            t *= 0.5
        if t < COLLAPSE_STEP:
            collapsed += 1
            if gnorm > COLLAPSE_GRAD and collapsed >= COLLAPSE_COUNT:
                raise ELInfeasibleError("dual line search collapsed away from stationarity")
            if gnorm <= 1e-8:
                # stationary to floating-point resolution
                return _solution(lam, u, n, it)
            continue
        collapsed = 0
        lam, u, g = cand, uc, gc
        if np.max(np.abs(lam)) * hmax > DIVERGENCE:
            raise ELInfeasibleError("dual is unbounded: origin outside the convex hull")
    inv = 1.0 / u
    gnorm = np.max(np.abs(he.T @ inv)) / inv.sum()
    if gnorm <= 1e-8:
        return _solution(lam, u, n, max_iter)
    raise ELInfeasibleError(f"dual Newton did not converge (gradient {gnorm:.3g})")


def _solution(lam, u, n, iterations, status="constrained"):
    p = 1.0 / (n * u)
    return ELWSolution(lam, p / p.sum(), status, iterations)


def _profile(phi, alpha, N):
    sol = solve_lambda(phi[:, None] - alpha)
    n = phi.size
    return float(np.sum(np.log(sol.p)) + (N - n) * np.log1p(-alpha)), sol


def fallback_unknown_alpha(phi_sampled, N, tol=1e-8) -> ELWSolution:
    """Weights maximizing the profile log-EL with alpha treated as unknown.

    For each alpha the inner problem only imposes ``sum p_i (phi_i - alpha)
    = 0``; the outer profile in alpha is maximized by golden-section search
    over the open range of the sampled ``phi``.
    """
    phi = np.asarray(phi_sampled, dtype=float)
    lo, hi = float(phi.min()), float(phi.max())
    if hi - lo <= 0:
        raise ValueError("fallback needs at least two distinct inclusion probabilities")
    pad = 1e-9 * (hi - lo)
    a, b = lo + pad, min(hi, 1.0 - 1e-12) - pad
    ratio = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - ratio * (b - a)
    e = a + ratio * (b - a)
    fc = _profile(phi, c, N)[0]
    fe = _profile(phi, e, N)[0]
    it = 0
    while b - a > tol:
        it += 1
        if fc >= fe:
            b, e, fe = e, c, fc
            c = b - ratio * (b - a)
            fc = _profile(phi, c, N)[0]
        else:
            a, c, fc = c, e, fe
            e = a + ratio * (b - a)
            fe = _profile(phi, e, N)[0]
    alpha_hat = 0.5 * (a + b)
    _, sol = _profile(phi, alpha_hat, N)
    return ELWSolution(sol.lam, sol.p, "fallback_unknown_alpha", it, alpha_hat)


def elw_weights(phi_sampled, alpha0, N, aux_sampled=None, mode="standard", bn=None):
    """Constrained EL weights, falling back to the unknown-alpha weights."""
    cm = build_constraints(phi_sampled, alpha0, aux_sampled, mode, bn)
    try:
        return solve_lambda(cm)
    except ELInfeasibleError as exc:
        log.info("EL constraints infeasible (%s); using unknown-alpha weights", exc)
        return fallback_unknown_alpha(phi_sampled, N)
