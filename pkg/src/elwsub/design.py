"""Nearly optimal capture-recapture sampling plans.

The second-capture plan assigns each unit an overall inclusion probability
proportional to the norm of its projected influence vector
``a_i - K b_i``, clipped into ``[alpha10, 1]`` with a level chosen so that
the mean inclusion probability over the pilot equals ``alpha0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .models import ModelFamily, VEstimate, estimate_v, hessian_scale, score
from .solver import fit

log = logging.getLogger(__name__)

CRITERIA = ("A", "L")


class DesignError(ValueError):
    pass


def influence_vectors(family: ModelFamily, y, X, theta, v: VEstimate, criterion="A"):
    """Rows ``V^{-1} score`` (A-criterion) or ``score`` (L-criterion)."""
    s = score(family, y, X, theta)
    if criterion == "L":
        return s
    if criterion != "A":
        raise ValueError(f"unknown criterion {criterion!r}")
    V = hessian_scale(family) * v.matrix
    return np.linalg.solve(V, s.T).T


def b_vectors(alpha0, h=None, m=None):
    """Rows ``(-alpha0, h_i)``."""
    if h is None or np.size(h) == 0:
        return np.full((m if h is None else np.shape(h)[0], 1), -alpha0)
    h = np.asarray(h, dtype=float)
    if h.ndim == 1:
        h = h[:, None]
    return np.column_stack([np.full(h.shape[0], -alpha0), h])


def fit_k(a, b, ridge=1e-10):
    """Least-squares ``K = (sum a b^T)(sum b b^T)^{-1}``."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    G = b.T @ b
    try:
        if np.linalg.cond(G) > 1e12:
            raise np.linalg.LinAlgError
        return np.linalg.solve(G, b.T @ a).T
    except np.linalg.LinAlgError:
        log.warning("collinear auxiliary vectors; ridging the Gram matrix")
        G = G + ridge * np.trace(G) * np.eye(G.shape[0])
        return np.linalg.solve(G, b.T @ a).T


def residual_norms(a, b, K):
    return np.linalg.norm(a - b @ K.T, axis=1)


def clipped_mean(gamma, u, alpha10):
    return float(np.mean(np.clip(gamma * u, alpha10, 1.0)))


def solve_gamma(norms, alpha10, alpha0, tol=1e-10) -> float:
    """Smallest gamma with ``mean(clip(gamma * u, alpha10, 1)) == alpha0``.

    ``u`` is ``norms / mean(norms)``.  The map is nondecreasing and
    piecewise linear, so bisection brackets the left-most root and the
    final value is solved exactly on its linear piece.
    """
    norms = np.asarray(norms, dtype=float)
    if np.any(norms < 0) or not np.any(norms > 0):
        raise DesignError("norms must be nonnegative and not all zero")
    if alpha0 >= 1.0:
        raise DesignError("requested alpha0 infeasible: must be below 1")
    if alpha0 <= alpha10:
        log.warning("alpha0 <= alpha10: second capture is empty, gamma = 0")
        return 0.0
    u = norms / norms.mean()
    ceiling = np.mean(np.where(u > 0, 1.0, alpha10))
    if alpha0 > ceiling + tol:
        raise DesignError(f"requested alpha0 infeasible: at most {ceiling:.6g} reachable")
    lo, hi = 0.0, 1.0 / u[u > 0].min() + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if clipped_mean(mid, u, alpha10) < alpha0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    # exact solve on the linear piece containing the bracket
    g = hi
    low = g * u <= alpha10
    top = g * u >= 1.0
    mid_sum = u[~low & ~top].sum()
    m = u.size
    if mid_sum > 0:
        exact = (m * alpha0 - alpha10 * low.sum() - top.sum()) / mid_sum
        if lo - 1e-12 * hi <= exact <= hi + 1e-12 * hi and \
                abs(clipped_mean(exact, u, alpha10) - alpha0) <= abs(clipped_mean(g, u, alpha10) - alpha0):
            g = exact
    if abs(clipped_mean(g, u, alpha10) - alpha0) > tol:
        raise DesignError("gamma bisection failed to reach the target mean")
    return float(g)


@dataclass
class PilotFit:
    """Quantities estimated from the first-capture (uniform pilot) sample."""

    family: ModelFamily
    theta_pilot: np.ndarray
    v_pilot: VEstimate
    criterion: str
    a_vectors: np.ndarray
    h_pilot: Optional[np.ndarray]
    alpha0: float
    b_vectors: np.ndarray
    k_matrix: np.ndarray
    norms: np.ndarray
    converged: bool = True

    @property
    def m(self) -> int:
        return self.a_vectors.shape[0]

    def at_alpha0(self, alpha0, project=True) -> "PilotFit":
        """Refit K and the residual norms for a different target ``alpha0``."""
        b = b_vectors(alpha0, self.h_pilot, self.m)
        K = fit_k(self.a_vectors, b) if project else np.zeros((self.a_vectors.shape[1], b.shape[1]))
        return replace(self, alpha0=alpha0, b_vectors=b, k_matrix=K,
                       norms=residual_norms(self.a_vectors, b, K))


def pilot_fit(family, y, X, alpha0, h=None, criterion="A", theta_init=None,
              bandwidth=None, project=True) -> PilotFit:
    """Fit theta, V, the influence vectors and K on a uniform pilot sample."""
    res = fit(family, y, X, np.ones(len(y)), theta_init)
    v = estimate_v(family, y, X, res.theta_hat, bandwidth)
    if v.singular:
        raise DesignError("pilot estimate of V is singular")
    a = influence_vectors(family, y, X, res.theta_hat, v, criterion)
    hp = None if h is None or np.size(h) == 0 else np.asarray(h, float).reshape(len(y), -1)
    pf = PilotFit(family, res.theta_hat, v, criterion, a, hp, alpha0,
                  np.empty((len(y), 0)), np.empty((a.shape[1], 0)), np.empty(0), res.converged)
    return pf.at_alpha0(alpha0, project)


@dataclass
class DesignOutput:
    phi_e: np.ndarray
    pi: np.ndarray
    gamma: float
    norms: np.ndarray
    alpha10: float
    alpha0: float

    @property
    def realized_alpha0(self) -> float:
        return float(self.phi_e.mean())


def plan_probabilities(norms_all, pilot_norms, gamma, alpha10):
    return np.clip(gamma * norms_all / pilot_norms.mean(), alpha10, 1.0)


def build_plan(pilot: PilotFit, y, X, h, alpha10, alpha0=None, project=True,
               a_all=None, shrinkage=0.0) -> DesignOutput:
    """Evaluate the clipped plan for every unit of the big dataset.

    ``gamma`` and the normalizing mean use the pilot only; each unit's own
    influence vector at the pilot estimate enters the numerator.  With
    ``project=False`` the projection ``K`` is dropped, which gives the plan
    minimizing the inverse-probability-weighted variance bound.  ``a_all``
    may carry precomputed influence vectors of all units.  ``shrinkage``
    mixes the result with the constant plan ``alpha0``, which keeps the
    pilot mean and the bounds ``[alpha10, 1]``.
    """
    if not 0.0 <= shrinkage <= 1.0:
        raise ValueError("shrinkage must lie in [0, 1]")
    if alpha0 is None:
        alpha0 = pilot.alpha0
    if alpha0 != pilot.alpha0 or not project:
        pilot = pilot.at_alpha0(alpha0, project)
    gamma = solve_gamma(pilot.norms, alpha10, alpha0)
    a = a_all if a_all is not None else influence_vectors(
        pilot.family, y, X, pilot.theta_pilot, pilot.v_pilot, pilot.criterion)
    hh = None if pilot.h_pilot is None else h
    b = b_vectors(alpha0, hh, len(y))
    norms_all = residual_norms(a, b, pilot.k_matrix)
    phi_e = plan_probabilities(norms_all, pilot.norms, gamma, alpha10)
    if shrinkage > 0.0:
        phi_e = (1.0 - shrinkage) * phi_e + shrinkage * alpha0
    pi = (phi_e - alpha10) / (1.0 - alpha10)
    return DesignOutput(phi_e, np.clip(pi, 0.0, 1.0), gamma, pilot.norms, alpha10, alpha0)


# objective functions, used for checks and audits

def _sums(phi, a, b):
    w = 1.0 / np.asarray(phi, dtype=float)
    Sab = (a * w[:, None]).T @ b
    Sbb = (b * w[:, None]).T @ b
    return w, Sab, Sbb


def h_star(phi, a, b, alpha0):
    """Plug-in N * MSE criterion including the ``-alpha0 e1 e1^T`` correction."""
    N = len(phi)
    w, Sab, Sbb = _sums(phi, a, b)
    Sbb = Sbb.copy()
    Sbb[0, 0] -= N * alpha0
    return float(w @ np.sum(a**2, axis=1) / N - np.trace(Sab @ np.linalg.solve(Sbb, Sab.T)) / N)


def h_upper(phi, a, b):
    """Upper bound ``H`` obtained by dropping the correction term."""
    N = len(phi)
    w, Sab, Sbb = _sums(phi, a, b)
    return float(w @ np.sum(a**2, axis=1) / N - np.trace(Sab @ np.linalg.solve(Sbb, Sab.T)) / N)


def h1(phi, a, b, K):
    r = residual_norms(a, b, K)
    return float(np.mean(r**2 / np.asarray(phi, dtype=float)))


def h2(K, a, b):
    return float(residual_norms(a, b, K).sum())


def eval_h_star(phi, a, b, alpha0=None, variant="star", K=None):
    """Evaluate ``H_*`` (``variant="star"``), ``H``, ``H1`` or ``H2``."""
    if variant == "star":
        return h_star(phi, a, b, alpha0)
    if variant == "H":
        return h_upper(phi, a, b)
    if K is None:
        K = fit_k(a, b)
    if variant == "H1":
        return h1(phi, a, b, K)
    if variant == "H2":
        return h2(K, a, b)
    raise ValueError(f"unknown variant {variant!r}")
