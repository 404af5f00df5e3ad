"""Minimal subsample sizes for an MSE bound (M1) or an absolute-error target (M2)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.stats import chi2

from .design import PilotFit, fit_k, plan_probabilities, residual_norms, b_vectors, solve_gamma
from .estimators import variance_estimates

log = logging.getLogger(__name__)


class SizingError(ValueError):
    pass


def chi2_quantile(nu: float, p: float) -> float:
    """Quantile of the chi-square distribution with real ``nu > 0`` degrees of freedom."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if not nu > 0:
        raise ValueError("degrees of freedom must be positive")
    return float(chi2.ppf(p, nu))


@dataclass
class PrecisionSpec:
    kind: str
    c0: Optional[float] = None
    d: Optional[float] = None
    a: Optional[float] = None

    def __post_init__(self):
        if self.kind == "R1":
            if self.c0 is None or not self.c0 > 0 or self.d is not None:
                raise ValueError("R1 needs only a positive c0")
        elif self.kind == "R2":
            if self.c0 is not None or self.d is None or not self.d > 0 or not 0 < self.a < 1:
                raise ValueError("R2 needs d > 0 and a in (0, 1)")
        else:
            raise ValueError(f"unknown requirement {self.kind!r}")


def parse_requirement(text: str) -> PrecisionSpec:
    """Parse ``mse:<C0>`` or ``abserr:<d>,<a>``."""
    kind, _, rest = text.partition(":")
    if kind == "mse":
        return PrecisionSpec("R1", c0=float(rest))
    if kind == "abserr":
        d, _, a = rest.partition(",")
        return PrecisionSpec("R2", d=float(d), a=float(a) if a else 0.05)
    raise ValueError(f"cannot parse requirement {text!r}")


@dataclass
class SizeResult:
    n0: float
    r_second: float
    nu_star: Optional[float] = None
    iterations: int = 0
    clipped: bool = False


def second_capture_size(n0, r0, N):
    return N * (n0 - r0) / (N - r0)


def _result(n0, r0, N, nu_star=None, iterations=0, clipped=False):
    return SizeResult(float(n0), float(second_capture_size(n0, r0, N)), nu_star, iterations, clipped)


def mse_bound_scale(pilot: PilotFit, alpha0) -> float:
    """``(mean_j ||a_j - K b_j||)^2`` with K refit for ``alpha0``."""
    b = b_vectors(alpha0, pilot.h_pilot, pilot.m)
    K = fit_k(pilot.a_vectors, b)
    return float(residual_norms(pilot.a_vectors, b, K).mean() ** 2)


def size_m1(pilot: PilotFit, alpha10, N, c0, tol=1e-8, max_iter=200) -> SizeResult:
    """Solve ``n0 = C0^{-1} (mean ||a - K b||)^2`` by damped fixed-point iteration.

    The pilot should carry A-criterion influence vectors so the bound refers
    to the MSE of theta itself.
    """
    if not c0 > 0:
        raise SizingError("C0 must be positive")
    r0 = alpha10 * N
    lo_n, hi_n = r0 + 1.0, N - 1.0
    n0 = 2.0 * r0
    it = 0
    history = []
    for it in range(1, max_iter + 1):
        alpha0 = min(max(n0, lo_n), hi_n) / N
        rhs = mse_bound_scale(pilot, alpha0) / c0
        new = 0.5 * n0 + 0.5 * rhs
        history.append(new)
        if abs(new - n0) <= tol * max(abs(n0), 1.0):
            n0 = new
            break
        n0 = new
    else:
        tail = history[-10:]
        raise SizingError(f"M1 iteration did not settle; last bracket [{min(tail):.6g}, {max(tail):.6g}]")
    clipped = not lo_n <= n0 <= hi_n
    return _result(min(max(n0, lo_n), hi_n), r0, N, None, it, clipped)


def pilot_phi(pilot: PilotFit, alpha10, alpha0):
    """Plan inclusion probabilities of the pilot units at target ``alpha0``."""
    pf = pilot.at_alpha0(alpha0)
    gamma = solve_gamma(pf.norms, alpha10, alpha0)
    return plan_probabilities(pf.norms, pf.norms, gamma, alpha10)


def elw_variance_fn(pilot: PilotFit, y, X, alpha10, N, mode="standard") -> Callable:
    """Return ``n0 -> Sigma_ELW(n0)`` evaluated on the pilot units."""

    def fn(n0):
        alpha0 = n0 / N
        phi = pilot_phi(pilot, alpha10, alpha0)
        ve = variance_estimates(pilot.family, y, X, phi, pilot.theta_pilot, pilot.v_pilot,
                                alpha0, pilot.h_pilot, mode)
        if mode == "negligible":
            # Var(theta) ~ bn Sigma_* / N with bn = 1/alpha0
            return ve.sigma_elw / alpha0
        return ve.sigma_elw

    return fn


def nu_tilde(sigma) -> float:
    lam = np.linalg.eigvalsh(np.atleast_2d(sigma))
    return float(lam.sum() / (lam**2).sum())


def satterthwaite_df(sigma) -> float:
    lam = np.linalg.eigvalsh(np.atleast_2d(sigma))
    return float(lam.sum() ** 2 / (lam**2).sum())


def solve_nu_star(N, d, a, lo=1e-6, hi=1e6) -> float:
    """Root in nu of ``nu N d^2 = chi2_quantile(nu, 1 - a)`` (the two-step form)."""
    f = lambda t: math.exp(t) * N * d * d - chi2_quantile(math.exp(t), 1.0 - a)
    tlo, thi = math.log(lo), math.log(hi)
    if f(tlo) * f(thi) > 0:
        raise SizingError(f"nu* not bracketed in [{lo:g}, {hi:g}] for N={N}, d={d:g}")
    return math.exp(brentq(f, tlo, thi, xtol=1e-13, rtol=1e-13))


def size_m2(variance_fn: Callable, N, d, a, r0, method="satterthwaite",
            tol=1e-6) -> SizeResult:
    """Smallest ``n0`` whose ELW covariance meets ``P(||err|| <= d) >= 1 - a``.

    ``method="satterthwaite"`` matches the weighted chi-square
    ``sum lambda_k zeta_k^2`` by ``c * chi2_f`` with ``c = 1/nu`` and
    ``f = (sum lambda)^2 / sum lambda^2`` and solves
    ``nu(n0) N d^2 = chi2_f(n0)(1 - a)``.  ``method="two_step"`` first solves
    ``nu N d^2 = chi2_nu(1 - a)`` for ``nu*`` and then ``nu(n0) = nu*``.
    """
    if not d > 0 or not 0 < a < 1:
        raise SizingError("need d > 0 and a in (0, 1)")
    lo_n, hi_n = r0 + 1.0, N - 1.0
    if method == "two_step":
        nu_star = solve_nu_star(N, d, a)

        def F(n0):
            return nu_tilde(variance_fn(n0)) - nu_star
    elif method == "satterthwaite":
        nu_star = None

        def F(n0):
            S = variance_fn(n0)
            return nu_tilde(S) * N * d * d - chi2_quantile(satterthwaite_df(S), 1.0 - a)
    else:
        raise ValueError(f"unknown method {method!r}")

    seen = {}

    def G(n0):
        if n0 not in seen:
            seen[n0] = F(n0)
        return seen[n0]

    f_lo, f_hi = G(lo_n), G(hi_n)
    if f_lo >= 0:
        return _finish(lo_n, r0, N, variance_fn, nu_star, 1, True, method)
    if f_hi < 0:
        return _finish(hi_n, r0, N, variance_fn, nu_star, 1, True, method)
    a_n, b_n = lo_n, hi_n
    it = 0
    while b_n - a_n > tol * b_n and it < 200:
        it += 1
        mid = 0.5 * (a_n + b_n)
        if G(mid) >= 0:
            b_n = mid
        else:
            a_n = mid
    pts = sorted(seen.items())
    vals = [v for _, v in pts]
    if any(v2 < v1 - 1e-12 * max(abs(v1), 1.0) for v1, v2 in zip(vals, vals[1:])):
        log.warning("nu(n0) not monotone; switching to a grid scan")
        grid = np.geomspace(lo_n, hi_n, 64)
        fg = np.array([G(float(g)) for g in grid])
        k = int(np.argmax(fg >= 0))
        a_n, b_n = float(grid[max(k - 1, 0)]), float(grid[k])
        while b_n - a_n > tol * b_n:
            it += 1
            mid = 0.5 * (a_n + b_n)
            if G(mid) >= 0:
                b_n = mid
            else:
                a_n = mid
    return _finish(b_n, r0, N, variance_fn, nu_star, it, False, method)


def _finish(n0, r0, N, variance_fn, nu_star, it, clipped, method):
    if nu_star is None:
        nu_star = nu_tilde(variance_fn(n0))
    return _result(n0, r0, N, nu_star, it, clipped)
