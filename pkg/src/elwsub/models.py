"""Loss functions, scores and the curvature matrix V for supported regressions.

All functions are vectorized over rows: ``y`` has shape (n,), ``X`` has
shape (n, q) and ``theta`` shape (q,).  The Poisson loss omits ``log(y!)``
since it does not depend on ``theta``; loss values are therefore only
comparable within one family and dataset.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

EXP_CLAMP = 30.0
KINDS = ("poisson", "logistic", "ols", "quantile")


@dataclass(frozen=True)
class ModelFamily:
    kind: str
    tau: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model family {self.kind!r}")
        if self.kind == "quantile":
            if self.tau is None or not 0.0 < self.tau < 1.0:
                raise ValueError("quantile family needs tau in (0, 1)")
        elif self.tau is not None:
            raise ValueError(f"tau is only meaningful for quantile, not {self.kind}")

    @property
    def smooth(self) -> bool:
        return self.kind != "quantile"

    def __str__(self):
        return f"quantile:{self.tau:g}" if self.kind == "quantile" else self.kind


def parse_family(text: str) -> ModelFamily:
    """Parse ``poisson | logistic | ols | quantile:<tau>``."""
    text = text.strip().lower()
    if text.startswith("quantile"):
        _, _, tau = text.partition(":")
        return ModelFamily("quantile", float(tau) if tau else 0.5)
    if text in ("ls", "leastsquares", "least_squares"):
        text = "ols"
    return ModelFamily(text)


@dataclass
class VEstimate:
    matrix: np.ndarray
    bandwidth: Optional[float] = None
    singular: bool = False


def _check(X, theta):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or X.shape[1] != theta.shape[0]:
        raise ValueError(
            f"dimension mismatch: theta has {theta.size} entries, X has {X.shape[1]} columns")
    return X, theta


def _exp(eta):
    return np.exp(np.clip(eta, -EXP_CLAMP, EXP_CLAMP))


def _expit(eta):
    return expit(np.clip(eta, -EXP_CLAMP, EXP_CLAMP))


def check_function(u, tau):
    """Quantile check function rho_tau(u) = u * (tau - I(u < 0))."""
    u = np.asarray(u, dtype=float)
    return u * (tau - (u < 0))


def loss(family: ModelFamily, y, X, theta) -> np.ndarray:
    """Per-row loss l(z_i, theta)."""
    X, theta = _check(X, theta)
    y = np.asarray(y, dtype=float)
    eta = X @ theta
    if family.kind == "poisson":
        return -y * eta + _exp(eta)
    if family.kind == "logistic":
        # log(1 + e^eta) evaluated stably
        return -y * eta + np.logaddexp(0.0, eta)
    if family.kind == "ols":
        return (y - eta) ** 2
    return check_function(y - eta, family.tau)


def mean_function(family: ModelFamily, eta):
    if family.kind == "poisson":
        return _exp(eta)
    if family.kind == "logistic":
        return _expit(eta)
    return eta


def score(family: ModelFamily, y, X, theta) -> np.ndarray:
    """Per-row gradient of the loss in theta, shape (n, q)."""
    X, theta = _check(X, theta)
    y = np.asarray(y, dtype=float)
    eta = X @ theta
    if family.kind == "poisson":
        c = -y + _exp(eta)
    elif family.kind == "logistic":
        c = -y + _expit(eta)
    elif family.kind == "ols":
        c = -2.0 * (y - eta)
    else:
        c = -(family.tau - (y - eta < 0))
    return c[:, None] * X


def curvature(family: ModelFamily, y, X, theta) -> np.ndarray:
    """Per-row second-derivative factor c_i with Hessian = sum c_i x_i x_i^T.

    Not defined for the quantile family.
    """
    X, theta = _check(X, theta)
    eta = X @ theta
    if family.kind == "poisson":
        return _exp(eta)
    if family.kind == "logistic":
        p = _expit(eta)
        return p * (1.0 - p)
    if family.kind == "ols":
        return np.full(X.shape[0], 2.0)
    raise ValueError("quantile loss has no second derivative")


def mad_scale(r):
    return 1.4826 * np.median(np.abs(r - np.median(r)))


def quantile_bandwidth(residuals, c=1.06):
    """Rule-of-thumb bandwidth c * robust_scale * m^(-1/5)."""
    m = residuals.size
    s = mad_scale(residuals)
    if s <= 0:
        s = np.std(residuals, ddof=1) if m > 1 else 1.0
    return c * s * m ** (-0.2)


def estimate_v(family: ModelFamily, y, X, theta, bandwidth=None, c=1.06) -> VEstimate:
    """Sample-mean plug-in estimate of V at ``theta``.

    For smooth families this is the mean of ``c_i x_i x_i^T``, except that
    least squares uses E(XX^T), half the Hessian of the squared loss.  The quantile family uses the
    Powell kernel estimator with a Gaussian kernel.
    """
    X, theta = _check(X, theta)
    y = np.asarray(y, dtype=float)
    m, q = X.shape
    if m < q + 1:
        raise ValueError(f"need at least q+1={q + 1} rows to estimate V, got {m}")
    h = None
    if family.kind == "quantile":
        r = y - X @ theta
        h = quantile_bandwidth(r, c) if bandwidth is None else float(bandwidth)
        w = np.exp(-0.5 * (r / h) ** 2) / np.sqrt(2 * np.pi) / h
    elif family.kind == "ols":
        w = np.ones(m)
    else:
        w = curvature(family, y, X, theta)
    V = (X * w[:, None]).T @ X / m
    V = 0.5 * (V + V.T)
    eig = np.linalg.eigvalsh(V)
    singular = bool(eig[0] <= 1e-12 * max(eig[-1], 1e-300))
    return VEstimate(V, h, singular)


def hessian_scale(family: ModelFamily) -> float:
    """Ratio between the loss Hessian and V (2 for least squares, else 1)."""
    return 2.0 if family.kind == "ols" else 1.0
