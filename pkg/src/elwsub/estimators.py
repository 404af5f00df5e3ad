"""UNIF, IPW, ELW and ELWAI estimators and their plug-in variance matrices."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .capture import CaptureSample
from .dataset import AuxStatistic, DataMatrix
from .elw import elw_weights
from .models import ModelFamily, VEstimate, hessian_scale, score
from .solver import FitResult, fit

log = logging.getLogger(__name__)

KINDS = ("UNIF", "IPW", "ELW", "ELWAI")


@dataclass
class Estimate:
    kind: str
    fit: FitResult
    indices: np.ndarray
    weights: np.ndarray
    el_status: Optional[str] = None

    @property
    def theta_hat(self):
        return self.fit.theta_hat


def estimate(kind: str, sample: CaptureSample, data: DataMatrix, family: ModelFamily,
             alpha0: Optional[float] = None, aux: Optional[AuxStatistic] = None,
             theta_init=None, mode="standard") -> Estimate:
    """Fit ``kind`` on the units of ``sample``.

    UNIF expects ``sample`` to be a uniform draw and weights its units
    equally.  IPW weights each unit by ``1/phi_i``.  ELW and ELWAI use the
    empirical likelihood weights, the latter with the auxiliary columns of
    ``aux``.  ``alpha0`` defaults to the mean of ``sample.phi``, which is the
    expected sampling fraction of the plan that produced the sample.
    """
    kind = kind.upper()
    idx = sample.sampled_indices
    if idx.size == 0:
        raise ValueError("empty sample")
    y, X = data.rows(idx)
    phi = sample.phi[idx]
    status = None
    if kind == "UNIF":
        w = np.full(idx.size, 1.0 / idx.size)
    elif kind == "IPW":
        if np.any(phi <= 0):
            raise ValueError("IPW needs positive inclusion probabilities")
        w = 1.0 / phi
    elif kind in ("ELW", "ELWAI"):
        if alpha0 is None:
            alpha0 = float(np.mean(sample.phi))
        h = None
        if kind == "ELWAI":
            if aux is None or aux.d == 0:
                raise ValueError("ELWAI requires a nonempty auxiliary statistic")
            h = aux.at(idx)
        sol = elw_weights(phi, alpha0, data.n_rows, h, mode)
        w, status = sol.p, sol.status
    else:
        raise ValueError(f"unknown estimator {kind!r}")
    res = fit(family, y, X, w, theta_init)
    return Estimate(kind, res, idx, w, status)


@dataclass
class VarianceEstimates:
    b_ll: np.ndarray
    b_lh: np.ndarray
    b_hh: np.ndarray
    b_l1: np.ndarray
    b_11: float
    sigma_ipw: np.ndarray
    sigma_elw: np.ndarray
    sigma_elw0: np.ndarray
    ridged: bool = False
    mode: str = "standard"
    notes: list = field(default_factory=list)


def variance_estimates(family: ModelFamily, y, X, phi, theta_ref, v: VEstimate, alpha0,
                       h=None, mode="standard", bn=None) -> VarianceEstimates:
    """Sample-mean plug-ins of the B matrices and the asymptotic covariances.

    ``y, X, phi`` (and ``h``) describe the units the means are taken over,
    normally the first-capture pilot, with ``phi`` their overall inclusion
    probabilities under the plan.  In ``negligible`` mode ``phi`` and
    ``alpha0`` are rescaled by ``bn`` (default ``1/alpha0``) and the
    resulting matrices are the C-type limits.
    """
    if not 0.0 < alpha0 < 1.0:
        raise ValueError("alpha0 must lie in (0, 1)")
    phi = np.asarray(phi, dtype=float)
    if np.any(phi <= 0):
        raise ValueError("inclusion probabilities must be positive")
    if mode == "negligible":
        bn = 1.0 / alpha0 if bn is None else float(bn)
        phi, alpha0 = bn * phi, bn * alpha0
    elif mode != "standard":
        raise ValueError(f"unknown mode {mode!r}")
    m = phi.size
    s = score(family, y, X, theta_ref)
    hcols = np.zeros((m, 0)) if h is None else np.asarray(h, dtype=float).reshape(m, -1)
    b = np.column_stack([np.full(m, -alpha0), hcols])
    w = 1.0 / phi
    b_ll = (s * w[:, None]).T @ s / m
    b_lh = (s * w[:, None]).T @ b / m
    b_hh = (b * w[:, None]).T @ b / m
    b_hh[0, 0] -= alpha0
    b_l1 = s.T @ w / m
    b_11 = float(w.mean())
    k = b_hh.shape[0]
    notes = []
    eig = np.linalg.eigvalsh(b_hh)
    scale = max(np.trace(np.abs(b_hh)), 1e-300)
    ridged = bool(eig[0] <= 1e-12 * scale)
    if ridged:
        ridge = -min(eig[0], 0.0) + 1e-8 * scale / k
        b_hh = b_hh + ridge * np.eye(k)
        notes.append(f"B_hh ridged by {ridge:.3g}")
        log.warning("plug-in B_hh not positive definite; ridge %.3g applied", ridge)
    Vi = np.linalg.inv(hessian_scale(family) * v.matrix)
    Vi = 0.5 * (Vi + Vi.T)
    proj = b_lh @ np.linalg.solve(b_hh, b_lh.T)
    first = b_lh[:, :1]
    proj0 = first @ first.T / b_hh[0, 0]

    def sandwich(M):
        S = Vi @ M @ Vi
        return 0.5 * (S + S.T)

    return VarianceEstimates(
        b_ll, b_lh, b_hh, b_l1, b_11,
        sigma_ipw=sandwich(b_ll),
        sigma_elw=sandwich(b_ll - proj),
        sigma_elw0=sandwich(b_ll - proj0),
        ridged=ridged, mode=mode, notes=notes)
