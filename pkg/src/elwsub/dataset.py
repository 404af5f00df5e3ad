"""In-memory big dataset, standardization and auxiliary full-data summaries."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class DataMatrix:
    """Response ``y`` (N,) and covariates ``X`` (N, p)."""

    response: np.ndarray
    covariates: np.ndarray
    family_hint: Optional[str] = None
    intercept: bool = False
    names: tuple = field(default=())

    def __post_init__(self):
        y = np.asarray(self.response, dtype=float)
        X = np.asarray(self.covariates, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise DataError("response and covariates must have the same number of rows")
        if y.shape[0] < 2:
            raise DataError("need at least two observations")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise DataError("data contain non-finite values")
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "covariates", X)

    @property
    def n_rows(self) -> int:
        return self.response.shape[0]

    @property
    def n_params(self) -> int:
        return self.covariates.shape[1]

    def rows(self, idx) -> tuple[np.ndarray, np.ndarray]:
        return self.response[idx], self.covariates[idx]


@dataclass(frozen=True)
class AuxStatistic:
    """Centered auxiliary values ``h(Z_i) - h_bar`` (N, d) and ``h_bar`` (d,)."""

    h_values: np.ndarray
    h_bar: np.ndarray

    @property
    def d(self) -> int:
        return self.h_values.shape[1]

    def at(self, idx) -> np.ndarray:
        return self.h_values[idx]


@dataclass(frozen=True)
class StandardizationParams:
    means: np.ndarray
    scales: np.ndarray
    standardized_response: bool
    response_mean: float = 0.0
    response_scale: float = 1.0


def load_csv(path, response: int | str = 0, covariates: Optional[Sequence[int | str]] = None,
             header: bool = True, intercept: bool = False, family_hint=None) -> DataMatrix:
    """Read a numeric CSV file.

    ``response`` and ``covariates`` pick columns by index or (with a header)
    by name; by default every column other than the response is a covariate.
    Rows are numbered from 1 after the header in error messages.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    names = [c.strip() for c in rows[0]] if header else [f"x{j}" for j in range(len(rows[0]))]
    body = rows[1:] if header else rows
    if not body:
        raise DataError(f"{path}: no data rows")
    width = len(names)

    def col(key):
        if isinstance(key, str) and not key.lstrip("-").isdigit():
            if key not in names:
                raise DataError(f"{path}: no column named {key!r}")
            return names.index(key)
        j = int(key)
        if not -width <= j < width:
            raise DataError(f"{path}: column {j} out of range for width {width}")
        return j % width

    yj = col(response)
    xj = [j for j in range(width) if j != yj] if covariates is None else [col(c) for c in covariates]
    values = np.empty((len(body), width))
    for i, row in enumerate(body, start=1):
        if len(row) != width:
            raise DataError(f"{path}: row {i} has {len(row)} fields, expected {width}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {i}, column {names[j]!r}: malformed number {cell!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}: row {i}, column {names[j]!r}: non-finite value {cell!r}")
            values[i - 1, j] = v
    X = values[:, xj]
    xnames = tuple(names[j] for j in xj)
    if intercept:
        X = np.column_stack([np.ones(len(body)), X])
        xnames = ("intercept",) + xnames
    return DataMatrix(values[:, yj], X, family_hint, intercept, xnames)


def _intercept_columns(X) -> np.ndarray:
    return np.all(X == 1.0, axis=0)


def standardize(data: DataMatrix, standardize_response: bool = False):
    """Center and scale non-intercept covariates to mean 0 and sd 1 (N-1 divisor)."""
    X = data.covariates.copy()
    skip = _intercept_columns(X)
    means = np.where(skip, 0.0, X.mean(axis=0))
    sds = np.where(skip, 1.0, X.std(axis=0, ddof=1))
    for j in np.flatnonzero(~skip):
        if not sds[j] > 0:
            raise DataError(f"zero variance in column {j}")
    X = (X - means) / sds
    y, ym, ys = data.response, 0.0, 1.0
    if standardize_response:
        ym, ys = float(y.mean()), float(y.std(ddof=1))
        if not ys > 0:
            raise DataError("zero variance in the response")
        y = (y - ym) / ys
    params = StandardizationParams(means, sds, standardize_response, ym, ys)
    return replace(data, response=y, covariates=X), params


def compute_aux(data: DataMatrix, spec="centered_response") -> AuxStatistic:
    """Full-data auxiliary information centered at its full-data mean.

    ``spec`` is ``"centered_response"``, ``("covariate", j)`` or a sequence of
    column specs (``"y"`` or covariate indices); an empty sequence gives d=0.
    """
    if spec == "centered_response":
        cols = [data.response]
    elif isinstance(spec, tuple) and len(spec) == 2 and spec[0] == "covariate":
        cols = [data.covariates[:, spec[1]]]
    else:
        cols = [data.response if c == "y" else data.covariates[:, int(c)] for c in spec]
    N = data.n_rows
    if not cols:
        return AuxStatistic(np.zeros((N, 0)), np.zeros(0))
    H = np.column_stack(cols)
    h_bar = H.mean(axis=0)
    Hc = H - h_bar
    # second pass removes the residual rounding of the mean
    Hc -= Hc.mean(axis=0)
    return AuxStatistic(Hc, h_bar)
