"""Stage 2: local loading spaces from lagged autocovariances.

The estimated global row (column) space is projected out, leaving
``Y1_t = B1' X_t`` and ``Y2_t = B2' X_t'``. For a projected series with rows
``y_{t,i}`` the lag-``h`` cross moments are

    Pi_ij(h) = 1/(T-h) sum_{t <= T-h} y_{t,i} y_{t+h,j}'

and ``M = sum_{h=1}^{h0} sum_{i,j} Pi_ij(h) Pi_ij(h)'``. Its leading
eigenvectors span the local loading space in the column direction of ``Y``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PanelError
from .global_est import GlobalFit, make_ladder
from .numerics import sym_eig
from .types import Ladder


@dataclass(frozen=True)
class ProjectedSeries:
    Y1: np.ndarray  # (T, N - k1, p)
    Y2: np.ndarray  # (T, p - k2, N)


def project(X: np.ndarray, B1: np.ndarray, B2: np.ndarray) -> ProjectedSeries:
    X = np.asarray(X, dtype=float)
    if X.ndim != 3 or X.shape[1] != B1.shape[0] or X.shape[2] != B2.shape[0]:
        raise PanelError(f"shape mismatch: X {X.shape}, B1 {B1.shape}, B2 {B2.shape}")
    return ProjectedSeries(Y1=B1.T @ X, Y2=B2.T @ X.transpose(0, 2, 1))


def lag_moment(Y: np.ndarray, h: int) -> np.ndarray:
    """``P[i, k, j, l] = 1/(T-h) sum_t Y[t, i, k] Y[t+h, j, l]``."""
    T, r, c = Y.shape
    A = Y[: T - h].reshape(T - h, r * c)
    B = Y[h:].reshape(T - h, r * c)
    return ((A.T @ B) / (T - h)).reshape(r, c, r, c)


def compute_M(Y: np.ndarray, h0: int = 2) -> np.ndarray:
    """Lag-autocovariance statistic of a projected series ``(T, rows, cols)``.

    Returns a ``cols x cols`` symmetric PSD matrix.
    """
    Y = np.asarray(Y, dtype=float)
    T, _, c = Y.shape
    if h0 < 1:
        raise ValueError("h0 must be >= 1")
    if h0 >= T:
        raise PanelError("insufficient length for lag")
    M = np.zeros((c, c))
    for h in range(1, h0 + 1):
        P = lag_moment(Y, h)
        A = np.moveaxis(P, 1, 0).reshape(c, -1)
        M += A @ A.T
    return 0.5 * (M + M.T)


def local_statistics(X: np.ndarray, B1: np.ndarray, B2: np.ndarray, h0: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """``(M_col, M_row)``: :func:`compute_M` of ``Y1`` and of ``Y2`` in one pass.

    Both projected series are linear images of ``X``, so one lag moment of
    ``X`` per lag is projected instead of forming two moments of the
    projected series.
    """
    X = np.asarray(X, dtype=float)
    T, n, p = X.shape
    if h0 < 1:
        raise ValueError("h0 must be >= 1")
    if h0 >= T:
        raise PanelError("insufficient length for lag")
    M_col = np.zeros((p, p))
    M_row = np.zeros((n, n))
    for h in range(1, h0 + 1):
        P = lag_moment(X, h)  # (a, j, b, l)
        # Y1 = B1' X: rows a, b -> B1 coordinates; keep column j in front
        U = np.tensordot(B1, P, axes=(0, 0))  # (i, j, b, l)
        U = np.tensordot(U, B1, axes=(2, 0))  # (i, j, l, k)
        A = np.moveaxis(U, 1, 0).reshape(p, -1)
        M_col += A @ A.T
        # Y2 = B2' X': columns j, l -> B2 coordinates; row a stays
        V = np.tensordot(P, B2, axes=(1, 0))  # (a, b, l, c)
        V = np.tensordot(V, B2, axes=(2, 0))  # (a, b, c, d)
        A = V.reshape(n, -1)
        M_row += A @ A.T
    return 0.5 * (M_col + M_col.T), 0.5 * (M_row + M_row.T)


@dataclass
class LocalFit:
    Q3: np.ndarray
    Q4: np.ndarray
    row_ladder: Ladder  # from Y2, N x N
    col_ladder: Ladder  # from Y1, p x p
    projected: ProjectedSeries


def fit_local(
    X: np.ndarray,
    B1: np.ndarray,
    B2: np.ndarray,
    r1: int | None = None,
    r2: int | None = None,
    h0: int = 2,
) -> LocalFit:
    """Estimate ``Q3`` (rows) and ``Q4`` (columns) for one group.

    ``Q4`` comes from the statistic built on ``Y1`` (a ``p x p`` matrix) and
    ``Q3`` from the one built on ``Y2`` (``N x N``). Missing ranks use the ratio
    estimator with caps ``p`` and ``N``.
    """
    proj = project(X, B1, B2)
    n, p = X.shape[1], X.shape[2]
    M_col, M_row = local_statistics(X, B1, B2, h0)
    e_col = sym_eig(M_col)
    e_row = sym_eig(M_row)
    col = make_ladder(e_col.values, p, r2)
    row = make_ladder(e_row.values, n, r1)
    # local spaces must fit inside the complements of the global ones
    if not 1 <= row.used <= B1.shape[1] or not 1 <= col.used <= B2.shape[1]:
        raise PanelError(
            f"local ranks ({row.used}, {col.used}) outside [1, {B1.shape[1]}] x [1, {B2.shape[1]}]"
        )
    return LocalFit(
        Q3=e_row.top(row.used),
        Q4=e_col.top(col.used),
        row_ladder=row,
        col_ladder=col,
        projected=proj,
    )


def fit_local_all(X_groups, gfit: GlobalFit, local=None, h0: int = 2) -> list[LocalFit]:
    out = []
    for m, X in enumerate(X_groups):
        r1, r2 = (None, None) if local is None or local[m] is None else local[m]
        out.append(fit_local(X, gfit.B1[m], gfit.B2[m], r1, r2, h0))
    return out
