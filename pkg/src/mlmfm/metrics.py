"""Evaluation metrics: subspace distance, signal error, fit proportion,
within/between correlations and parameter counts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateSeriesError
from .types import FactorDims, GroupedPanel


def _check_orthonormal(O: np.ndarray, name: str, tol: float = 1e-8) -> None:
    q = O.shape[1]
    err = np.abs(O.T @ O - np.eye(q)).max() if q else 0.0
    if err > tol:
        raise ValueError(f"{name} does not have orthonormal columns (err={err:.2e})")


def _outside(A: np.ndarray, B: np.ndarray) -> float:
    # squared Frobenius norm of the part of span(B) outside span(A)
    return float(np.sum((B - A @ (A.T @ B)) ** 2))


def subspace_distance(O1: np.ndarray, O2: np.ndarray) -> float:
    """``sqrt(1 - tr(O1 O1' O2 O2') / max(q1, q2))``, in [0, 1].

    0 iff the column spans coincide, 1 iff they are orthogonal.

    Notes
    -----
    With ``q1 >= q2`` and orthonormal columns,
    ``q1 - tr(...) = (q1 - q2) + ||O2 - O1 O1' O2||_F^2``. Evaluating that
    residual directly avoids the cancellation in ``1 - tr / q`` that would
    otherwise put a floor of about 1e-8 under the distance of equal spans.
    """
    O1 = np.asarray(O1, dtype=float)
    O2 = np.asarray(O2, dtype=float)
    if O1.ndim != 2 or O2.ndim != 2 or O1.shape[0] != O2.shape[0]:
        raise ValueError(f"incompatible shapes {O1.shape} and {O2.shape}")
    _check_orthonormal(O1, "O1")
    _check_orthonormal(O2, "O2")
    q1, q2 = O1.shape[1], O2.shape[1]
    if O1.shape == O2.shape and np.array_equal(O1, O2):
        return 0.0
    if q1 > q2:
        gap = (q1 - q2) + _outside(O1, O2)
    elif q2 > q1:
        gap = (q2 - q1) + _outside(O2, O1)
    else:
        # both orders averaged so D is exactly symmetric
        gap = 0.5 * (_outside(O1, O2) + _outside(O2, O1))
    q = max(q1, q2)
    return float(np.sqrt(min(1.0, max(0.0, gap / q))))


def signal_distance(est: np.ndarray, true: np.ndarray) -> float:
    """Time-averaged spectral-norm error scaled by ``(N p)^{-1/2}``."""
    T, N, p = true.shape
    norms = np.linalg.norm(est - true, ord=2, axis=(1, 2))
    return float(norms.sum() / T / np.sqrt(N * p))


def rss_tss(X, Xhat) -> float:
    """``1 - sum ||X_t - Xhat_t||^2 / sum ||X_t - Xbar||^2``.

    ``X`` and ``Xhat`` are ``(T, ...)`` arrays or equal-length lists of them
    (pooled, e.g. over groups, with one time mean per list entry).
    """
    Xs = [np.asarray(X, dtype=float)] if not isinstance(X, (list, tuple)) else [np.asarray(a, float) for a in X]
    Hs = [np.asarray(Xhat, dtype=float)] if not isinstance(Xhat, (list, tuple)) else [np.asarray(a, float) for a in Xhat]
    if len(Xs) != len(Hs):
        raise ValueError("X and Xhat differ in length")
    rss = tss = 0.0
    for a, b in zip(Xs, Hs):
        if a.shape != b.shape:
            raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
        if a.shape[0] < 2:
            raise ValueError("need T >= 2")
        rss += float(np.sum((a - b) ** 2))
        tss += float(np.sum((a - a.mean(axis=0)) ** 2))
    if tss == 0.0:
        raise DegenerateSeriesError("degenerate series")
    return 1.0 - rss / tss


@dataclass(frozen=True)
class CorrelationSummary:
    names: tuple[str, ...]
    matrix: np.ndarray  # M x M, diagonal within, off-diagonal between

    @property
    def within(self) -> np.ndarray:
        return np.diag(self.matrix).copy()

    def between(self, m: int) -> float:
        """Mean of group ``m``'s off-diagonal entries."""
        row = np.delete(self.matrix[m], m)
        return float(row.mean()) if row.size else float("nan")


def _zscore(a: np.ndarray) -> np.ndarray:
    # a: (T, k); columns with zero variance become nan
    a = a - a.mean(axis=0)
    sd = np.sqrt(np.mean(a**2, axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        return a / np.where(sd > 0, sd, np.nan)


def correlation_summary(data: GroupedPanel | Sequence[np.ndarray], names: Sequence[str] | None = None) -> CorrelationSummary:
    """Average pairwise Pearson correlations across time.

    Entry ``(m, m)`` averages ``corr(x_{.,a,j}, x_{.,b,j})`` over indicators
    ``j`` and distinct rows ``a != b`` of group ``m``; entry ``(m, n)`` averages
    over indicators and all cross-group row pairs. Every (indicator, pair)
    correlation has equal weight. Constant series contribute nothing.
    """
    if isinstance(data, GroupedPanel):
        names = names or data.names
        arrays = [g.obs for g in data.groups]
    else:
        arrays = [np.asarray(a, dtype=float) for a in data]
        names = names or tuple(f"g{m + 1}" for m in range(len(arrays)))
    T = arrays[0].shape[0]
    if T < 3:
        raise ValueError("correlation summary needs T >= 3")
    p = arrays[0].shape[2]
    M = len(arrays)
    Zs = [_zscore(a.reshape(T, -1)).reshape(a.shape) for a in arrays]
    sums = np.zeros((M, M))
    counts = np.zeros((M, M))
    for j in range(p):
        cols = [z[:, :, j] for z in Zs]
        for m in range(M):
            for n in range(m, M):
                corr = cols[m].T @ cols[n] / T
                if m == n:
                    corr = corr[~np.eye(corr.shape[0], dtype=bool)]
                vals = corr[np.isfinite(corr)]
                sums[m, n] += vals.sum()
                counts[m, n] += vals.size
    with np.errstate(invalid="ignore"):
        mat = sums / counts
    mat = np.triu(mat) + np.triu(mat, 1).T
    return CorrelationSummary(tuple(names), mat)


@dataclass(frozen=True)
class ParameterCount:
    factors_per_group: tuple[int, ...]  # k1 k2 + r1 r2
    loading_params_per_group: tuple[int, ...]  # N (k1 + r1) + p (k2 + r2)
    vectorized_params_per_group: tuple[int, ...]  # N p (k1 k2 + r1 r2)
    model_factors: int  # k1 k2 + sum r1 r2
    separate_fit_factors: int  # 2 M k1 k2 + 2 sum r1 r2

    @property
    def total_factors(self) -> int:
        return sum(self.factors_per_group)

    @property
    def total_loading_params(self) -> int:
        return sum(self.loading_params_per_group)


def parameter_count(dims: FactorDims, sizes: Sequence[int], p: int) -> ParameterCount:
    k = dims.k1 * dims.k2
    fac = tuple(k + r1 * r2 for r1, r2 in dims.local)
    load = tuple(n * (dims.k1 + r1) + p * (dims.k2 + r2) for n, (r1, r2) in zip(sizes, dims.local))
    vec = tuple(n * p * f for n, f in zip(sizes, fac))
    local_sum = sum(r1 * r2 for r1, r2 in dims.local)
    return ParameterCount(
        factors_per_group=fac,
        loading_params_per_group=load,
        vectorized_params_per_group=vec,
        model_factors=k + local_sum,
        separate_fit_factors=2 * len(dims.local) * k + 2 * local_sum,
    )


def matrix_factor_parameter_count(N: int, p: int, k1: int, k2: int) -> tuple[int, int]:
    """(#factors, #loading parameters) of a single-level matrix factor model."""
    return k1 * k2, N * k1 + p * k2
