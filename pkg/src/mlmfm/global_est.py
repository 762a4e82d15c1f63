"""Stage 1: global loading spaces from cross-group covariance statistics.

For groups ``m != i`` the T-averaged cross moment of every column pair is
``Omega_{mi,j1j2} = (1/T) sum_t x_{.,j1,mt} x_{.,j2,it}'``. Stacking all
entries gives one ``(N_m p) x (N_i p)`` matrix ``C_mi = Xm' Xi / T`` whose
index pairs are ``(row, col)``, so

    W1_m = sum_{i != m} sum_{j1, j2} Omega Omega'

is the Gram matrix of ``C_mi`` reshaped to ``N_m x (p N_i p)``. The column
statistic W2_m is the same tensor with the column index moved to the front.
No centring is applied: the statistic is a raw cross moment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpectrumError, PanelError
from .numerics import sym_eig
from .types import GroupedPanel, Ladder, validate_panel


def cross_moment(Xm: np.ndarray, Xi: np.ndarray) -> np.ndarray:
    """``C[a, j1, b, j2] = (1/T) sum_t Xm[t, a, j1] Xi[t, b, j2]``."""
    T, n_m, p = Xm.shape
    n_i = Xi.shape[1]
    C = Xm.reshape(T, n_m * p).T @ Xi.reshape(T, n_i * p)
    return (C / T).reshape(n_m, p, n_i, p)


def _row_gram(C4: np.ndarray) -> np.ndarray:
    A = C4.reshape(C4.shape[0], -1)
    return A @ A.T


def _col_gram(C4: np.ndarray) -> np.ndarray:
    A = np.moveaxis(C4, 1, 0).reshape(C4.shape[1], -1)
    return A @ A.T


def _sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def _require_groups(panel: GroupedPanel) -> None:
    if panel.M < 2:
        raise PanelError("requires >=2 groups")


def compute_W1(panel: GroupedPanel, m: int) -> np.ndarray:
    """Row-direction statistic of group ``m`` (``N_m x N_m``, PSD)."""
    _require_groups(panel)
    n = panel.sizes[m]
    W = np.zeros((n, n))
    for i in range(panel.M):
        if i != m:
            W += _row_gram(cross_moment(panel[m], panel[i]))
    return _sym(W)


def compute_W2(panel: GroupedPanel, m: int) -> np.ndarray:
    """Column-direction statistic of group ``m`` (``p x p``, PSD)."""
    _require_groups(panel)
    W = np.zeros((panel.p, panel.p))
    for i in range(panel.M):
        if i != m:
            W += _col_gram(cross_moment(panel[m], panel[i]))
    return _sym(W)


def global_statistics(panel: GroupedPanel) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """All ``W1_m`` and ``W2_m`` at once.

    Each unordered pair's cross moment is formed once; ``C_im`` is the
    transpose of ``C_mi``. Terms are accumulated in increasing ``i`` for every
    ``m`` so the result matches :func:`compute_W1` / :func:`compute_W2` to
    rounding.
    """
    _require_groups(panel)
    M, p = panel.M, panel.p
    W1 = [np.zeros((n, n)) for n in panel.sizes]
    W2 = [np.zeros((p, p)) for _ in range(M)]
    for m in range(M):
        for i in range(m + 1, M):
            C = cross_moment(panel[m], panel[i])
            W1[m] += _row_gram(C)
            W2[m] += _col_gram(C)
            Ct = C.transpose(2, 3, 0, 1)
            W1[i] += _row_gram(Ct)
            W2[i] += _col_gram(Ct)
    return [_sym(W) for W in W1], [_sym(W) for W in W2]


def ratio_curve(ladder: np.ndarray) -> np.ndarray:
    """``lambda_{i+1} / lambda_i`` after flooring tiny eigenvalues at ``1e-12 * lambda_1``."""
    lam = np.asarray(ladder, dtype=float)
    if lam.size == 0 or lam[0] <= 0:
        raise DegenerateSpectrumError("degenerate spectrum")
    lam = np.maximum(lam, 1e-12 * lam[0])
    return lam[1:] / lam[:-1]


def search_end(dim_cap: int, ladder_len: int) -> int:
    return max(1, min(dim_cap // 3, ladder_len - 1))


def estimate_rank(ladder: np.ndarray, dim_cap: int) -> int:
    """Eigenvalue-ratio rank estimate.

    Minimises ``lambda_{i+1} / lambda_i`` over ``1 <= i <= dim_cap / 3`` (range
    end clamped to at least 1 and to the ladder length); the smallest index
    wins ties.
    """
    lam = np.asarray(ladder, dtype=float)
    if lam.size < 2:
        if lam.size == 1 and lam[0] > 0:
            return 1
        raise DegenerateSpectrumError("degenerate spectrum")
    ratios = ratio_curve(lam)
    end = search_end(dim_cap, lam.size)
    return int(np.argmin(ratios[:end])) + 1


def majority(votes: list[int]) -> int:
    """Most frequent value; ties go to the smallest."""
    vals, counts = np.unique(votes, return_counts=True)
    return int(vals[np.flatnonzero(counts == counts.max())[0]])


def make_ladder(values: np.ndarray, dim_cap: int, used: int | None) -> Ladder:
    lam = np.clip(values, 0.0, None)
    est = estimate_rank(lam, dim_cap)
    return Ladder(values=lam, ratios=ratio_curve(lam), estimated=est, used=est if used is None else used)


@dataclass
class GlobalFit:
    k1: int
    k2: int
    Q1: list[np.ndarray]
    Q2: list[np.ndarray]
    B1: list[np.ndarray]
    B2: list[np.ndarray]
    row_ladders: list[Ladder]
    col_ladders: list[Ladder]
    W1: list[np.ndarray] | None = None
    W2: list[np.ndarray] | None = None

    @property
    def group_estimates(self) -> list[tuple[int, int]]:
        return [(r.estimated, c.estimated) for r, c in zip(self.row_ladders, self.col_ladders)]


def fit_global(panel: GroupedPanel, k1: int | None = None, k2: int | None = None, keep_stats: bool = False) -> GlobalFit:
    """Estimate ``Q1_m``, ``Q2_m`` and their complements for every group.

    Missing ranks are estimated per group on the W ladders and reconciled by
    majority vote; the per-group estimates stay available on the ladders.
    """
    validate_panel(panel).raise_if_invalid()
    W1, W2 = global_statistics(panel)
    eig1 = [sym_eig(W) for W in W1]
    eig2 = [sym_eig(W) for W in W2]
    est1 = [estimate_rank(np.clip(e.values, 0, None), n) for e, n in zip(eig1, panel.sizes)]
    est2 = [estimate_rank(np.clip(e.values, 0, None), panel.p) for e in eig2]
    k1 = majority(est1) if k1 is None else int(k1)
    k2 = majority(est2) if k2 is None else int(k2)
    if not 1 <= k1 <= min(panel.sizes):
        raise PanelError(f"k1={k1} outside [1, {min(panel.sizes)}]")
    if not 1 <= k2 <= panel.p:
        raise PanelError(f"k2={k2} outside [1, {panel.p}]")
    return GlobalFit(
        k1=k1,
        k2=k2,
        Q1=[e.top(k1) for e in eig1],
        Q2=[e.top(k2) for e in eig2],
        B1=[e.rest(k1) for e in eig1],
        B2=[e.rest(k2) for e in eig2],
        row_ladders=[make_ladder(e.values, n, k1) for e, n in zip(eig1, panel.sizes)],
        col_ladders=[make_ladder(e.values, panel.p, k2) for e in eig2],
        W1=W1 if keep_stats else None,
        W2=W2 if keep_stats else None,
    )
