"""Dense linear-algebra kernels used by the estimators.

LAPACK (through numpy) does the heavy lifting; this module pins down the
conventions the rest of the package relies on: descending eigenvalues,
deterministic eigenvector signs, positive ``R`` diagonals, truncated
least squares and a monotone varimax iteration.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConditioningWarning, NonFiniteError, RankDeficientError


@dataclass(frozen=True)
class EigenResult:
    values: np.ndarray  # descending
    vectors: np.ndarray  # columns aligned with values

    def top(self, k: int) -> np.ndarray:
        return self.vectors[:, :k]

    def rest(self, k: int) -> np.ndarray:
        return self.vectors[:, k:]


def fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry of each is positive.

    Ties go to the lowest row index (``argmax`` returns the first maximum).
    """
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def sym_eig(A: np.ndarray) -> EigenResult:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.isfinite(A).all():
        raise NonFiniteError("non-finite matrix")
    A = 0.5 * (A + A.T)
    w, V = np.linalg.eigh(A)
    order = np.argsort(w, kind="stable")[::-1]
    return EigenResult(w[order], fix_signs(V[:, order]))


def thin_qr(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reduced QR with a positive diagonal in ``R``.

    Raises RankDeficientError when some ``|R_ii| <= 1e-12 * ||A||_2``.
    """
    A = np.asarray(A, dtype=float)
    n, k = A.shape
    if n < k:
        raise ValueError(f"thin_qr needs n >= k, got {A.shape}")
    if not np.isfinite(A).all():
        raise NonFiniteError("non-finite matrix")
    Q, R = np.linalg.qr(A, mode="reduced")
    d = np.diag(R)
    scale = np.linalg.norm(A, 2) if A.size else 0.0
    if k and (scale == 0.0 or np.min(np.abs(d)) <= 1e-12 * scale):
        raise RankDeficientError("rank deficient loading")
    s = np.where(d < 0, -1.0, 1.0)
    return Q * s, R * s[:, None]


def orthonormalize(A: np.ndarray) -> np.ndarray:
    return thin_qr(A)[0]


def ls_solve(A: np.ndarray, Y: np.ndarray, rcond: float = 1e-10) -> np.ndarray:
    """Minimise ``||A Z - Y||_F`` over ``Z``.

    Singular values below ``rcond * sigma_max`` are truncated, so for a well
    conditioned ``A`` this is ``(A'A)^{-1} A' Y``. A ConditioningWarning is
    emitted when ``sigma_min / sigma_max < 1e-8``.
    """
    A = np.asarray(A, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if A.shape[0] < A.shape[1]:
        raise ValueError(f"ls_solve needs n >= k, got {A.shape}")
    Z, _, _, sv = np.linalg.lstsq(A, Y, rcond=rcond)
    if sv.size and (sv[0] == 0 or sv[-1] / sv[0] < 1e-8):
        warnings.warn(
            f"ill-conditioned least-squares system (sigma_min/sigma_max="
            f"{(sv[-1] / sv[0]) if sv[0] else 0.0:.2e})",
            ConditioningWarning,
            stacklevel=2,
        )
    return Z


def varimax_criterion(L: np.ndarray) -> float:
    """Raw varimax objective: summed column variances of squared loadings."""
    L2 = np.asarray(L, dtype=float) ** 2
    return float(np.sum(np.mean(L2**2, axis=0) - np.mean(L2, axis=0) ** 2))


def varimax(L: np.ndarray, max_iter: int = 100, tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonal varimax rotation of a loading matrix.

    Uses the SVD fixed-point update, which never decreases the criterion.
    Iteration stops once the criterion gain drops below ``tol`` or after
    ``max_iter`` updates.

    Returns
    -------
    rotated : (n, k) ndarray
        ``L @ rotation``.
    rotation : (k, k) ndarray
        Orthogonal rotation matrix.
    """
    L = np.asarray(L, dtype=float)
    n, k = L.shape
    O = np.eye(k)
    if k < 2:
        return L.copy(), O
    crit = varimax_criterion(L)
    for _ in range(max_iter):
        B = L @ O
        G = L.T @ (B**3 - B * np.mean(B**2, axis=0))
        U, _, Vt = np.linalg.svd(G)
        O_new = U @ Vt
        new = varimax_criterion(L @ O_new)
        if new < crit:
            # guard against roundoff; keep the better rotation
            break
        O, gain, crit = O_new, new - crit, new
        if gain < tol:
            break
    return L @ O, O
