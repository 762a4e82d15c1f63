"""Stage 3: normalized factors and signal parts by least squares.

``Z_t`` solves ``min || A Z_t - Y1_t Q4 ||`` with ``A = B1' Q3`` (the
``(A'A)^{-1} A'`` form), then ``Phi_t = Q3 Z_t Q4'``. The global part is the
projection of what remains: ``S_t = Q1'(X_t - Phi_t) Q2``,
``Psi_t = Q1 S_t Q2'``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankDeficientError
from .numerics import ls_solve


@dataclass
class SignalParts:
    Z: np.ndarray  # (T, r1, r2)
    S: np.ndarray  # (T, k1, k2)
    Phi: np.ndarray  # (T, N, p)
    Psi: np.ndarray
    residual: np.ndarray


def local_design(B1: np.ndarray, Q3: np.ndarray) -> np.ndarray:
    A = B1.T @ Q3
    sv = np.linalg.svd(A, compute_uv=False)
    if sv.size == 0 or sv[-1] <= 1e-10:
        raise RankDeficientError("local space swallowed by global complement")
    return A


def recover_local(Y1: np.ndarray, Q3: np.ndarray, Q4: np.ndarray, B1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(Z, Phi)`` for every time point of ``Y1`` (shape ``(T, N-k1, p)``)."""
    A = local_design(B1, Q3)
    T = Y1.shape[0]
    r1, r2 = Q3.shape[1], Q4.shape[1]
    rhs = Y1 @ Q4  # (T, N-k1, r2)
    # one solve for all t: stack right-hand sides side by side
    stacked = np.moveaxis(rhs, 0, 1).reshape(A.shape[0], T * r2)
    Z = ls_solve(A, stacked).reshape(r1, T, r2).transpose(1, 0, 2)
    Phi = Q3 @ Z @ Q4.T
    return Z, Phi


def recover_global(X: np.ndarray, Phi: np.ndarray, Q1: np.ndarray, Q2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(S, Psi)`` from the data and the recovered local signal."""
    if X.shape != Phi.shape:
        raise ValueError(f"shape mismatch: X {X.shape} vs Phi {Phi.shape}")
    S = Q1.T @ (X - Phi) @ Q2
    return S, Q1 @ S @ Q2.T


def fitted_values(parts: SignalParts) -> np.ndarray:
    return parts.Psi + parts.Phi


def recover_signals(X: np.ndarray, Q1, Q2, Q3, Q4, B1) -> SignalParts:
    Y1 = B1.T @ X
    Z, Phi = recover_local(Y1, Q3, Q4, B1)
    S, Psi = recover_global(X, Phi, Q1, Q2)
    return SignalParts(Z=Z, S=S, Phi=Phi, Psi=Psi, residual=X - Psi - Phi)
