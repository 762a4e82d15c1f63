"""Grouped matrix-variate panels from the global/local factor DGP.

Each group follows

    X_mt = R_m G_t C_m' + Gamma_m F_mt Lambda_m' + E_mt,

with AR(1) factor entries, uniform loadings whose range shrinks with the
factor strengths, and Kronecker-structured Gaussian noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .numerics import thin_qr
from .types import FactorDims, GroupedPanel

BASELINE_GLOBAL_AR = ((-0.5, 0.6), (0.8, -0.4), (0.7, 0.3))
BASELINE_LOCAL_AR = ((-0.5, 0.6), (0.8, -0.4))


@dataclass(frozen=True)
class SimConfig:
    M: int = 3
    n: int = 20
    p: int = 20
    T: int = 400
    dims: FactorDims = field(default_factory=lambda: FactorDims(3, 2, ((2, 2),) * 3))
    deltas: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    global_ar: np.ndarray | Sequence = BASELINE_GLOBAL_AR
    # one r1 x r2 matrix shared by all groups, or a list with one per group
    local_ar: np.ndarray | Sequence = BASELINE_LOCAL_AR
    noise_offdiag: float = 0.2
    noise_scale: float = 1.0
    # loadings are drawn on a * (offset - 1, offset + 1); 0 gives the symmetric design
    loading_offset: float = 0.0
    seed: int = 0
    burn_in: int = 200

    @classmethod
    def baseline(cls, n: int, p: int, T: int, deltas=(0.0, 0.0, 0.0, 0.0), **kw) -> "SimConfig":
        """Three groups, (k1, k2) = (3, 2), local (2, 2) with the baseline AR coefficients."""
        return cls(M=3, n=n, p=p, T=T, deltas=tuple(deltas), **kw)

    def with_(self, **kw) -> "SimConfig":
        return replace(self, **kw)

    def local_ar_for(self, m: int) -> np.ndarray:
        a = self.local_ar
        if isinstance(a, np.ndarray):
            return a[m] if a.ndim == 3 else a
        # per-group matrices may differ in shape, so inspect the first entry
        if len(a) and np.ndim(a[0]) == 2:
            return np.asarray(a[m], dtype=float)
        return np.asarray(a, dtype=float)

    def check(self) -> None:
        if self.M < 1 or self.n < 1 or self.p < 1 or self.T < 1:
            raise ConfigError("M, n, p, T must be positive")
        if len(self.dims.local) != self.M:
            raise ConfigError(f"dims.local has {len(self.dims.local)} entries for M={self.M}")
        if self.dims.k1 + max(r for r, _ in self.dims.local) > self.n:
            raise ConfigError("k1 + r1 exceeds n")
        if self.dims.k2 + max(r for _, r in self.dims.local) > self.p:
            raise ConfigError("k2 + r2 exceeds p")
        if any(not 0.0 <= d <= 1.0 for d in self.deltas) or len(self.deltas) != 4:
            raise ConfigError(f"deltas must be four values in [0, 1], got {self.deltas}")
        g = np.asarray(self.global_ar, dtype=float)
        if g.shape != (self.dims.k1, self.dims.k2):
            raise ConfigError(f"global_ar shape {g.shape} != ({self.dims.k1}, {self.dims.k2})")
        if np.any(np.abs(g) >= 1):
            raise ConfigError("AR coefficients must lie strictly inside (-1, 1)")
        for m in range(self.M):
            a = self.local_ar_for(m)
            if a.shape != tuple(self.dims.local[m]):
                raise ConfigError(f"local_ar shape {a.shape} != {self.dims.local[m]} for group {m + 1}")
            if np.any(np.abs(a) >= 1):
                raise ConfigError("AR coefficients must lie strictly inside (-1, 1)")
        if not -1.0 < self.noise_offdiag < 1.0:
            raise ConfigError("noise_offdiag must lie in (-1, 1)")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be >= 0")


@dataclass
class SimTruth:
    R: list[np.ndarray]
    C: list[np.ndarray]
    Gamma: list[np.ndarray]
    Lambda: list[np.ndarray]
    Q1: list[np.ndarray]
    Q2: list[np.ndarray]
    Q3: list[np.ndarray]
    Q4: list[np.ndarray]
    G: np.ndarray  # (T, k1, k2)
    F: list[np.ndarray]  # (T, r1, r2) per group
    Psi: list[np.ndarray]  # (T, N, p) global signal
    Phi: list[np.ndarray]  # (T, N, p) local signal
    E: list[np.ndarray]  # (T, N, p) noise


def equicorrelation(dim: int, rho: float) -> np.ndarray:
    S = np.full((dim, dim), rho)
    np.fill_diagonal(S, 1.0)
    return S


def psd_sqrt(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(S)
    if w.min() < -1e-12 * max(1.0, abs(w).max()):
        raise ConfigError("noise covariance not PSD")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def ar1_paths(phi: np.ndarray, T: int, burn_in: int, rng: np.random.Generator) -> np.ndarray:
    """Independent AR(1) paths, one per entry of ``phi``; returns ``(T, *phi.shape)``.

    Each path starts from its stationary law N(0, 1/(1 - phi^2)) and runs
    ``burn_in`` steps before the retained window.
    """
    phi = np.asarray(phi, dtype=float)
    x = rng.standard_normal(phi.shape) / np.sqrt(1.0 - phi**2)
    innov = rng.standard_normal((burn_in + T, *phi.shape))
    out = np.empty((T, *phi.shape))
    for s in range(burn_in + T):
        x = phi * x + innov[s]
        if s >= burn_in:
            out[s - burn_in] = x
    return out


def simulate(cfg: SimConfig, rng: np.random.Generator | None = None) -> tuple[GroupedPanel, SimTruth]:
    """Draw one panel and the ground truth that produced it.

    Draw order is fixed (loadings per group, global factors, local factors per
    group, noise per group) so a seed identifies the panel bit for bit.
    """
    cfg.check()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    n, p, T = cfg.n, cfg.p, cfg.T
    d1, d2, d3, d4 = cfg.deltas
    k1, k2 = cfg.dims.k1, cfg.dims.k2

    # noise factors first so an invalid rho fails before any heavy work
    sig_row = psd_sqrt(equicorrelation(n, cfg.noise_offdiag))
    sig_col = psd_sqrt(equicorrelation(p, cfg.noise_offdiag))

    R, C, Gam, Lam = [], [], [], []
    for m in range(cfg.M):
        r1, r2 = cfg.dims.local[m]
        a_row_g, a_col_g = n ** (-d1 / 2), p ** (-d2 / 2)
        a_row_l, a_col_l = n ** (-d3 / 2), p ** (-d4 / 2)
        c = cfg.loading_offset
        R.append(rng.uniform(a_row_g * (c - 1), a_row_g * (c + 1), (n, k1)))
        C.append(rng.uniform(a_col_g * (c - 1), a_col_g * (c + 1), (p, k2)))
        Gam.append(rng.uniform(a_row_l * (c - 1), a_row_l * (c + 1), (n, r1)))
        Lam.append(rng.uniform(a_col_l * (c - 1), a_col_l * (c + 1), (p, r2)))

    G = ar1_paths(np.asarray(cfg.global_ar, dtype=float), T, cfg.burn_in, rng)
    F = [ar1_paths(cfg.local_ar_for(m), T, cfg.burn_in, rng) for m in range(cfg.M)]

    X, Psi, Phi, E = [], [], [], []
    for m in range(cfg.M):
        psi = R[m] @ G @ C[m].T
        phi = Gam[m] @ F[m] @ Lam[m].T
        e = cfg.noise_scale * (sig_row @ rng.standard_normal((T, n, p)) @ sig_col)
        Psi.append(psi)
        Phi.append(phi)
        E.append(e)
        X.append(psi + phi + e)

    truth = SimTruth(
        R=R,
        C=C,
        Gamma=Gam,
        Lambda=Lam,
        Q1=[thin_qr(a)[0] for a in R],
        Q2=[thin_qr(a)[0] for a in C],
        Q3=[thin_qr(a)[0] for a in Gam],
        Q4=[thin_qr(a)[0] for a in Lam],
        G=G,
        F=F,
        Psi=Psi,
        Phi=Phi,
        E=E,
    )
    return GroupedPanel.from_arrays(X), truth


@dataclass(frozen=True)
class StationaryReport:
    sample_variance: float
    target_variance: float
    relative_deviation: float
    degenerate: bool


def stationary_check(path: np.ndarray, phi: float) -> StationaryReport:
    """Compare the sample variance of an AR(1) path with ``1 / (1 - phi^2)``."""
    x = np.asarray(path, dtype=float).ravel()
    target = 1.0 / (1.0 - phi**2)
    var = float(np.var(x, ddof=1)) if x.size > 1 else 0.0
    return StationaryReport(var, target, abs(var - target) / target, degenerate=var == 0.0)
