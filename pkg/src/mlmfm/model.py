"""Three-stage fit of the global/local matrix factor model."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from .global_est import fit_global
from .local_est import fit_local
from .signal import recover_signals
from .types import (
    EigenDiagnostics,
    FactorDims,
    FitResult,
    GroupedPanel,
    GroupLoadings,
    LoadingSet,
    validate_panel,
    warn_unbalanced,
)

log = logging.getLogger(__name__)


def fit(
    panel: GroupedPanel,
    k1: int | None = None,
    k2: int | None = None,
    local: Sequence[tuple[int, int] | None] | None = None,
    h0: int = 2,
) -> FitResult:
    """Estimate loadings, factors and signal parts for every group.

    Parameters
    ----------
    panel : GroupedPanel
        At least two groups sharing ``T`` and ``p``.
    k1, k2 : int, optional
        Global row/column factor counts; estimated when omitted.
    local : sequence of (r1, r2) or None, optional
        Per-group local factor counts; ``None`` (or a ``None`` entry)
        estimates them.
    h0 : int
        Largest lag used by the local statistics.
    """
    report = validate_panel(panel)
    report.raise_if_invalid()
    warn_unbalanced(report)

    g = fit_global(panel, k1, k2)
    log.debug("global ranks k1=%d k2=%d (group estimates %s)", g.k1, g.k2, g.group_estimates)

    groups, ladders, S, Z, Psi, Phi, resid, local_used = [], [], [], [], [], [], [], []
    for m in range(panel.M):
        X = panel[m]
        r1, r2 = (None, None) if local is None or local[m] is None else local[m]
        lf = fit_local(X, g.B1[m], g.B2[m], r1, r2, h0)
        parts = recover_signals(X, g.Q1[m], g.Q2[m], lf.Q3, lf.Q4, g.B1[m])
        groups.append(GroupLoadings(g.Q1[m], g.Q2[m], lf.Q3, lf.Q4, g.B1[m], g.B2[m]))
        ladders.append(
            {
                "global_row": g.row_ladders[m],
                "global_col": g.col_ladders[m],
                "local_row": lf.row_ladder,
                "local_col": lf.col_ladder,
            }
        )
        local_used.append((lf.Q3.shape[1], lf.Q4.shape[1]))
        S.append(parts.S)
        Z.append(parts.Z)
        Psi.append(parts.Psi)
        Phi.append(parts.Phi)
        resid.append(parts.residual)

    return FitResult(
        loadings=LoadingSet(tuple(groups)),
        dims=FactorDims(g.k1, g.k2, tuple(local_used)),
        S=S,
        Z=Z,
        Psi=Psi,
        Phi=Phi,
        residuals=resid,
        diagnostics=EigenDiagnostics(ladders),
        h0=h0,
        notes=list(report.warnings),
    )


def apply_loadings(loadings: LoadingSet, panel: GroupedPanel) -> list[np.ndarray]:
    """Fitted values for new data using already-estimated loadings."""
    out = []
    for m, g in enumerate(loadings.groups):
        parts = recover_signals(panel[m], g.Q1, g.Q2, g.Q3, g.Q4, g.B1)
        out.append(parts.Psi + parts.Phi)
    return out
