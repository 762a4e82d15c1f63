"""Shared data model: grouped matrix-variate panels, factor dimensions,
estimated loadings and fit results.

Arrays follow numpy conventions. A group's observations are stored as a single
``(T, N_m, p)`` array; ``obs[t]`` is the ``N_m x p`` matrix observed at time
``t``. Objects are treated as immutable once built: arrays handed to the
constructors are exposed through read-only views.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import PanelError


def _readonly(a) -> np.ndarray:
    view = np.asarray(a, dtype=float).view()
    view.flags.writeable = False
    return view


@dataclass(frozen=True)
class GroupSeries:
    name: str
    obs: np.ndarray  # (T, N_m, p)

    def __post_init__(self):
        object.__setattr__(self, "obs", _readonly(self.obs))

    @property
    def T(self) -> int:
        return self.obs.shape[0]

    @property
    def n_rows(self) -> int:
        return self.obs.shape[1]

    @property
    def n_cols(self) -> int:
        return self.obs.shape[2]


@dataclass(frozen=True)
class GroupedPanel:
    """The observed series ``X_{mt}`` for ``M`` groups sharing ``T`` and ``p``."""

    groups: tuple[GroupSeries, ...]

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))

    @classmethod
    def from_arrays(cls, arrays: Sequence, names: Sequence[str] | None = None) -> "GroupedPanel":
        if names is None:
            names = [f"g{m + 1}" for m in range(len(arrays))]
        if len(names) != len(arrays):
            raise PanelError("names and arrays differ in length")
        return cls(tuple(GroupSeries(str(nm), a) for nm, a in zip(names, arrays)))

    @property
    def M(self) -> int:
        return len(self.groups)

    @property
    def T(self) -> int:
        return self.groups[0].T if self.groups else 0

    @property
    def p(self) -> int:
        return self.groups[0].n_cols if self.groups else 0

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(g.n_rows for g in self.groups)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(g.name for g in self.groups)

    def __getitem__(self, m: int) -> np.ndarray:
        return self.groups[m].obs

    def __len__(self) -> int:
        return self.M

    def map(self, fn) -> "GroupedPanel":
        """Apply ``fn`` to every group's ``(T, N_m, p)`` array."""
        return GroupedPanel(tuple(GroupSeries(g.name, fn(g.obs)) for g in self.groups))


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_invalid(self) -> None:
        if self.violations:
            raise PanelError("; ".join(self.violations))


def validate_panel(panel: GroupedPanel) -> ValidationReport:
    """Check the shape and finiteness invariants of ``panel``.

    Never raises; every problem is listed in the returned report.
    """
    report = ValidationReport()
    if panel.M < 2:
        report.violations.append("global estimation requires >=2 groups")
    if panel.M == 0:
        return report

    T = panel.T
    p = panel.p
    if T < 2:
        report.violations.append(f"T={T} < 2")
    for m, g in enumerate(panel.groups, start=1):
        obs = g.obs
        if obs.ndim != 3:
            report.violations.append(f"group {m} ({g.name}): expected (T, N, p) array, got ndim={obs.ndim}")
            continue
        if obs.shape[0] != T:
            report.violations.append(f"group {m} ({g.name}): T={obs.shape[0]} differs from {T}")
        if obs.shape[2] != p:
            report.violations.append(f"group {m} ({g.name}): p={obs.shape[2]} differs from {p}")
        if obs.shape[1] < 1:
            report.violations.append(f"group {m} ({g.name}): no rows")
        bad = ~np.isfinite(obs)
        if bad.any():
            t = int(np.argwhere(bad)[0, 0])
            report.violations.append(f"group {m} ({g.name}): non-finite entries (first at t={t})")

    sizes = [g.n_rows for g in panel.groups if g.obs.ndim == 3 and g.n_rows > 0]
    if sizes and max(sizes) / min(sizes) > 10:
        report.warnings.append(
            f"group sizes differ by more than a factor 10 (min {min(sizes)}, max {max(sizes)})"
        )
    return report


def panel_from_matrices(groups: Sequence[Sequence[np.ndarray]], names=None) -> tuple[GroupedPanel, ValidationReport]:
    """Build a panel from per-time matrix lists, reporting ragged shapes.

    Useful when data arrive as ``T`` separate matrices per group, which may
    not share a shape. Ragged groups are reported as violations and the
    offending group is kept as an empty ``(T, 0, p)`` placeholder.
    """
    report = ValidationReport()
    arrays = []
    for m, mats in enumerate(groups, start=1):
        shapes = [np.shape(x) for x in mats]
        ref = shapes[0]
        ragged = [t for t, s in enumerate(shapes) if s != ref]
        if ragged:
            for t in ragged[:10]:
                report.violations.append(f"shape mismatch group {m}, t={t}: {shapes[t]} vs {ref}")
            arrays.append(np.zeros((len(mats), 0, ref[1] if len(ref) == 2 else 0)))
        else:
            arrays.append(np.stack([np.asarray(x, dtype=float) for x in mats]))
    panel = GroupedPanel.from_arrays(arrays, names)
    full = validate_panel(panel)
    report.violations.extend(v for v in full.violations if "no rows" not in v)
    report.warnings.extend(full.warnings)
    return panel, report


@dataclass(frozen=True)
class FactorDims:
    """Global ``(k1, k2)`` and per-group local ``(r_m1, r_m2)`` factor counts."""

    k1: int
    k2: int
    local: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "local", tuple((int(a), int(b)) for a, b in self.local))

    def check(self, sizes: Sequence[int], p: int) -> None:
        if len(self.local) != len(sizes):
            raise PanelError(f"{len(self.local)} local rank pairs for {len(sizes)} groups")
        if not 1 <= self.k1 <= min(sizes):
            raise PanelError(f"k1={self.k1} outside [1, {min(sizes)}]")
        if not 1 <= self.k2 <= p:
            raise PanelError(f"k2={self.k2} outside [1, {p}]")
        for m, ((r1, r2), n) in enumerate(zip(self.local, sizes), start=1):
            if not 1 <= r1 <= n - self.k1:
                raise PanelError(f"group {m}: r1={r1} outside [1, {n - self.k1}]")
            if not 1 <= r2 <= p - self.k2:
                raise PanelError(f"group {m}: r2={r2} outside [1, {p - self.k2}]")


@dataclass(frozen=True)
class GroupLoadings:
    """Semi-orthogonal loadings of one group and the global complements."""

    Q1: np.ndarray  # N x k1
    Q2: np.ndarray  # p x k2
    Q3: np.ndarray  # N x r1
    Q4: np.ndarray  # p x r2
    B1: np.ndarray  # N x (N - k1)
    B2: np.ndarray  # p x (p - k2)

    def orthonormality_error(self) -> float:
        err = 0.0
        for Q in (self.Q1, self.Q2, self.Q3, self.Q4, self.B1, self.B2):
            if Q.shape[1]:
                err = max(err, float(np.abs(Q.T @ Q - np.eye(Q.shape[1])).max()))
        if self.B1.shape[1]:
            err = max(err, float(np.abs(self.B1.T @ self.Q1).max()))
        if self.B2.shape[1]:
            err = max(err, float(np.abs(self.B2.T @ self.Q2).max()))
        return err


@dataclass(frozen=True)
class LoadingSet:
    groups: tuple[GroupLoadings, ...]

    def __getitem__(self, m: int) -> GroupLoadings:
        return self.groups[m]

    def __len__(self) -> int:
        return len(self.groups)

    def check(self, tol: float = 1e-10) -> None:
        for m, g in enumerate(self.groups, start=1):
            err = g.orthonormality_error()
            if err > tol:
                raise AssertionError(f"group {m}: loadings not orthonormal (err={err:.2e})")


DIRECTIONS = ("global_row", "global_col", "local_row", "local_col")


@dataclass(frozen=True)
class Ladder:
    """Eigenvalue ladder of one statistic, its ratio curve and ranks.

    ``estimated`` is what the ratio estimator picks on this ladder alone;
    ``used`` is the rank the fit actually used (user-supplied or reconciled).
    """

    values: np.ndarray
    ratios: np.ndarray
    estimated: int
    used: int


@dataclass
class EigenDiagnostics:
    # ladders[m][direction]
    ladders: list[dict[str, Ladder]]

    def estimated_ranks(self, m: int) -> tuple[int, int, int, int]:
        d = self.ladders[m]
        return tuple(d[k].estimated for k in DIRECTIONS)  # type: ignore[return-value]

    def used_ranks(self, m: int) -> tuple[int, int, int, int]:
        d = self.ladders[m]
        return tuple(d[k].used for k in DIRECTIONS)  # type: ignore[return-value]


@dataclass
class FitResult:
    loadings: LoadingSet
    dims: FactorDims
    S: list[np.ndarray]  # (T, k1, k2) per group
    Z: list[np.ndarray]  # (T, r1, r2)
    Psi: list[np.ndarray]  # (T, N, p)
    Phi: list[np.ndarray]
    residuals: list[np.ndarray]
    diagnostics: EigenDiagnostics
    h0: int = 2
    notes: list[str] = field(default_factory=list)

    def fitted(self, m: int) -> np.ndarray:
        return self.Psi[m] + self.Phi[m]

    def consistency_error(self, panel: GroupedPanel) -> float:
        """Largest deviation of the stored global signal from the projection formula."""
        err = 0.0
        for m, g in enumerate(self.loadings.groups):
            X = panel[m]
            rebuilt = g.Q1 @ (g.Q1.T @ (X - self.Phi[m]) @ g.Q2) @ g.Q2.T
            err = max(err, float(np.abs(rebuilt - self.Psi[m]).max()))
        return err


def warn_unbalanced(report: ValidationReport) -> None:
    for w in report.warnings:
        warnings.warn(w, stacklevel=3)
