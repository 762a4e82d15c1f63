"""CSV ingestion, preprocessing and CSV/JSON export.

Panel CSV dialect: comma separated, header row, UTF-8, ``.`` decimal point,
no thousands separator, long format with columns
``group,time,row_id,col_id,value``. Group, time, row and column orderings are
taken from first appearance in the file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import DegenerateSeriesError, IngestError, PanelError
from .types import GroupedPanel, GroupSeries

PANEL_COLUMNS = ("group", "time", "row_id", "col_id", "value")


@dataclass
class IngestManifest:
    groups: list[str]
    times: list[str]
    rows: dict[str, list[str]]
    cols: list[str]

    def to_dict(self) -> dict:
        return {"groups": self.groups, "times": self.times, "rows": self.rows, "cols": self.cols}


def _first_appearance(values: pd.Series) -> list[str]:
    return list(pd.unique(values))


def ingest_frame(df: pd.DataFrame, missing: str = "error") -> tuple[GroupedPanel, IngestManifest]:
    """Assemble a panel from a long-format frame.

    ``missing`` controls NaN *values* (grid gaps are always an error):
    ``"error"`` rejects them, ``"ffill"`` carries the last observation forward
    within each series, ``"drop"`` removes every time point containing one.
    """
    if len(df) == 0:
        raise IngestError("no rows")
    absent = [c for c in PANEL_COLUMNS if c not in df.columns]
    if absent:
        raise IngestError(f"missing columns: {absent}")
    df = df.loc[:, list(PANEL_COLUMNS)].copy()
    for c in PANEL_COLUMNS[:4]:
        df[c] = df[c].astype(str)

    key = list(PANEL_COLUMNS[:4])
    dup = df.duplicated(key, keep=False)
    if dup.any():
        first = df.loc[dup, key].head(10).to_records(index=False).tolist()
        raise IngestError(f"duplicate cells (group, time, row_id, col_id): {first}")

    groups = _first_appearance(df["group"])
    times = _first_appearance(df["time"])
    cols = _first_appearance(df["col_id"])
    t_index = {t: i for i, t in enumerate(times)}
    c_index = {c: i for i, c in enumerate(cols)}

    arrays, rows = [], {}
    gaps: list[tuple] = []
    for g in groups:
        sub = df[df["group"] == g]
        r_list = _first_appearance(sub["row_id"])
        rows[g] = r_list
        r_index = {r: i for i, r in enumerate(r_list)}
        arr = np.full((len(times), len(r_list), len(cols)), np.nan)
        filled = np.zeros(arr.shape, dtype=bool)
        ti = sub["time"].map(t_index).to_numpy()
        ri = sub["row_id"].map(r_index).to_numpy()
        ci = sub["col_id"].map(c_index).to_numpy()
        arr[ti, ri, ci] = pd.to_numeric(sub["value"], errors="coerce").to_numpy(dtype=float)
        filled[ti, ri, ci] = True
        if not filled.all() and len(gaps) < 10:
            for t, r, c in np.argwhere(~filled)[: 10 - len(gaps)]:
                gaps.append((g, times[t], r_list[r], cols[c]))
        arrays.append(arr)
    if gaps:
        raise IngestError(f"missing grid cells (first {len(gaps)}): {gaps}")

    if missing == "ffill":
        arrays = [pd.DataFrame(a.reshape(a.shape[0], -1)).ffill().to_numpy().reshape(a.shape) for a in arrays]
    elif missing == "drop":
        keep = np.all([np.isfinite(a).all(axis=(1, 2)) for a in arrays], axis=0)
        arrays = [a[keep] for a in arrays]
        times = [t for t, k in zip(times, keep) if k]
    elif missing != "error":
        raise IngestError(f"unknown missing-value policy {missing!r}")
    for g, a in zip(groups, arrays):
        if not np.isfinite(a).all():
            t = int(np.argwhere(~np.isfinite(a))[0, 0])
            raise IngestError(f"missing or non-numeric value in group {g} at time {times[t]}")

    panel = GroupedPanel(tuple(GroupSeries(g, a) for g, a in zip(groups, arrays)))
    return panel, IngestManifest(groups, times, rows, cols)


def ingest_csv(path, missing: str = "error") -> tuple[GroupedPanel, IngestManifest]:
    path = Path(path)
    try:
        df = pd.read_csv(path, dtype={c: str for c in PANEL_COLUMNS[:4]}, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise IngestError("no rows") from None
    return ingest_frame(df, missing=missing)


def panel_to_frame(panel: GroupedPanel, manifest: IngestManifest | None = None) -> pd.DataFrame:
    parts = []
    for m, g in enumerate(panel.groups):
        T, n, p = g.obs.shape
        t_lab = np.asarray(manifest.times if manifest else [str(t) for t in range(T)], dtype=object)
        r_lab = np.asarray(manifest.rows[g.name] if manifest else [f"r{i + 1}" for i in range(n)], dtype=object)
        c_lab = np.asarray(manifest.cols if manifest else [f"c{j + 1}" for j in range(p)], dtype=object)
        tt, rr, cc = np.meshgrid(np.arange(T), np.arange(n), np.arange(p), indexing="ij")
        parts.append(
            pd.DataFrame(
                {
                    "group": g.name,
                    "time": t_lab[tt.ravel()],
                    "row_id": r_lab[rr.ravel()],
                    "col_id": c_lab[cc.ravel()],
                    "value": g.obs.ravel(),
                }
            )
        )
    return pd.concat(parts, ignore_index=True)


def write_panel_csv(panel: GroupedPanel, path, manifest: IngestManifest | None = None) -> None:
    write_csv(panel_to_frame(panel, manifest), path)


def write_csv(df: pd.DataFrame, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # repr-style floats round-trip exactly; fixed line endings keep files byte-stable
    df.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")


def read_csv(path) -> pd.DataFrame:
    """Read a CSV written by this package with exact float parsing."""
    return pd.read_csv(path, float_precision="round_trip")


def write_json(obj, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def difference(panel: GroupedPanel) -> GroupedPanel:
    if panel.T < 2:
        raise PanelError("differencing needs T >= 2")
    return panel.map(lambda a: np.diff(a, axis=0))


def standardize(panel: GroupedPanel) -> GroupedPanel:
    """Scale each (group, row, column) series to mean 0 and unit (population) sd."""

    def _z(name, a):
        mu = a.mean(axis=0)
        sd = a.std(axis=0)
        bad = np.argwhere(sd == 0)
        if bad.size:
            r, c = bad[0]
            raise DegenerateSeriesError(f"zero-variance series: group {name}, row {r}, col {c}")
        return (a - mu) / sd

    return GroupedPanel(tuple(GroupSeries(g.name, _z(g.name, g.obs)) for g in panel.groups))


def preprocess(panel: GroupedPanel, steps: Iterable[str] = ()) -> GroupedPanel:
    """Apply ``"difference"`` and/or ``"standardize"`` in the given order."""
    for step in steps:
        if step == "difference":
            panel = difference(panel)
        elif step == "standardize":
            panel = standardize(panel)
        else:
            raise ValueError(f"unknown preprocessing step {step!r}")
    return panel


def matrix_frame(A: np.ndarray, row_labels: Sequence[str] | None = None, col_prefix: str = "f") -> pd.DataFrame:
    df = pd.DataFrame(A, columns=[f"{col_prefix}{j + 1}" for j in range(A.shape[1])])
    df.insert(0, "row", list(row_labels) if row_labels is not None else [str(i + 1) for i in range(A.shape[0])])
    return df


def series_frame(arr: np.ndarray) -> pd.DataFrame:
    """Long format ``t,row,col,value`` for a ``(T, a, b)`` array."""
    T, a, b = arr.shape
    tt, rr, cc = np.meshgrid(np.arange(T), np.arange(a), np.arange(b), indexing="ij")
    return pd.DataFrame({"t": tt.ravel(), "row": rr.ravel(), "col": cc.ravel(), "value": arr.ravel()})
