"""Config-driven runs: simulation, Monte Carlo sweeps and fit reports.

Configs are YAML (``version: 1``); see ``README.md`` for the schema. Every run
writes into one directory::

    config.resolved     fully resolved config (YAML)
    manifest.json       index of the files written
    cells.csv           sweep: per (cell, group) means / sds / frequencies
    replications.csv    sweep: one row per (cell, replication, group)
    loadings/*.csv      loading matrices (raw and varimax-rotated)
    diagnostics/*.csv   eigenvalue ladders and ratio curves
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import yaml

from . import io
from .errors import ConfigError
from .metrics import (
    CorrelationSummary,
    ParameterCount,
    correlation_summary,
    parameter_count,
    rss_tss,
    signal_distance,
    subspace_distance,
)
from .model import apply_loadings, fit
from .numerics import varimax
from .simulate import SimConfig, simulate
from .types import DIRECTIONS, FactorDims, FitResult, GroupedPanel, validate_panel

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
MODES = ("simulate", "fit", "sweep")
METRICS = ("D_Q1", "D_Q2", "D_Q3", "D_Q4", "D_Phi", "D_Psi", "gap_ratio")


# --------------------------------------------------------------------------- config


@dataclass
class EstimatorConfig:
    k1: int | str = "auto"  # int, "auto", or "true" (simulation dims)
    k2: int | str = "auto"
    local: Any = "auto"  # "auto", "true", [r1, r2] or one pair per group
    h0: int = 2


@dataclass
class DataConfig:
    path: str | None = None
    missing: str = "error"
    difference: bool = False
    standardize: bool = True
    split: float | None = None  # training fraction for out-of-sample RSS/TSS


@dataclass
class GridConfig:
    deltas: list = field(default_factory=lambda: [[0.0, 0.0, 0.0, 0.0]])
    sizes: list = field(default_factory=lambda: [[20, 20]])
    t_multipliers: list | None = None  # T = round(mult * n * p)
    T_values: list | None = None

    def cells(self, base_T: int) -> list[tuple[tuple[float, ...], int, int, int]]:
        out = []
        for d, (n, p) in itertools.product(self.deltas, self.sizes):
            if self.T_values:
                Ts = [int(t) for t in self.T_values]
            elif self.t_multipliers:
                Ts = [int(round(float(k) * n * p)) for k in self.t_multipliers]
            else:
                Ts = [base_T]
            out.extend((tuple(float(x) for x in d), int(n), int(p), T) for T in Ts)
        return out


@dataclass
class ReportConfig:
    varimax: bool = True
    display_scale: float | None = 30.0
    scale10: bool = True
    export_signals: bool = False


@dataclass
class RunConfig:
    mode: str
    sim: SimConfig = field(default_factory=SimConfig)
    data: DataConfig = field(default_factory=DataConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    report: ReportConfig = field(default_factory=ReportConfig)
    replications: int = 50
    seed: int = 0
    threads: int = 1

    def check(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.mode == "fit" and not self.data.path:
            raise ConfigError("fit mode needs data.path")
        if self.mode in ("simulate", "sweep"):
            self.sim.check()
        if self.data.split is not None and not 0.0 < self.data.split < 1.0:
            raise ConfigError("data.split must lie in (0, 1)")


def _tuples(x):
    if isinstance(x, (list, tuple)):
        return tuple(_tuples(v) for v in x)
    return float(x)


def _sim_from_dict(d: dict, seed: int) -> SimConfig:
    d = dict(d or {})
    M = int(d.pop("M", 3))
    k1 = int(d.pop("k1", 3))
    k2 = int(d.pop("k2", 2))
    local = d.pop("local_ranks", d.pop("r", [2, 2]))
    if local and not isinstance(local[0], (list, tuple)):
        local = [local] * M
    dims = FactorDims(k1, k2, tuple(tuple(x) for x in local))
    known = {f for f in SimConfig.__dataclass_fields__} - {"dims", "M", "seed"}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown sim keys: {sorted(unknown)}")
    if "deltas" in d:
        d["deltas"] = tuple(float(x) for x in d["deltas"])
    for key in ("global_ar", "local_ar"):
        if key in d:
            if d[key] is None:
                raise ConfigError(f"sim.{key} must be a matrix or a list of matrices")
            d[key] = _tuples(d[key])
    return SimConfig(M=M, dims=dims, seed=seed, **d)


def config_from_dict(raw: dict) -> RunConfig:
    raw = dict(raw or {})
    version = raw.pop("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version}")
    try:
        mode = raw.pop("mode")
    except KeyError:
        raise ConfigError("config needs a 'mode'") from None
    seed = int(raw.pop("seed", 0))
    try:
        cfg = _build(raw, mode, seed)
    except TypeError as exc:  # unknown keys in a section
        raise ConfigError(str(exc)) from None
    if raw:
        raise ConfigError(f"unknown config keys: {sorted(raw)}")
    cfg.check()
    return cfg


def _build(raw: dict, mode: str, seed: int) -> RunConfig:
    return RunConfig(
        mode=mode,
        sim=_sim_from_dict(raw.pop("sim", {}), seed),
        data=DataConfig(**raw.pop("data", {}) or {}),
        estimator=EstimatorConfig(**raw.pop("estimator", {}) or {}),
        grid=GridConfig(**raw.pop("grid", {}) or {}),
        report=ReportConfig(**raw.pop("report", {}) or {}),
        replications=int(raw.pop("replications", 50)),
        seed=seed,
        threads=int(raw.pop("threads", 1)),
    )


def load_config(path) -> RunConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return config_from_dict(raw)


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def resolved_dict(cfg: RunConfig) -> dict:
    sim = asdict(cfg.sim)
    dims = sim.pop("dims")
    sim.pop("seed")
    sim.update(k1=dims["k1"], k2=dims["k2"], local_ranks=dims["local"])
    return _plain(
        {
            "version": CONFIG_VERSION,
            "mode": cfg.mode,
            "seed": cfg.seed,
            "replications": cfg.replications,
            "threads": cfg.threads,
            "sim": sim,
            "data": asdict(cfg.data),
            "estimator": asdict(cfg.estimator),
            "grid": asdict(cfg.grid),
            "report": asdict(cfg.report),
        }
    )


def _resolve_ranks(est: EstimatorConfig, dims: FactorDims | None, M: int):
    def one(v, true_v):
        if v == "auto" or v is None:
            return None
        if v == "true":
            if dims is None:
                raise ConfigError("rank 'true' is only available for simulated data")
            return true_v
        return int(v)

    k1 = one(est.k1, dims.k1 if dims else None)
    k2 = one(est.k2, dims.k2 if dims else None)
    loc = est.local
    if loc == "auto" or loc is None:
        local = None
    elif loc == "true":
        if dims is None:
            raise ConfigError("rank 'true' is only available for simulated data")
        local = list(dims.local)
    elif loc and not isinstance(loc[0], (list, tuple)):
        local = [tuple(loc)] * M
    else:
        local = [tuple(x) for x in loc]
    return k1, k2, local


class _Writer:
    """Collects written paths for the manifest."""

    def __init__(self, out: Path):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def csv(self, df: pd.DataFrame, rel: str) -> None:
        io.write_csv(df, self.out / rel)
        self.files.append(rel)

    def finish(self, cfg: RunConfig, extra: dict | None = None) -> None:
        text = yaml.safe_dump(resolved_dict(cfg), sort_keys=True, default_flow_style=None)
        (self.out / "config.resolved").write_text(text, encoding="utf-8")
        manifest = {"version": CONFIG_VERSION, "mode": cfg.mode, "files": sorted(self.files + ["config.resolved"])}
        manifest.update(extra or {})
        io.write_json(manifest, self.out / "manifest.json")


# --------------------------------------------------------------------------- simulate


def run_simulate(cfg: RunConfig, out) -> GroupedPanel:
    panel, truth = simulate(cfg.sim)
    w = _Writer(out)
    w.csv(io.panel_to_frame(panel), "panel.csv")
    for m, name in enumerate(panel.names):
        for q in ("Q1", "Q2", "Q3", "Q4"):
            w.csv(io.matrix_frame(getattr(truth, q)[m]), f"loadings/{name}_{q}.csv")
        w.csv(io.series_frame(truth.F[m]), f"factors/{name}_F.csv")
    w.csv(io.series_frame(truth.G), "factors/G.csv")
    w.finish(cfg, {"groups": list(panel.names), "T": panel.T, "p": panel.p, "sizes": list(panel.sizes)})
    return panel


# --------------------------------------------------------------------------- sweep


def replicate(sim: SimConfig, est: EstimatorConfig, seed: int, cell: int, rep: int) -> list[dict]:
    """Simulate, fit and score one replication; one record per group."""
    return _replicate_full(sim, est, seed, cell, rep)[0]


def _replicate_full(sim: SimConfig, est: EstimatorConfig, seed: int, cell: int, rep: int):
    # returns (records, ladder rows, loadings of rep 0 or None)
    rng = np.random.default_rng(np.random.SeedSequence([seed, cell, rep]))
    base = {"cell": cell, "rep": rep}
    try:
        panel, truth = simulate(sim, rng)
        k1, k2, local = _resolve_ranks(est, sim.dims, sim.M)
        res = fit(panel, k1, k2, local, est.h0)
    except Exception as exc:  # noqa: BLE001 - every failure is logged per cell, never fatal
        failed = [dict(base, group=m + 1, status="failed", error=f"{type(exc).__name__}: {exc}") for m in range(sim.M)]
        return failed, [], None

    true_ranks = [(sim.dims.k1, sim.dims.k2, *sim.dims.local[m]) for m in range(sim.M)]
    rows, ladders = [], []
    for m in range(sim.M):
        L = res.loadings[m]
        est_r = res.diagnostics.estimated_ranks(m)
        k_used = res.dims.k1
        ratios = res.diagnostics.ladders[m]["global_row"].ratios
        rows.append(
            dict(
                base,
                group=m + 1,
                status="ok",
                error="",
                D_Q1=subspace_distance(L.Q1, truth.Q1[m]),
                D_Q2=subspace_distance(L.Q2, truth.Q2[m]),
                D_Q3=subspace_distance(L.Q3, truth.Q3[m]),
                D_Q4=subspace_distance(L.Q4, truth.Q4[m]),
                D_Phi=signal_distance(res.Phi[m], truth.Phi[m]),
                D_Psi=signal_distance(res.Psi[m], truth.Psi[m]),
                gap_ratio=float(ratios[k_used - 1]) if k_used <= ratios.size else float("nan"),
                k1_hat=est_r[0],
                k2_hat=est_r[1],
                r1_hat=est_r[2],
                r2_hat=est_r[3],
                ranks_correct=int(tuple(est_r) == true_ranks[m]),
            )
        )
        for direction in DIRECTIONS:
            lad = res.diagnostics.ladders[m][direction]
            r = np.append(lad.ratios, np.nan)
            ladders.extend(
                dict(base, group=m + 1, direction=direction, i=i + 1, eigenvalue=float(v), ratio=float(r[i]))
                for i, v in enumerate(lad.values)
            )
    loadings = res.loadings if rep == 0 else None
    return rows, ladders, loadings


def _replicate_task(args):
    return _replicate_full(*args)


REPLICATION_COLUMNS = [
    "cell", "rep", "group", "status", "error", *METRICS,
    "k1_hat", "k2_hat", "r1_hat", "r2_hat", "ranks_correct",
]


def aggregate(reps: pd.DataFrame, cells: list, scale10: bool = True) -> pd.DataFrame:
    out = []
    for c, (deltas, n, p, T) in enumerate(cells):
        sub_c = reps[reps["cell"] == c]
        for g in sorted(sub_c["group"].unique()):
            sub = sub_c[sub_c["group"] == g]
            ok = sub[sub["status"] == "ok"]
            row = {
                "cell": c,
                "group": int(g),
                "delta1": deltas[0],
                "delta2": deltas[1],
                "delta3": deltas[2],
                "delta4": deltas[3],
                "n": n,
                "p": p,
                "T": T,
                "replications": len(sub),
                "failures": int((sub["status"] != "ok").sum()),
            }
            for k in METRICS:
                vals = ok[k].to_numpy(dtype=float)
                mean = float(np.mean(vals)) if vals.size else float("nan")
                sd = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
                row[f"{k}_mean"] = mean
                row[f"{k}_sd"] = sd
                if scale10 and k.startswith("D_Q"):
                    row[f"{k}_mean_x10"] = 10 * mean
                    row[f"{k}_sd_x10"] = 10 * sd
            rc = ok["ranks_correct"].to_numpy(dtype=float)
            row["freq_ranks_correct"] = float(np.mean(rc)) if rc.size else float("nan")
            out.append(row)
    return pd.DataFrame(out)


@dataclass
class SweepResult:
    cells: pd.DataFrame
    replications: pd.DataFrame
    cell_specs: list
    ladders: pd.DataFrame | None = None
    loadings: dict = field(default_factory=dict)  # cell -> LoadingSet of replication 0

    def cell(self, deltas, n, p, T, group: int = 1) -> dict:
        d = tuple(float(x) for x in deltas)
        idx = self.cell_specs.index((d, n, p, T))
        row = self.cells[(self.cells["cell"] == idx) & (self.cells["group"] == group)]
        return row.iloc[0].to_dict()


def sweep(cfg: RunConfig) -> SweepResult:
    cells = cfg.grid.cells(cfg.sim.T)
    tasks = []
    for c, (deltas, n, p, T) in enumerate(cells):
        sim = cfg.sim.with_(n=n, p=p, T=T, deltas=deltas)
        sim.check()
        tasks.extend((sim, cfg.estimator, cfg.seed, c, r) for r in range(cfg.replications))
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(_replicate_task, tasks))
    else:
        results = [_replicate_task(t) for t in tasks]
    reps = pd.DataFrame([row for rows, _, _ in results for row in rows])
    reps = reps.reindex(columns=REPLICATION_COLUMNS)
    ladders = pd.DataFrame([row for _, lad, _ in results for row in lad])
    loadings = {t[3]: ls for t, (_, _, ls) in zip(tasks, results) if ls is not None}
    return SweepResult(aggregate(reps, cells, cfg.report.scale10), reps, cells, ladders, loadings)


def run_sweep(cfg: RunConfig, out) -> SweepResult:
    result = sweep(cfg)
    w = _Writer(out)
    w.csv(result.cells, "cells.csv")
    w.csv(result.replications, "replications.csv")
    if result.ladders is not None and len(result.ladders):
        w.csv(result.ladders, "diagnostics/ladders.csv")
    for c, ls in sorted(result.loadings.items()):
        for m, g in enumerate(ls.groups):
            for q in ("Q1", "Q2", "Q3", "Q4"):
                w.csv(io.matrix_frame(getattr(g, q)), f"loadings/cell{c}_g{m + 1}_{q}.csv")
    w.finish(cfg, {"cells": len(result.cell_specs), "replications": cfg.replications})
    return result


# --------------------------------------------------------------------------- fit report


@dataclass
class FitReport:
    fit: FitResult
    correlations: dict[str, CorrelationSummary]
    rss_tss: dict[str, float]  # per group name plus "total"
    params: ParameterCount
    rotated: dict[tuple[str, str], np.ndarray]  # (group, Q-name) -> varimax-rotated loadings
    names: tuple[str, ...]


def fit_report(panel: GroupedPanel, cfg: RunConfig | None = None, test: GroupedPanel | None = None) -> FitReport:
    """Full fit plus the correlation / fit-quality / parameter summaries.

    ``test`` (optional) is a later stretch of the same panel on which RSS/TSS
    is evaluated with the loadings estimated on ``panel``.
    """
    cfg = cfg or RunConfig(mode="fit")
    validate_panel(panel).raise_if_invalid()
    k1, k2, local = _resolve_ranks(cfg.estimator, None, panel.M)
    res = fit(panel, k1, k2, local, cfg.estimator.h0)

    post_global = [panel[m] - res.Psi[m] for m in range(panel.M)]
    corr = {
        "raw": correlation_summary(panel),
        "post_global": correlation_summary(post_global, panel.names),
        "post_local": correlation_summary(res.residuals, panel.names),
    }
    if test is None:
        X_eval = [panel[m] for m in range(panel.M)]
        fitted = [res.fitted(m) for m in range(panel.M)]
    else:
        X_eval = [test[m] for m in range(test.M)]
        fitted = apply_loadings(res.loadings, test)
    fit_q = {name: rss_tss(X_eval[m], fitted[m]) for m, name in enumerate(panel.names)}
    fit_q["total"] = rss_tss(X_eval, fitted)

    rotated = {}
    if cfg.report.varimax:
        for m, name in enumerate(panel.names):
            L = res.loadings[m]
            for q in ("Q1", "Q2", "Q3", "Q4"):
                rotated[(name, q)] = varimax(getattr(L, q))[0]
    return FitReport(
        fit=res,
        correlations=corr,
        rss_tss=fit_q,
        params=parameter_count(res.dims, panel.sizes, panel.p),
        rotated=rotated,
        names=panel.names,
    )


def write_report(rep: FitReport, cfg: RunConfig, out, manifest: io.IngestManifest | None = None) -> None:
    w = _Writer(out)
    res = rep.fit
    scale = cfg.report.display_scale
    for m, name in enumerate(rep.names):
        L = res.loadings[m]
        row_labels = manifest.rows[name] if manifest else None
        col_labels = manifest.cols if manifest else None
        for q, labels in (("Q1", row_labels), ("Q2", col_labels), ("Q3", row_labels), ("Q4", col_labels)):
            w.csv(io.matrix_frame(getattr(L, q), labels), f"loadings/{name}_{q}.csv")
            if (name, q) in rep.rotated:
                R = rep.rotated[(name, q)]
                w.csv(io.matrix_frame(R, labels), f"loadings/{name}_{q}_varimax.csv")
                if scale:
                    w.csv(io.matrix_frame(R * scale, labels), f"loadings/{name}_{q}_varimax_x{scale:g}.csv")
        for direction in DIRECTIONS:
            lad = res.diagnostics.ladders[m][direction]
            ratios = np.append(lad.ratios, np.nan)
            df = pd.DataFrame({"i": np.arange(1, lad.values.size + 1), "eigenvalue": lad.values, "ratio": ratios})
            w.csv(df, f"diagnostics/{name}_{direction}.csv")
        w.csv(io.series_frame(res.S[m]), f"factors/{name}_S.csv")
        w.csv(io.series_frame(res.Z[m]), f"factors/{name}_Z.csv")
        if cfg.report.export_signals:
            w.csv(io.series_frame(res.Psi[m]), f"signals/{name}_Psi.csv")
            w.csv(io.series_frame(res.Phi[m]), f"signals/{name}_Phi.csv")

    ranks = []
    for m, name in enumerate(rep.names):
        for direction in DIRECTIONS:
            lad = res.diagnostics.ladders[m][direction]
            ranks.append({"group": name, "direction": direction, "estimated": lad.estimated, "used": lad.used})
    w.csv(pd.DataFrame(ranks), "diagnostics/ranks.csv")

    for key, cs in rep.correlations.items():
        df = pd.DataFrame(cs.matrix, columns=list(cs.names))
        df.insert(0, "group", list(cs.names))
        w.csv(df, f"correlations/{key}.csv")

    pc = rep.params
    rows = []
    for m, name in enumerate(rep.names):
        r1, r2 = res.dims.local[m]
        rows.append(
            {
                "group": name,
                "global": f"({res.dims.k1},{res.dims.k2})",
                "local": f"({r1},{r2})",
                "rss_tss": rep.rss_tss[name],
                "factors": pc.factors_per_group[m],
                "parameters": pc.loading_params_per_group[m],
                "vectorized_parameters": pc.vectorized_params_per_group[m],
            }
        )
    rows.append(
        {
            "group": "total",
            "global": "",
            "local": "",
            "rss_tss": rep.rss_tss["total"],
            "factors": pc.total_factors,
            "parameters": pc.total_loading_params,
            "vectorized_parameters": sum(pc.vectorized_params_per_group),
        }
    )
    w.csv(pd.DataFrame(rows), "fit.csv")
    w.finish(
        cfg,
        {
            "groups": list(rep.names),
            "k1": res.dims.k1,
            "k2": res.dims.k2,
            "local": [list(x) for x in res.dims.local],
            "model_factors": pc.model_factors,
            "notes": res.notes,
        },
    )


def load_panel(cfg: RunConfig) -> tuple[GroupedPanel, io.IngestManifest]:
    panel, manifest = io.ingest_csv(cfg.data.path, missing=cfg.data.missing)
    steps = [s for s, on in (("difference", cfg.data.difference), ("standardize", cfg.data.standardize)) if on]
    if "difference" in steps:
        manifest.times = manifest.times[1:]
    return io.preprocess(panel, steps), manifest


def run_fit(cfg: RunConfig, out) -> FitReport:
    panel, manifest = load_panel(cfg)
    test = None
    if cfg.data.split is not None:
        cut = int(math.floor(cfg.data.split * panel.T))
        train = panel.map(lambda a: a[:cut])
        test = panel.map(lambda a: a[cut:])
        panel = train
    rep = fit_report(panel, cfg, test)
    write_report(rep, cfg, out, manifest)
    return rep
