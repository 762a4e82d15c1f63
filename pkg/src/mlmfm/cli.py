"""Command line entry point: ``mlmfm {simulate,fit,sweep,ingest-check}``.

Exit status is 0 on success. Failures print one JSON object
``{"error": <type>, "message": <text>}`` to stderr and exit with 2 (bad
config or input data) or 1 (anything else).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import io
from .errors import ConfigError, IngestError, MLMFMError
from .pipeline import RunConfig, config_from_dict, load_config, run_fit, run_simulate, run_sweep
from .types import validate_panel


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mlmfm", description="Global/local matrix factor models for grouped matrix time series.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", type=Path, help="YAML run config")
        p.add_argument("--out", type=Path, required=needs_out, help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, help="worker processes for sweeps")

    common(sub.add_parser("simulate", help="draw one panel and its ground truth"))
    p = sub.add_parser("fit", help="fit a panel CSV and write the report")
    common(p)
    p.add_argument("--data", type=Path, help="panel CSV (overrides data.path)")
    common(sub.add_parser("sweep", help="Monte Carlo sweep over a parameter grid"))
    p = sub.add_parser("ingest-check", help="validate a panel CSV without fitting")
    p.add_argument("data", type=Path)
    p.add_argument("--missing", default="error", choices=("error", "ffill", "drop"))
    return ap


def _config(args, mode: str) -> RunConfig:
    if args.config is not None:
        cfg = load_config(args.config)
        if cfg.mode != mode:
            raise ConfigError(f"config mode {cfg.mode!r} does not match verb {mode!r}")
    elif mode == "fit":
        cfg = RunConfig(mode="fit")
    else:
        cfg = config_from_dict({"mode": mode})
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed, sim=replace(cfg.sim, seed=args.seed))
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)
    if mode == "fit" and getattr(args, "data", None) is not None:
        cfg = replace(cfg, data=replace(cfg.data, path=str(args.data)))
    cfg.check()
    return cfg


def _ingest_check(args) -> int:
    panel, manifest = io.ingest_csv(args.data, missing=args.missing)
    report = validate_panel(panel)
    out = {
        "ok": report.ok,
        "groups": manifest.groups,
        "T": panel.T,
        "p": panel.p,
        "sizes": list(panel.sizes),
        "violations": list(report.violations),
        "warnings": list(report.warnings),
    }
    print(json.dumps(out, indent=2))
    return 0 if report.ok else 2


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        if args.verb == "ingest-check":
            return _ingest_check(args)
        cfg = _config(args, args.verb)
        {"simulate": run_simulate, "fit": run_fit, "sweep": run_sweep}[args.verb](cfg, args.out)
        return 0
    except (ConfigError, IngestError, MLMFMError, FileNotFoundError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
