"""Batch command line: ``run``, ``bounds`` and ``scan``.

Exit codes: 0 when every gating claim passed, 1 on operational errors
(unreadable config, model construction, I/O), 2 on certification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
THREADS_ENV = "LIESCHWINGER_THREADS"
_BLAS_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

log = logging.getLogger("lieschwinger")


def _apply_threads():
    """Forward the thread count to the BLAS backends; must run before numpy is imported."""
    value = os.environ.get(THREADS_ENV)
    if value:
        for var in _BLAS_VARS:
            os.environ.setdefault(var, value)


def _dump_json(payload, path: Path):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(rows: list[dict], path: Path):
    if not rows:
        path.write_text("", encoding="utf-8")
        return
    fields = list(rows[0])
    for row in rows[1:]:
        for key in row:
            if key not in fields:
                fields.append(key)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k)) for k in fields})


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.17g}"
    if value is None:
        return ""
    return value


def _out_dir(args, cfg) -> Path:
    out = args.out or cfg.output.dir
    if out is None:
        raise ValueError("no output directory: pass --out or set output.dir")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_run(args) -> int:
    from .config import load_config
    from .pipeline import run_pipeline

    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    outcome = run_pipeline(cfg)
    _dump_json(outcome.report, out / cfg.output.report)
    _write_csv(outcome.step_rows, out / cfg.output.steps)
    _write_csv([{**row, "t": cfg.t} for row in outcome.bound_rows], out / cfg.output.bounds)
    spectrum = outcome.spectrum if outcome.spectrum is not None else []
    (out / cfg.output.spectrum).write_text(
        "".join(f"{float(e):.17g}\n" for e in spectrum), encoding="utf-8")
    rep = outcome.report
    cert = rep["certificate"] or {}
    print(f"verdict: {rep['verdict']}")
    if rep["failure"]:
        print(f"step failure ({rep['failure']['kind']}): {rep['failure']['message']}")
    if rep["failed_claims"]:
        print("failed claims: " + ", ".join(rep["failed_claims"]))
    if cert:
        print(f"final gap: {cert['delta_measured']:.12g}")
    print(f"report: {out / cfg.output.report}")
    return outcome.exit_code


def cmd_bounds(args) -> int:
    from .bounds import BoundTable
    from .config import load_config
    from .pipeline import bound_summary

    cfg = load_config(args.config)
    ts = [cfg.t] if cfg.t is not None else list(cfg.t_grid)
    rows, summaries = [], []
    for t in ts:
        rows.extend({**row, "t": t} for row in BoundTable.build(cfg.model.N, t).rows())
        summaries.append({"t": t, **bound_summary(cfg.model.N, t)})
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(rows, out)
    summary_path = out.with_suffix(".summary.json")
    _dump_json({"N": cfg.model.N, "points": summaries}, summary_path)
    print(json.dumps(summaries, indent=2, sort_keys=True))
    return EXIT_PASS


def cmd_scan(args) -> int:
    from .config import load_config
    from .pipeline import run_scan

    cfg = load_config(args.config)
    if not cfg.t_grid:
        raise ValueError("scan needs t_grid in the config")
    out = _out_dir(args, cfg)
    result = run_scan(cfg)
    _dump_json(result, out / "scan.json")
    rows = [{"N": e["N"], **{k: v for k, v in p.items() if k != "failed_claims"},
             "failed_claims": ";".join(p["failed_claims"])}
            for e in result["per_N"] for p in e["points"]]
    _write_csv(rows, out / "scan.csv")
    for entry in result["per_N"]:
        print(f"N={entry['N']}: certified window up to t={entry['window']}")
    print(f"analytic radius bound a/4 = {result['analytic_radius_a_over_4']:.6g}")
    for flag in result["flags"]:
        print(f"flag: {flag}")
    return EXIT_PASS if result["window_never_empty"] else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lieschwinger",
        description="Block-diagonalize a chain Hamiltonian step by step and certify its gap.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="certified run at a single coupling")
    run.add_argument("--config", type=Path, required=True)
    run.add_argument("--out", type=Path, default=None, help="output directory")
    run.set_defaults(func=cmd_run)

    bounds = sub.add_parser("bounds", help="evaluate the analytic ledger only")
    bounds.add_argument("--config", type=Path, required=True)
    bounds.add_argument("--out", type=Path, required=True, help="CSV path")
    bounds.set_defaults(func=cmd_bounds)

    scan = sub.add_parser("scan", help="certified window over t_grid (and N_grid)")
    scan.add_argument("--config", type=Path, required=True)
    scan.add_argument("--out", type=Path, default=None, help="output directory")
    scan.set_defaults(func=cmd_scan)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _apply_threads()
    from .config import ConfigError
    from .models import ModelError

    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
    except MemoryError as exc:
        print(f"size error: {exc}", file=sys.stderr)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
