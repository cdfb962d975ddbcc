"""Command-line entry point: ``spinlab <subcommand> [--config PATH] [--seed U64] ...``.

Each run writes ``<out>/<name>/<subcommand>.csv`` and merges its checks into
``<out>/<name>/summary.json``. The CSV carries no timestamp, so identical
config and seed give identical bytes.

Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error,
3 resource limit, 4 other numeric error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from .config import SUBCOMMANDS, ExperimentConfig, load_config
from .errors import ConfigError, ResourceLimit, SpinlabError
from .experiments import EXPERIMENTS, Report

CSV_SCHEMA_VERSION = 1


def _fmt(v) -> str:
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_csv(sub: str, cfg: ExperimentConfig, report: Report) -> str:
    lines = [
        f"# spinlab-csv schema={sub}/{CSV_SCHEMA_VERSION}",
        "# config=" + json.dumps(cfg.resolved(), sort_keys=True),
        ",".join(report.columns),
    ]
    lines += [",".join(_fmt(v) for v in row) for row in report.rows]
    return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item"):
        return obj.item()
    return obj


def write_outputs(sub: str, cfg: ExperimentConfig, report: Report) -> Path:
    folder = Path(cfg.out) / cfg.name
    folder.mkdir(parents=True, exist_ok=True)
    csv_path = folder / f"{sub}.csv"
    csv_path.write_text(render_csv(sub, cfg, report))
    summary_path = folder / "summary.json"
    summary = {}
    if summary_path.exists():
        try:
            summary = json.loads(summary_path.read_text())
        except json.JSONDecodeError:
            summary = {}
    summary[sub] = {
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "config": cfg.resolved(),
        "checks": _jsonable(report.checks),
        "pass": report.passed,
    }
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return csv_path


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spinlab", description="Spherical mixed p-spin experiments.")
    p.add_argument("subcommand", help="one of: " + ", ".join(SUBCOMMANDS))
    p.add_argument("--config", default=None, help="INI file with an [experiment] section")
    p.add_argument("--seed", type=int, default=None, help="master seed override")
    p.add_argument("--threads", type=int, default=None, help="worker threads")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--single-thread", action="store_true", help="run cells sequentially in canonical order")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(cfg: ExperimentConfig, sub: str, threads: int | None = None) -> Report:
    if sub not in EXPERIMENTS:
        raise ConfigError(f"unknown subcommand {sub!r}", "subcommand")
    return EXPERIMENTS[sub](cfg, threads if threads is not None else cfg.threads)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {args.subcommand!r}", "subcommand")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("must be an unsigned 64-bit integer", "--seed")
        cfg = load_config(args.config, args.subcommand, seed=args.seed, threads=args.threads, out=args.out)
        threads = 1 if args.single_thread else cfg.threads
        report = run(cfg, args.subcommand, threads)
        path = write_outputs(args.subcommand, cfg, report)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ResourceLimit as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return 3
    except SpinlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    for name, check in report.checks.items():
        print(f"{'PASS' if check['pass'] else 'FAIL'} {name}")
    print(f"wrote {path}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
