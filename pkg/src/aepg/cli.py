"""Command-line entry points: ``run``, ``verify`` and ``sweep``.

Exit codes: 0 success, 1 run or check failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

from . import losses, outputs, verify
from .config import ConfigError, ExperimentConfig, load_config
from .harness import TrainingDiverged, run_experiment

log = logging.getLogger("aepg")

OUT_DIR_ENV = "AEPG_OUT_DIR"
DEFAULT_OUT_DIR = "runs"

# sweepable names mapped to the dotted config keys they set
SWEEP_KEYS = {
    "alpha_const": ("schedule.alpha", float),
    "tau": ("schedule.tau", float),
    "eta": ("eta", float),
    "loss.kind": ("loss.kind", str),
    "schedule.kind": ("schedule.kind", str),
}


class UsageError(Exception):
    pass


def resolve_out_dir(cli_value: str | None, cfg: ExperimentConfig) -> Path:
    for cand in (cli_value, cfg.out_dir, os.environ.get(OUT_DIR_ENV)):
        if cand:
            return Path(cand)
    return Path(DEFAULT_OUT_DIR)


def _one_run(cfg: ExperimentConfig, seed: int, run_dir: str) -> dict:
    result = run_experiment(cfg, seed)
    outputs.write_run(result, cfg, run_dir)
    return outputs.metrics_document(result, cfg)


def execute(cfg: ExperimentConfig, out_dir: Path, jobs: int = 1) -> dict:
    """Run every seed of ``cfg`` into ``out_dir/seed_<s>`` and write summary.json."""
    out_dir.mkdir(parents=True, exist_ok=True)
    dirs = [str(out_dir / f"seed_{s}") for s in cfg.seeds]
    if jobs > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(cfg.seeds))) as pool:
            docs = list(pool.map(_one_run, [cfg] * len(dirs), cfg.seeds, dirs))
    else:
        docs = [_one_run(cfg, s, d) for s, d in zip(cfg.seeds, dirs)]
    return outputs.write_summary(docs, out_dir)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = resolve_out_dir(args.out, cfg)
    summary = execute(cfg, out, args.jobs)
    a = summary["A_T"]
    std = "n/a" if a["std"] is None else f"{a['std']:.4f}"
    print(f"A_T {a['mean']:.4f} +/- {std} over seeds {summary['seeds']} -> {out}")
    return 0


def parse_values(param: str, raw: str) -> list:
    if param not in SWEEP_KEYS:
        raise UsageError(f"unknown sweep param {param!r}; choose from {sorted(SWEEP_KEYS)}")
    cast = SWEEP_KEYS[param][1]
    items = [v.strip() for v in raw.split(",") if v.strip()]
    if not items:
        raise UsageError("--values is empty")
    try:
        return [cast(v) for v in items]
    except ValueError as exc:
        raise UsageError(f"bad value for {param}: {exc}") from None


def sweep_config(cfg: ExperimentConfig, param: str, value) -> ExperimentConfig:
    key = SWEEP_KEYS[param][0]
    if param == "alpha_const":
        cfg = cfg.replace("loss.kind", "aEPG").replace("schedule.kind", "constant")
    return cfg.replace(key, value)


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    values = parse_values(args.param, args.values)
    variants = [sweep_config(cfg, args.param, v) for v in values]
    out = resolve_out_dir(args.out, cfg)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for value, variant in zip(values, variants):
        summary = execute(variant, out / f"{args.param}={value}", args.jobs)
        rows.append([value, summary["A_T"]["mean"], summary["A_T"]["std"], summary["final_entropy"]["mean"]])
        print(f"{args.param}={value}: A_T {summary['A_T']['mean']:.4f}")
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "A_T_mean", "A_T_std", "final_entropy_mean"])
        for r in rows:
            w.writerow(["" if v is None else v for v in r])
    return 0


def cmd_verify(args, epg_loss: Callable = losses.epg_loss) -> int:
    return verify.main(epg_loss=epg_loss)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aepg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train every seed of a config")
    r.add_argument("config")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--out", default=None, help=f"output directory (default: ${OUT_DIR_ENV} or ./runs)")

    sub.add_parser("verify", help="run the analytical identity suite")

    s = sub.add_parser("sweep", help="run a config once per value of one parameter")
    s.add_argument("config")
    s.add_argument("--param", required=True)
    s.add_argument("--values", required=True, help="comma-separated")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", default=None)
    return p


def main(argv: Sequence[str] | None = None, epg_loss: Callable = losses.epg_loss) -> int:
    """CLI entry. ``epg_loss`` replaces the EPG gradient in ``verify`` (test hook)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 2
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        return cmd_verify(args, epg_loss)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
