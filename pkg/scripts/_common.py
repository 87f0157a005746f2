"""Shared helpers for the experiment scripts."""

from __future__ import annotations

import argparse
import statistics
from pathlib import Path

from aepg.config import ExperimentConfig, load_config
from aepg.harness import run_experiment

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def parser(description: str, default_config: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", default=str(CONFIGS / default_config))
    p.add_argument("--seeds", type=int, nargs="+", default=None, help="override the config's seeds")
    return p


def load(args, **over) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seeds:
        cfg = cfg.replace("seeds", args.seeds)
    for k, v in over.items():
        cfg = cfg.replace(k, v)
    return cfg


def run_all(cfg: ExperimentConfig) -> list:
    return [run_experiment(cfg, s) for s in cfg.seeds]


def mean_std(values) -> str:
    values = list(values)
    if len(values) == 1:
        return f"{values[0]:.4f}"
    return f"{statistics.fmean(values):.4f} +/- {statistics.stdev(values):.4f}"
