"""Run artifacts: metrics.json, trace.csv, accuracy_matrix.csv and summary.json."""

from __future__ import annotations

import csv
import json
import statistics
from pathlib import Path

import jsonschema

from .config import ExperimentConfig
from .harness import RunResult

TRACE_HEADER = ["step", "task", "epoch", "alpha", "loss", "entropy"]

_number_list = {"type": "array", "items": {"type": "number"}}

METRICS_SCHEMA = {
    "type": "object",
    "required": ["seed", "A_T", "A_tilde_T", "A_t", "final_accuracies", "forgetting",
                 "accuracy_matrix", "final_entropy", "test_entropy", "config"],
    "properties": {
        "seed": {"type": "integer"},
        "A_T": {"type": "number", "minimum": 0, "maximum": 1},
        "A_tilde_T": {"type": "number", "minimum": 0, "maximum": 1},
        "A_t": _number_list,
        "final_accuracies": _number_list,
        "forgetting": _number_list,
        "accuracy_matrix": {"type": "array", "items": _number_list},
        "final_entropy": {"type": "number", "minimum": 0},
        "test_entropy": {"type": "number", "minimum": 0},
        "config": {"type": "object"},
    },
}

_stat = {
    "type": "object",
    "required": ["mean", "std", "values"],
    "properties": {
        "mean": {"type": "number"},
        "std": {"type": ["number", "null"]},
        "values": _number_list,
    },
}

SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["seeds", "n_runs", "A_T", "A_tilde_T", "final_entropy"],
    "properties": {
        "seeds": {"type": "array", "items": {"type": "integer"}},
        "n_runs": {"type": "integer", "minimum": 1},
        "A_T": _stat,
        "A_tilde_T": _stat,
        "final_entropy": _stat,
    },
}


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def metrics_document(result: RunResult, cfg: ExperimentConfig) -> dict:
    echo = cfg.to_dict()
    echo.pop("out_dir", None)
    return {
        "seed": result.seed,
        **result.metrics,
        "accuracy_matrix": result.trace.matrix.columns,
        "final_entropy": result.final_entropy,
        "test_entropy": result.test_entropy,
        "config": echo,
    }


def write_run(result: RunResult, cfg: ExperimentConfig, run_dir) -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    doc = metrics_document(result, cfg)
    (run_dir / "metrics.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
    with open(run_dir / "trace.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for r in result.trace.rows:
            w.writerow([r.step, r.task, r.epoch, _fmt(r.alpha), _fmt(r.loss), _fmt(r.entropy)])
    cols = result.trace.matrix.columns
    T = len(cols)
    with open(run_dir / "accuracy_matrix.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["after_task"] + [f"task_{i}" for i in range(T)])
        for j, col in enumerate(cols):
            w.writerow([j] + [_fmt(v) for v in col] + [""] * (T - len(col)))
    return run_dir


def stat(values: list[float]) -> dict:
    """Mean and sample standard deviation (None for a single value)."""
    return {
        "mean": statistics.fmean(values),
        "std": statistics.stdev(values) if len(values) > 1 else None,
        "values": list(values),
    }


def summarize(docs: list[dict]) -> dict:
    return {
        "seeds": [d["seed"] for d in docs],
        "n_runs": len(docs),
        "A_T": stat([d["A_T"] for d in docs]),
        "A_tilde_T": stat([d["A_tilde_T"] for d in docs]),
        "final_entropy": stat([d["final_entropy"] for d in docs]),
    }


def write_summary(docs: list[dict], out_dir) -> dict:
    summary = summarize(docs)
    Path(out_dir, "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary


def validate_run_dir(run_dir) -> dict:
    """Check the three per-run files against their schemas; returns metrics.json."""
    run_dir = Path(run_dir)
    doc = json.loads((run_dir / "metrics.json").read_text())
    jsonschema.validate(doc, METRICS_SCHEMA)
    with open(run_dir / "trace.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != TRACE_HEADER:
        raise ValueError(f"trace.csv header {rows[0]}")
    steps = [int(r[0]) for r in rows[1:]]
    if any(b <= a for a, b in zip(steps, steps[1:])):
        raise ValueError("trace steps are not strictly increasing")
    if any(float(r[5]) < 0 for r in rows[1:]):
        raise ValueError("negative entropy in trace")
    with open(run_dir / "accuracy_matrix.csv", newline="") as fh:
        mat = list(csv.reader(fh))
    T = len(mat) - 1
    if mat[0] != ["after_task"] + [f"task_{i}" for i in range(T)]:
        raise ValueError("accuracy_matrix.csv header mismatch")
    for j, row in enumerate(mat[1:]):
        filled = [c for c in row[1:] if c != ""]
        if len(filled) != j + 1 or any(c == "" for c in row[1:j + 2]):
            raise ValueError(f"accuracy_matrix.csv row {j} is not lower-triangular")
        if [float(c) for c in filled] != doc["accuracy_matrix"][j]:
            raise ValueError(f"accuracy_matrix.csv row {j} disagrees with metrics.json")
    return doc


def validate_summary(path) -> dict:
    doc = json.loads(Path(path).read_text())
    jsonschema.validate(doc, SUMMARY_SCHEMA)
    return doc
