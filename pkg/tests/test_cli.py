import csv
import json
import statistics
import subprocess
import sys

import numpy as np
import pytest

from aepg import cli, losses, outputs

MINI = {
    "data": {"n_classes": 6, "dim": 8, "n_per_class": 30, "informative_dim": 4, "pretext_classes": 2},
    "split": {"n_tasks": 2},
    "model": {"width": 16, "pretrain_epochs": 2},
    "epochs": 2,
    "seeds": [0],
}


@pytest.fixture
def config(tmp_path):
    def make(**over):
        doc = json.loads(json.dumps(MINI))
        doc.update(over)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(doc))
        return path
    return make


def test_missing_config_exits_2(tmp_path, capsys):
    assert cli.main(["run", str(tmp_path / "nope.json")]) == 2
    assert "cannot read config" in capsys.readouterr().err


def test_malformed_and_invalid_configs_exit_2(tmp_path, config):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["run", str(bad)]) == 2
    assert cli.main(["run", str(config(seeds=[]))]) == 2
    assert cli.main(["run", str(config(loss={"kind": "Hinge"}))]) == 2
    assert cli.main(["run", str(config(colour="blue"))]) == 2


def test_usage_errors_exit_2():
    assert cli.main([]) == 2
    assert cli.main(["frobnicate"]) == 2


def test_run_writes_valid_files(tmp_path, config):
    out = tmp_path / "out"
    assert cli.main(["run", str(config()), "--out", str(out)]) == 0
    doc = outputs.validate_run_dir(out / "seed_0")
    assert doc["seed"] == 0
    assert "out_dir" not in doc["config"]
    outputs.validate_summary(out / "summary.json")


def test_run_failure_exits_1(tmp_path, config):
    # pretext class count equal to all classes is a run-time failure, not a config error
    path = config(data={**MINI["data"], "pretext_classes": 6})
    assert cli.main(["run", str(path), "--out", str(tmp_path / "o")]) == 1


def test_summary_recomputes_from_run_files(tmp_path, config):
    out = tmp_path / "out"
    assert cli.main(["run", str(config(seeds=[1, 2, 3])), "--out", str(out), "--jobs", "2"]) == 0
    summary = outputs.validate_summary(out / "summary.json")
    docs = [json.loads((out / f"seed_{s}" / "metrics.json").read_text()) for s in (1, 2, 3)]
    a_t = [d["A_T"] for d in docs]
    assert summary["seeds"] == [1, 2, 3]
    assert summary["A_T"]["values"] == a_t
    assert summary["A_T"]["mean"] == statistics.fmean(a_t)
    assert summary["A_T"]["std"] == statistics.stdev(a_t)
    assert summary["final_entropy"]["mean"] == statistics.fmean(d["final_entropy"] for d in docs)


def test_parallel_and_serial_runs_agree(tmp_path, config):
    path = config(seeds=[4, 5])
    assert cli.main(["run", str(path), "--out", str(tmp_path / "a"), "--jobs", "2"]) == 0
    assert cli.main(["run", str(path), "--out", str(tmp_path / "b")]) == 0
    for s in (4, 5):
        a = (tmp_path / "a" / f"seed_{s}" / "metrics.json").read_bytes()
        assert a == (tmp_path / "b" / f"seed_{s}" / "metrics.json").read_bytes()


def test_repeated_run_is_bit_identical(tmp_path, config):
    path = config(seeds=[7])
    for d in ("a", "b"):
        assert cli.main(["run", str(path), "--out", str(tmp_path / d)]) == 0
    for name in ("metrics.json", "trace.csv", "accuracy_matrix.csv"):
        assert (tmp_path / "a/seed_7" / name).read_bytes() == (tmp_path / "b/seed_7" / name).read_bytes()


def test_out_dir_precedence(tmp_path, config, monkeypatch):
    monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path / "env"))
    assert cli.main(["run", str(config())]) == 0
    assert (tmp_path / "env" / "summary.json").exists()
    assert cli.main(["run", str(config(out_dir=str(tmp_path / "cfg")))]) == 0
    assert (tmp_path / "cfg" / "summary.json").exists()
    assert cli.main(["run", str(config(out_dir=str(tmp_path / "cfg"))), "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "summary.json").exists()


def test_accuracy_matrix_csv_is_lower_triangular(tmp_path, config):
    out = tmp_path / "out"
    cli.main(["run", str(config()), "--out", str(out)])
    with open(out / "seed_0" / "accuracy_matrix.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["after_task", "task_0", "task_1"]
    assert rows[1][2] == ""
    assert rows[2][1] != "" and rows[2][2] != ""


def test_sweep_alpha_const_rows(tmp_path, config):
    out = tmp_path / "sw"
    rc = cli.main(["sweep", str(config()), "--param", "alpha_const", "--values", "0,0.2,0.5,1", "--out", str(out)])
    assert rc == 0
    with open(out / "sweep.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["value"]) for r in rows] == [0.0, 0.2, 0.5, 1.0]
    assert set(rows[0]) == {"value", "A_T_mean", "A_T_std", "final_entropy_mean"}
    assert rows[0]["A_T_std"] == ""  # one seed: no sample std
    metrics = json.loads((out / "alpha_const=0.2" / "seed_0" / "metrics.json").read_text())
    assert metrics["config"]["schedule"]["kind"] == "constant"
    assert metrics["config"]["loss"]["kind"] == "aEPG"


def test_sweep_loss_kind_and_errors(tmp_path, config):
    out = tmp_path / "sw"
    assert cli.main(["sweep", str(config()), "--param", "loss.kind", "--values", "CE,EPG", "--out", str(out)]) == 0
    assert cli.main(["sweep", str(config()), "--param", "depth", "--values", "1", "--out", str(out)]) == 2
    assert cli.main(["sweep", str(config()), "--param", "tau", "--values", "six", "--out", str(out)]) == 2
    assert cli.main(["sweep", str(config()), "--param", "loss.kind", "--values", "Hinge", "--out", str(out)]) == 2


def test_verify_passes_and_reports_sigmoid_endpoints(capsys):
    assert cli.main(["verify"]) == 0
    text = capsys.readouterr().out
    assert "tau=6: 0.9975/0.0025" in text
    assert "FAIL" not in text


def test_verify_catches_injected_epg_sign_error(capsys):
    def flipped(logits, labels):
        loss, grad = losses.epg_loss(logits, labels)
        return loss, -grad

    assert cli.main(["verify"], epg_loss=flipped) == 1
    text = capsys.readouterr().out
    assert "[FAIL] grad_ratio_check" in text
    assert "failed: grad_ratio_check" in text


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "aepg", "run", str(tmp_path / "missing.json")],
                         capture_output=True, text=True)
    assert res.returncode == 2


def test_trace_csv_round_trips_floats(tmp_path, config):
    out = tmp_path / "out"
    cli.main(["run", str(config(loss={"kind": "CE"})), "--out", str(out)])
    with open(out / "seed_0" / "trace.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert all(r["alpha"] == "" for r in rows)
    assert all(np.isfinite(float(r["loss"])) for r in rows)
