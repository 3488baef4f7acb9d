"""Tests for the command-line interface."""

from __future__ import annotations
import json
from pathlib import Path

import pandas as pd
import pytest

from topkrank.cli import main, read_flat_config
from topkrank.core import ConfigError

NONCONTEXTUAL = ["noncontextual", "--m", "6", "--T", "600", "--K", "20", "--ones", "2"]

def test_observability_command(workdir: Path, capsys):
    assert main(["observability", "--measure", "sumloss", "--m", "3", "--dump-matrices", "tables"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["global_holds"] is True
    assert report["local"][0]["holds"] is False
    loss_lines = (workdir / "tables" / "loss.csv").read_text(encoding="utf-8").splitlines()
    assert loss_lines[0] == "objects,000,001,010,011,100,101,110,111"
    assert loss_lines[1] == "123,0,3,2,5,1,4,3,6"
    assert len(loss_lines) == 7
    feedback_lines = (workdir / "tables" / "feedback.csv").read_text(encoding="utf-8").splitlines()
    assert feedback_lines[0] == loss_lines[0]
    assert feedback_lines[4] == "231,0,1,0,1,0,1,0,1"

def test_observability_dump_alias(workdir: Path):
    assert main(["observability", "--m", "3", "--dump", "short"]) == 0
    assert (workdir / "short" / "feedback.csv").exists()

def test_observability_reports_failure_for_ndcg(workdir: Path, capsys):
    assert main(["observability", "--measure", "ndcg", "--m", "3"]) == 0
    assert json.loads(capsys.readouterr().out)["global_holds"] is False

def test_noncontextual_is_byte_deterministic(workdir: Path, capsys):
    assert main([*NONCONTEXTUAL, "--seed", "4", "--out", "a.csv"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["K"] == 20
    assert summary["out"] == "a.csv"
    assert main([*NONCONTEXTUAL, "--seed", "4", "--out", "b.csv"]) == 0
    assert (workdir / "a.csv").read_bytes() == (workdir / "b.csv").read_bytes()

def test_noncontextual_requires_out(workdir: Path, capsys):
    assert main(NONCONTEXTUAL) == 2
    assert "--out is required" in capsys.readouterr().err

def test_infeasible_plan_exits_with_error(workdir: Path, capsys):
    assert main(["noncontextual", "--m", "20", "--T", "100", "--out", "x.csv"]) == 2
    assert "error:" in capsys.readouterr().err

def test_contextual_writes_baselines_next_to_run(workdir: Path):
    argv = ["contextual", "--num-queries", "20", "--m", "5", "--d", "3", "--T", "40"]
    assert main([*argv, "--baselines", "random,listnet", "--out", "runs/kl.csv"]) == 0
    for name in ("kl.csv", "kl_random.csv", "kl_listnet.csv"):
        frame = pd.read_csv(workdir / "runs" / name)
        assert list(frame.columns) == ["round", "explored", "boosted", "surrogate_loss", "avg_ndcg10"]
        assert len(frame) == 40

def test_contextual_rejects_unknown_baseline(workdir: Path):
    assert main(["contextual", "--T", "10", "--baselines", "oracle", "--out", "x.csv"]) == 2

def test_flat_config_supplies_defaults(workdir: Path):
    (workdir / "run.cfg").write_text(
        "# small run\nm = 6\nT = 600\nK = 20\nones = 2\nfull-information = no\nout = cfg.csv\n", encoding="utf-8"
    )
    assert main(["--config", "run.cfg", "noncontextual"]) == 0
    assert len(pd.read_csv(workdir / "cfg.csv")) == 600

def test_flat_config_rejects_unknown_keys(workdir: Path, capsys):
    (workdir / "run.cfg").write_text("jobs = 3\n", encoding="utf-8")
    assert main(["--config", "run.cfg", "noncontextual", "--out", "x.csv"]) == 2
    assert "unknown config key" in capsys.readouterr().err

def test_flat_config_after_subcommand(workdir: Path):
    (workdir / "run.cfg").write_text("m = 6\nT = 600\nK = 20\nones = 2\nseed = 4\n", encoding="utf-8")
    assert main(["noncontextual", "--config", "run.cfg", "--out", "after.csv"]) == 0
    assert main([*NONCONTEXTUAL, "--seed", "4", "--out", "flags.csv"]) == 0
    assert (workdir / "after.csv").read_bytes() == (workdir / "flags.csv").read_bytes()

def test_command_line_overrides_flat_config(workdir: Path):
    (workdir / "run.cfg").write_text("m = 6\nT = 600\nK = 20\nones = 2\nout = cfg.csv\n", encoding="utf-8")
    assert main(["--config", "run.cfg", "noncontextual", "--T", "300"]) == 0
    assert len(pd.read_csv(workdir / "cfg.csv")) == 300

def test_flat_config_rejects_bad_boolean(workdir: Path, capsys):
    (workdir / "run.cfg").write_text("full-information = maybe\n", encoding="utf-8")
    assert main(["--config", "run.cfg", "noncontextual", "--out", "x.csv"]) == 2
    assert "expects a boolean" in capsys.readouterr().err

def test_read_flat_config(tmp_path: Path):
    path = tmp_path / "a.cfg"
    path.write_text("--flip-prob = 0.2  # comment\n\nseed=3\n", encoding="utf-8")
    assert read_flat_config(path) == {"flip_prob": "0.2", "seed": "3"}
    path.write_text("no equals sign\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        read_flat_config(path)

def test_experiment_requires_scenario(workdir: Path):
    assert main(["experiment", "--seeds", "1"]) == 2

def test_experiment_command(workdir: Path, capsys):
    argv = ["experiment", "--scenario", "fig3", "--seeds", "2", "--m", "6", "--T", "600", "--K", "20"]
    assert main([*argv, "--max-workers", "1", "--no-progress", "--out", "fig3"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["curves"] == ["top1", "full_information"]
    assert (workdir / "fig3" / "aggregated" / "top1.csv").exists()

    assert main(["compare", "fig3"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert {row["curve"] for row in report["curves"]} == {"top1", "full_information"}

def test_experiment_defaults_to_runs_dir_from_config(workdir: Path):
    (workdir / "config.json").write_text(json.dumps({"runs_dir": "artifacts"}), encoding="utf-8")
    argv = ["experiment", "--scenario", "fig1", "--seeds", "1", "--m", "6", "--T", "600", "--K-values", "10"]
    assert main([*argv, "--max-workers", "1", "--no-progress"]) == 0
    assert (workdir / "artifacts" / "fig1" / "aggregated" / "K10.csv").exists()

def test_compare_missing_directory(workdir: Path):
    assert main(["compare", "nowhere"]) == 2

def test_adversary_demo(workdir: Path, capsys):
    assert main(["adversary", "demo-impossibility"]) == 0
    out = capsys.readouterr().out
    assert "means match: True" in out
    assert "order under p: [2, 1, 3]" in out
    assert "top items differ: True" in out
