"""End-to-end CLI smoke tests on a tiny synthetic experiment."""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from phd.cli import EXIT_CONFIG, EXIT_DEPENDENCY, load_config, main


@pytest.fixture
def tiny_config(tmp_path):
    cfg = {
        "out_dir": str(tmp_path / "run"),
        "master_seed": 0,
        "t_h": 2,
        "synth": {"n_patients": 240, "dim": 8, "t_h": 2, "n_horizons": 3, "seed": 7,
                  "base_hazard": 0.05, "late_boost": 1.0, "ramp_power": 1.0},
        "train": {"epochs": 2, "patience": 2, "batch_size": 64},
        "eval": {"repetitions": 5, "n_splits": 2},
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path, tmp_path / "run"


def run_cli(*args):
    return CliRunner().invoke(main, list(args), catch_exceptions=False)


def test_load_config_rejects_unknown_fields(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{"out_dirs": "x"}')
    res = run_cli("gen-data", "--config", str(path))
    assert res.exit_code == EXIT_CONFIG


def test_load_config_rejects_bad_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{broken")
    res = run_cli("gen-data", "--config", str(path))
    assert res.exit_code == EXIT_CONFIG


def test_load_config_missing_file(tmp_path):
    res = run_cli("gen-data", "--config", str(tmp_path / "nope.json"))
    assert res.exit_code == EXIT_CONFIG


def test_config_hash_stable(tiny_config):
    path, _ = tiny_config
    assert load_config(str(path)).hash() == load_config(str(path)).hash()


def test_train_requires_cohort(tiny_config):
    path, _ = tiny_config
    res = run_cli("train", "--config", str(path), "--stage", "teachers")
    assert res.exit_code == EXIT_DEPENDENCY


def test_full_pipeline(tiny_config):
    path, out_dir = tiny_config

    res = run_cli("gen-data", "--config", str(path))
    assert res.exit_code == 0, res.output
    assert (out_dir / "cohort.jsonl").exists()
    assert (out_dir / "cohort.jsonl.emb").exists()
    assert "prevalence" in res.output

    # refuses to overwrite without --force
    res = run_cli("gen-data", "--config", str(path))
    assert res.exit_code == EXIT_CONFIG
    res = run_cli("gen-data", "--config", str(path), "--force")
    assert res.exit_code == 0

    res = run_cli("train", "--config", str(path), "--stage", "teachers")
    assert res.exit_code == 0, res.output
    for k in (1, 2, 3):
        assert (out_dir / "checkpoints" / f"teacher_k{k}.pt").exists()
    assert (out_dir / "logs" / "train_teachers.jsonl").exists()

    # student needs teacher checkpoints; baseline does not
    res = run_cli("train", "--config", str(path), "--stage", "student")
    assert res.exit_code == 0, res.output
    assert (out_dir / "checkpoints" / "student_phd.pt").exists()

    res = run_cli("train", "--config", str(path), "--stage", "baseline")
    assert res.exit_code == 0, res.output
    assert (out_dir / "checkpoints" / "student_nokd.pt").exists()

    res = run_cli("eval", "--config", str(path))
    assert res.exit_code == 0, res.output
    results = out_dir / "results"
    summary = json.loads((results / "summary.json").read_text())
    assert set(summary["models"]) == {"teacher_full_history", "baseline_no_history",
                                      "student_phd_no_history"}
    for rec in summary["models"].values():
        for h in rec["horizons"].values():
            assert 0.0 <= h["pauc_mean"] <= 1.0 or np.isnan(h["pauc_mean"])
    assert (results / "results.csv").exists()
    for model in summary["models"]:
        pred = results / f"predictions_{model}.csv"
        header = pred.read_text().splitlines()[0].split(",")
        assert header[:2] == ["patient_id", "exam_year"]
        assert "P_1" in header and "y_3" in header


def test_eval_detects_config_mismatch(tiny_config, tmp_path):
    path, out_dir = tiny_config
    assert run_cli("gen-data", "--config", str(path)).exit_code == 0
    assert run_cli("train", "--config", str(path), "--stage", "teachers").exit_code == 0

    # change a training knob: checkpoints no longer match the config hash
    raw = json.loads(path.read_text())
    raw["train"]["lr"] = 5e-4
    path.write_text(json.dumps(raw))
    res = run_cli("train", "--config", str(path), "--stage", "student")
    assert res.exit_code == EXIT_DEPENDENCY
    assert "different config" in res.output


def test_single_teacher_stage(tiny_config):
    path, out_dir = tiny_config
    assert run_cli("gen-data", "--config", str(path)).exit_code == 0
    res = run_cli("train", "--config", str(path), "--stage", "single-teacher")
    assert res.exit_code == 0, res.output
    assert (out_dir / "checkpoints" / "student_single.pt").exists()


def test_ablate_emits_csv_twinned_plots(tiny_config):
    path, out_dir = tiny_config
    assert run_cli("gen-data", "--config", str(path)).exit_code == 0
    res = run_cli("ablate", "--config", str(path), "--seeds", "1")
    assert res.exit_code == 0, res.output
    figures = out_dir / "figures"
    assert (figures / "ablation_ladder.csv").exists()
    assert (figures / "ablation_ladder.png").exists()
    assert (figures / "history_curve.csv").exists()
    assert (figures / "history_curve.png").exists()
