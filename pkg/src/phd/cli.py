"""Command-line entry point: data generation, staged training, evaluation and
ablations, all driven by a single JSON experiment config."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import click
import numpy as np

from .data_model import SynthConfig, derive_labels, generate_synthetic_cohort, load_cohort, save_cohort
from .distillation import (TeacherBundle, TrainConfig, load_checkpoint,
                           make_risk_model, save_checkpoint,
                           single_teacher_ablation, train_student,
                           train_teacher_bundle)
from .embedding import parameter_checksum
from .errors import DependencyError, NumericError, PhdError
from .evaluation import emit_history_curve, emit_ladder
from .history_reconstruction import HistoryPredictor
from .pipeline import (make_split_data, run_history_sweep, run_variants,
                       student_score_fn, teacher_score_fn)
from .risk_model import RiskModel

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEPENDENCY = 3
EXIT_NUMERIC = 4


class ConfigError(PhdError):
    pass


# ---------------------------------------------------------------------------
# Experiment config
# ---------------------------------------------------------------------------

@dataclass
class EvalConfig:
    n_splits: int = 10
    repetitions: int = 100
    fpr_max: float = 0.1
    lambda_grid: list = field(default_factory=lambda: [0.1, 0.5, 1.0, 2.0, 5.0])
    split_seed: int = 0
    train_frac: float = 0.8
    val_frac_of_train: float = 0.25


@dataclass
class ExperimentConfig:
    out_dir: str = "runs/exp"
    master_seed: int = 0
    cohort_path: str | None = None  # None: synthetic cohort in out_dir
    t_h: int = 4
    synth: SynthConfig = field(default_factory=SynthConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def hash(self) -> str:
        blob = json.dumps(_to_jsonable(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _to_jsonable(cfg: ExperimentConfig) -> dict:
    return {
        "out_dir": cfg.out_dir, "master_seed": cfg.master_seed,
        "cohort_path": cfg.cohort_path, "t_h": cfg.t_h,
        "synth": asdict(cfg.synth), "train": asdict(cfg.train),
        "eval": asdict(cfg.eval),
    }


def _build_section(cls, raw: dict, section: str):
    try:
        return cls(**raw)
    except TypeError as exc:
        bad = str(exc).split("'")
        name = bad[1] if len(bad) > 1 else "?"
        raise ConfigError(f"unknown or invalid field '{name}' in config section '{section}'")
    except ValueError as exc:
        raise ConfigError(f"invalid value in config section '{section}': {exc}")


def load_config(path: str) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    known = {"out_dir", "master_seed", "cohort_path", "t_h", "synth", "train", "eval"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
    cfg = ExperimentConfig(
        out_dir=raw.get("out_dir", "runs/exp"),
        master_seed=raw.get("master_seed", 0),
        cohort_path=raw.get("cohort_path"),
        t_h=raw.get("t_h", 4),
        synth=_build_section(SynthConfig, raw.get("synth", {}), "synth"),
        train=_build_section(TrainConfig, raw.get("train", {}), "train"),
        eval=_build_section(EvalConfig, raw.get("eval", {}), "eval"),
    )
    env_out = os.environ.get("PHD_OUT")
    if env_out:
        cfg.out_dir = env_out
    return cfg


def _cohort_file(cfg: ExperimentConfig) -> Path:
    if cfg.cohort_path:
        return Path(cfg.cohort_path)
    return Path(cfg.out_dir) / "cohort.jsonl"


def _load_cohort(cfg: ExperimentConfig):
    path = _cohort_file(cfg)
    if not path.exists():
        raise DependencyError(f"cohort file not found: {path} (run gen-data first)")
    return load_cohort(path)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

@click.group()
def main():
    """Privileged history distillation experiments."""


def _handled(fn):
    def wrapper(*args, **kwargs):
        try:
            fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except DependencyError as exc:
            click.echo(f"dependency error: {exc}", err=True)
            sys.exit(EXIT_DEPENDENCY)
        except NumericError as exc:
            click.echo(f"numeric failure: {exc}", err=True)
            sys.exit(EXIT_NUMERIC)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@main.command("gen-data")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="Override synth seed.")
@click.option("--force", is_flag=True, help="Overwrite an existing cohort file.")
@_handled
def cmd_gen_data(config_path, seed, force):
    """Generate the synthetic cohort and write manifest + embedding sidecar."""
    cfg = load_config(config_path)
    synth = cfg.synth if seed is None else SynthConfig(**{**asdict(cfg.synth), "seed": seed})
    out = _cohort_file(cfg)
    if out.exists() and not force:
        raise ConfigError(f"{out} exists; pass --force to overwrite")
    out.parent.mkdir(parents=True, exist_ok=True)
    cohort = generate_synthetic_cohort(synth)
    save_cohort(cohort, out)

    labels = np.stack([derive_labels(p.diagnosis_year, p.censor_year, cohort.n_horizons)
                       for p in cohort.patients])
    n_exams = sum(len(p.exams) for p in cohort.patients)
    click.echo(f"cohort: {len(cohort.patients)} patients, {n_exams} exams, "
               f"D={cohort.dim}, K={cohort.n_horizons} -> {out}")
    for j in range(cohort.n_horizons):
        col = labels[:, j]
        n_pos, n_unmasked = int((col == 1).sum()), int((col != -1).sum())
        click.echo(f"  horizon {j + 1}: prevalence {n_pos / max(n_unmasked, 1):.3f} "
                   f"({n_pos}/{n_unmasked} unmasked)")


def _checkpoint_dir(cfg) -> Path:
    return Path(cfg.out_dir) / "checkpoints"


def _dims_dict(cfg, cohort) -> dict:
    return {"dim": cohort.dim, "t_h": cfg.t_h, "n_horizons": cohort.n_horizons,
            "n_layers": cfg.train.n_layers, "n_heads": cfg.train.n_heads}


def _rebuild_risk_model(ckpt, train_cfg: TrainConfig) -> RiskModel:
    d = ckpt["dims"]
    cfg = TrainConfig(**{**train_cfg.__dict__, "n_layers": d["n_layers"],
                         "n_heads": d["n_heads"]})
    model = make_risk_model(d["dim"], d["t_h"], d["n_horizons"], cfg)
    model.load_state_dict(ckpt["state_dict"])
    return model


def _load_teacher_bundle(cfg, n_horizons: int) -> TeacherBundle:
    experts = []
    for k in range(1, n_horizons + 1):
        path = _checkpoint_dir(cfg) / f"teacher_k{k}.pt"
        ckpt = load_checkpoint(path)
        _check_hash(ckpt, cfg, path)
        model = _rebuild_risk_model(ckpt, cfg.train)
        model.eval()
        for p in model.parameters():
            p.requires_grad_(False)
        experts.append(model)
    return TeacherBundle(experts=experts,
                         checksums=[parameter_checksum(m) for m in experts])


_ALLOW_MISMATCH = False


def _check_hash(ckpt, cfg, path):
    if ckpt.get("config_hash") != cfg.hash() and not _ALLOW_MISMATCH:
        raise DependencyError(
            f"checkpoint {path} was produced under a different config "
            f"(hash {ckpt.get('config_hash')} != {cfg.hash()}); pass --allow-mismatch to override")


@main.command("train")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--stage", required=True,
              type=click.Choice(["teachers", "student", "baseline", "single-teacher"]))
@_handled
def cmd_train(config_path, stage):
    """Train one pipeline stage and write checkpoints + a JSONL training log."""
    cfg = load_config(config_path)
    cohort = _load_cohort(cfg)
    data = make_split_data(cohort, cfg.eval.split_seed, cfg.t_h,
                           cfg.eval.train_frac, cfg.eval.val_frac_of_train)
    dims = _dims_dict(cfg, cohort)
    ckpt_dir = _checkpoint_dir(cfg)
    log = Path(cfg.out_dir) / "logs" / f"train_{stage}.jsonl"
    k = cohort.n_horizons

    if stage == "teachers":
        bundle = train_teacher_bundle(data.train, data.val, cfg.train,
                                      cohort.dim, cfg.t_h, k, log_path=log)
        for i, expert in enumerate(bundle.experts, start=1):
            save_checkpoint(ckpt_dir / f"teacher_k{i}.pt", f"teacher_k{i}",
                            expert, dims, cfg.hash())
        click.echo(f"wrote {k} teacher checkpoints to {ckpt_dir}")
    elif stage == "student":
        bundle = _load_teacher_bundle(cfg, k)
        student = train_student(bundle, data.train, data.val, cfg.train,
                                cohort.dim, cfg.t_h, k, log_path=log)
        save_checkpoint(ckpt_dir / "student_phd.pt", "student_phd", student, dims, cfg.hash())
        click.echo(f"wrote {ckpt_dir / 'student_phd.pt'}")
    elif stage == "baseline":
        nokd = TrainConfig(**{**cfg.train.__dict__, "lambda_logit": 0.0})
        student = train_student(None, data.train, data.val, nokd,
                                cohort.dim, cfg.t_h, k, log_path=log)
        save_checkpoint(ckpt_dir / "student_nokd.pt", "student_nokd", student, dims, cfg.hash())
        click.echo(f"wrote {ckpt_dir / 'student_nokd.pt'}")
    else:
        student = single_teacher_ablation(data.train, data.val, cfg.train,
                                          cohort.dim, cfg.t_h, k, log_path=log)
        save_checkpoint(ckpt_dir / "student_single.pt", "student_single", student, dims, cfg.hash())
        click.echo(f"wrote {ckpt_dir / 'student_single.pt'}")


def _load_student(cfg, name: str):
    from .distillation import StudentModel
    path = _checkpoint_dir(cfg) / f"{name}.pt"
    ckpt = load_checkpoint(path)
    _check_hash(ckpt, cfg, path)
    d = ckpt["dims"]
    train_cfg = TrainConfig(**{**cfg.train.__dict__, "n_layers": d["n_layers"],
                               "n_heads": d["n_heads"]})
    student = StudentModel(HistoryPredictor(d["dim"], t_h=d["t_h"]),
                           make_risk_model(d["dim"], d["t_h"], d["n_horizons"], train_cfg))
    student.load_state_dict(ckpt["state_dict"])
    student.eval()
    return student


@main.command("eval")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--allow-mismatch", is_flag=True,
              help="Evaluate checkpoints whose config hash differs.")
@_handled
def cmd_eval(config_path, allow_mismatch):
    """Evaluate trained checkpoints with the single-exam protocol and write a
    summary table (mean±std AUC / pAUC per horizon)."""
    global _ALLOW_MISMATCH
    _ALLOW_MISMATCH = allow_mismatch
    cfg = load_config(config_path)
    cohort = _load_cohort(cfg)
    data = make_split_data(cohort, cfg.eval.split_seed, cfg.t_h,
                           cfg.eval.train_frac, cfg.eval.val_frac_of_train)
    k = cohort.n_horizons
    from .evaluation import sample_single_exam

    rows = {}
    score_fns = {}
    bundle = _load_teacher_bundle(cfg, k)
    score_fns["teacher_full_history"] = (cfg.t_h, teacher_score_fn(
        bundle, data.test_patients, cfg.t_h, None))
    for name, label in (("student_nokd", "baseline_no_history"),
                        ("student_phd", "student_phd_no_history")):
        student = _load_student(cfg, name)
        score_fns[label] = (0, student_score_fn(student, data.test_patients))

    results_dir = Path(cfg.out_dir) / "results"
    results_dir.mkdir(parents=True, exist_ok=True)
    for label, (n_h, fn) in score_fns.items():
        metrics = sample_single_exam(data.test_patients, fn, k,
                                     repetitions=cfg.eval.repetitions,
                                     seed=cfg.master_seed, fpr_max=cfg.eval.fpr_max)
        rows[label] = {"n_history": n_h, "horizons": {
            str(j + 1): {
                "auc_mean": float(metrics.auc[j]), "auc_std": float(metrics.auc_std[j]),
                "pauc_mean": float(metrics.pauc[j]), "pauc_std": float(metrics.pauc_std[j]),
            } for j in range(k)}}
        _dump_predictions(results_dir / f"predictions_{label}.csv",
                          data.test_patients, fn, k)

    summary = {"config_hash": cfg.hash(), "repetitions": cfg.eval.repetitions,
               "fpr_max": cfg.eval.fpr_max, "models": rows}
    (results_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    with open(results_dir / "results.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["model", "n_history", "horizon", "auc_mean", "auc_std",
                         "pauc_mean", "pauc_std"])
        for label, rec in rows.items():
            for j in range(k):
                h = rec["horizons"][str(j + 1)]
                writer.writerow([label, rec["n_history"], j + 1, h["auc_mean"],
                                 h["auc_std"], h["pauc_mean"], h["pauc_std"]])
    click.echo(f"wrote {results_dir / 'summary.json'}")
    for label, rec in rows.items():
        cells = "  ".join(f"{j + 1}y {rec['horizons'][str(j + 1)]['pauc_mean']:.3f}"
                          for j in range(k))
        click.echo(f"{label:28s} #H={rec['n_history']}  pAUC: {cells}")


def _dump_predictions(path, patients, score_fn, k):
    from .data_model import patient_labels
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["patient_id", "exam_year"]
                        + [f"P_{j + 1}" for j in range(k)]
                        + [f"y_{j + 1}" for j in range(k)])
        for p in patients:
            for idx, e in enumerate(p.exams):
                scores = score_fn(p, idx)
                labels = patient_labels(p, k, current_year=e.relative_year)
                writer.writerow([p.patient_id, e.relative_year]
                                + [f"{s:.6f}" for s in scores] + list(labels))


@main.command("ablate")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--seeds", type=int, default=1, help="Number of split seeds to average.")
@_handled
def cmd_ablate(config_path, seeds):
    """Run the ablation ladder (no-KD / 1-teacher / K-teacher) and the history
    availability sweep; emit plots with CSV twins."""
    cfg = load_config(config_path)
    cohort = _load_cohort(cfg)
    k = cohort.n_horizons
    out_dir = Path(cfg.out_dir) / "figures"

    ladder_vals = {"student_nokd": [], "student_single": [], "student_phd": []}
    for s in range(seeds):
        seed = cfg.master_seed + s
        res = run_variants(cohort, seed, cfg.train,
                           variants=("student_nokd", "student_single", "student_phd"),
                           repetitions=cfg.eval.repetitions, fpr_max=cfg.eval.fpr_max,
                           t_h=cfg.t_h)
        for name in ladder_vals:
            ladder_vals[name].append(res[name].pauc[k - 1])
    ladder = {name: float(np.mean(v)) for name, v in ladder_vals.items()}
    files = emit_ladder(ladder, out_dir)

    sweep = run_history_sweep(cohort, cfg.master_seed, cfg.train,
                              repetitions=min(cfg.eval.repetitions, 50),
                              fpr_max=cfg.eval.fpr_max, t_h=cfg.t_h)
    files += emit_history_curve(sweep, k, out_dir)

    files_str = "\n  ".join(str(f) for f in files)
    click.echo(f"ablation ladder (5y pAUC): {ladder}")
    click.echo(f"wrote:\n  {files_str}")


if __name__ == "__main__":
    main()
