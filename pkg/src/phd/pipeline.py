"""End-to-end experiment orchestration: split, train teachers and student
variants, and evaluate them with the single-exam resampling protocol."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .data_model import Cohort, patient_level_split
from .distillation import (SequenceData, TeacherBundle, TrainConfig,
                           build_sequence_data, single_teacher_ablation,
                           train_student, train_student_ensemble,
                           train_teacher_bundle, tune_student_lambda)
from .embedding import build_history_sequence
from .evaluation import HorizonMetrics, history_ablation, sample_single_exam
from .risk_model import sequence_tensors


@dataclass
class SplitData:
    split: object
    train: SequenceData
    val: SequenceData
    test_patients: list


def make_split_data(cohort: Cohort, seed: int, t_h: int,
                    train_frac: float = 0.8, val_frac_of_train: float = 0.25) -> SplitData:
    split = patient_level_split(cohort, train_frac, val_frac_of_train, seed)
    return SplitData(
        split=split,
        train=build_sequence_data(cohort, split.train_ids, t_h),
        val=build_sequence_data(cohort, split.val_ids, t_h),
        test_patients=cohort.by_id(split.test_ids),
    )


# ---------------------------------------------------------------------------
# Cached scoring
# ---------------------------------------------------------------------------

def full_history_score_table(bundle: TeacherBundle, patients, t_h: int,
                             h_values=(None,)) -> dict:
    """Precompute per-horizon risk scores for every (patient, exam, #H)
    triple. h=None means all priors on file (up to t_h)."""
    keys, embs, presents = [], [], []
    for p in patients:
        for idx in range(len(p.exams)):
            for h in h_values:
                n_avail = t_h if h is None else h
                seq = build_history_sequence(p, idx, t_h, n_avail)
                emb, present = sequence_tensors(seq)
                keys.append((p.patient_id, idx, h))
                embs.append(emb)
                presents.append(present)
    with torch.no_grad():
        logits = bundle.logits(torch.cat(embs), torch.cat(presents))
        scores = torch.sigmoid(logits).numpy()
    return {k: scores[i] for i, k in enumerate(keys)}


def student_score_table(student, patients) -> dict:
    """Precompute student scores (current exam only) per (patient, exam)."""
    keys, x0s = [], []
    for p in patients:
        for idx, e in enumerate(p.exams):
            keys.append((p.patient_id, idx))
            x0s.append(np.asarray(e.embedding, dtype=np.float32))
    scores = student.score(np.stack(x0s))
    return {k: scores[i] for i, k in enumerate(keys)}


def teacher_score_fn(bundle: TeacherBundle, patients, t_h: int, n_available: int | None = None):
    table = full_history_score_table(bundle, patients, t_h, h_values=(n_available,))
    return lambda p, idx: table[(p.patient_id, idx, n_available)]


def teacher_ablation_score_fn(bundle: TeacherBundle, patients, t_h: int, h_values):
    table = full_history_score_table(bundle, patients, t_h, h_values=tuple(h_values))
    return lambda p, idx, h: table[(p.patient_id, idx, h)]


def student_score_fn(student, patients):
    table = student_score_table(student, patients)
    return lambda p, idx: table[(p.patient_id, idx)]


# ---------------------------------------------------------------------------
# Variant training + evaluation for one split seed
# ---------------------------------------------------------------------------

def run_variants(cohort: Cohort, seed: int, config: TrainConfig,
                 variants=("teacher_full", "student_phd", "student_single", "student_nokd"),
                 repetitions: int = 100, fpr_max: float = 0.1,
                 lambda_grid=None, eval_seed: int | None = None,
                 t_h: int = 4, n_members: int = 3) -> dict[str, HorizonMetrics]:
    """Train the requested model variants on one patient-level split and
    evaluate each with the single-exam protocol.

    Teachers are evaluated with full history; all students see only the
    current exam. Every student variant is an n_members mean-score ensemble
    (identical budget per variant), which averages out single-run training
    variance. lambda_grid=None uses config.lambda_logit as-is.
    """
    k, dim = cohort.n_horizons, cohort.dim
    data = make_split_data(cohort, seed, t_h)
    cfg = TrainConfig(**{**config.__dict__, "seed": seed})
    eval_seed = seed if eval_seed is None else eval_seed

    results: dict[str, HorizonMetrics] = {}
    teachers = None
    need_teachers = "teacher_full" in variants or "student_phd" in variants
    if need_teachers:
        teachers = train_teacher_bundle(data.train, data.val, cfg, dim, t_h, k)

    def evaluate(score_fn):
        return sample_single_exam(data.test_patients, score_fn, k,
                                  repetitions=repetitions, seed=eval_seed,
                                  fpr_max=fpr_max)

    if "teacher_full" in variants:
        results["teacher_full"] = evaluate(
            teacher_score_fn(teachers, data.test_patients, t_h, None))
    if "student_phd" in variants:
        if lambda_grid:
            student, _ = tune_student_lambda(teachers, data.train, data.val, cfg,
                                             dim, t_h, k, grid=lambda_grid)
        else:
            student = train_student_ensemble(teachers, data.train, data.val, cfg,
                                             dim, t_h, k, n_members=n_members)
        results["student_phd"] = evaluate(student_score_fn(student, data.test_patients))
    if "student_single" in variants:
        student = single_teacher_ablation(data.train, data.val, cfg, dim, t_h, k,
                                          n_members=n_members)
        results["student_single"] = evaluate(student_score_fn(student, data.test_patients))
    if "student_nokd" in variants:
        # no distillation of any kind: neither teacher logits nor the
        # privileged feature-reconstruction objective
        nokd_cfg = TrainConfig(**{**cfg.__dict__, "lambda_logit": 0.0,
                                  "lambda_feature": 0.0})
        student = train_student_ensemble(None, data.train, data.val, nokd_cfg,
                                         dim, t_h, k, n_members=n_members)
        results["student_nokd"] = evaluate(student_score_fn(student, data.test_patients))
    return results


def run_history_sweep(cohort: Cohort, seed: int, config: TrainConfig,
                      h_values=None, repetitions: int = 50,
                      fpr_max: float = 0.1, t_h: int = 4) -> dict[str, dict[int, HorizonMetrics]]:
    """History-availability ablation: the full-history model's metrics vs #H,
    alongside the PHD student's (flat by construction).

    The full-history model is the bundle of horizon-specific experts — the
    strongest history consumer and the same models that supervise the student.
    """
    if h_values is None:
        h_values = tuple(range(t_h + 1))
    k, dim = cohort.n_horizons, cohort.dim
    data = make_split_data(cohort, seed, t_h)
    cfg = TrainConfig(**{**config.__dict__, "seed": seed})

    teachers = train_teacher_bundle(data.train, data.val, cfg, dim, t_h, k)
    student = train_student(teachers, data.train, data.val, cfg, dim, t_h, k)

    full_fn = teacher_ablation_score_fn(teachers, data.test_patients, t_h, h_values)
    stu_table = student_score_table(student, data.test_patients)

    return {
        "full_history_model": history_ablation(full_fn, data.test_patients, k,
                                               h_values=h_values, repetitions=repetitions,
                                               seed=seed, fpr_max=fpr_max),
        "student_phd": history_ablation(
            lambda p, idx, h: stu_table[(p.patient_id, idx)],
            data.test_patients, k, h_values=h_values, repetitions=repetitions,
            seed=seed, fpr_max=fpr_max),
    }
