"""Privileged history distillation: horizon-specific frozen teachers trained
on true history, and a student trained on reconstructed history with the
combined RCE + per-horizon logit KD objective."""

from __future__ import annotations

import json
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .data_model import Cohort, derive_labels
from .embedding import parameter_checksum
from .errors import DegenerateSampleError
from .evaluation import auc
from .history_reconstruction import HistoryPredictor, feature_kd_loss_batch
from .risk_model import (HazardHead, RiskModel, SelfAttentionAggregator,
                         compute_pos_weights, rce_loss_batch)


@dataclass(frozen=True)
class TrainConfig:
    lambda_logit: float = 5.0
    lambda_feature: float = 1.0
    lr: float = 1e-3
    epochs: int = 30
    patience: int = 5
    batch_size: int = 128
    seed: int = 0
    temperature: float = 1.0
    weight_decay: float = 1e-4
    dropout: float = 0.1
    n_layers: int = 2
    n_heads: int = 4
    feature_pretrain_epochs: int = 15  # >0 enables the two-stage schedule
    ema_decay: float = 0.995  # per-step Polyak weight averaging; 0 disables

    def __post_init__(self):
        if self.lambda_logit < 0 or self.lambda_feature < 0:
            raise ValueError("loss coefficients must be non-negative")
        if self.epochs <= 0 or self.patience <= 0 or self.batch_size <= 0:
            raise ValueError("epochs, patience and batch_size must be positive")
        if not 0 <= self.ema_decay < 1:
            raise ValueError("ema_decay must lie in [0, 1)")


# ---------------------------------------------------------------------------
# Tensorized training data
# ---------------------------------------------------------------------------

@dataclass
class SequenceData:
    """Per-patient training tensors: current embedding, true priors with an
    availability mask, and masked labels."""

    x0: np.ndarray          # (N, D)
    priors: np.ndarray      # (N, T_h, D); zero rows where unavailable
    prior_mask: np.ndarray  # (N, T_h) bool; slot i is offset -(i+1)
    labels: np.ndarray      # (N, K) in {0, 1, -1}
    patient_ids: list[str]

    def __len__(self) -> int:
        return len(self.x0)


def build_sequence_data(cohort: Cohort, ids, t_h: int,
                        all_exams: bool = True) -> SequenceData:
    """Assemble training tensors.

    all_exams=True (default) emits one sample per exam, treating each exam as
    the current one with its own history window and shifted labels, matching
    the single-exam evaluation protocol. all_exams=False uses only the
    reference exam (relative year 0).
    """
    from .data_model import patient_labels

    patients = cohort.by_id(ids)
    d, k = cohort.dim, cohort.n_horizons
    rows_x0, rows_priors, rows_mask, rows_labels, row_ids = [], [], [], [], []
    for p in patients:
        exam_indices = range(len(p.exams)) if all_exams \
            else [i for i, e in enumerate(p.exams) if e.relative_year == 0]
        if not all_exams and not exam_indices:
            raise ValueError(f"patient {p.patient_id} has no reference exam")
        for idx in exam_indices:
            current = p.exams[idx]
            if current.embedding is None:
                raise ValueError(f"patient {p.patient_id} exam {idx} has no embedding")
            pri = np.zeros((t_h, d), dtype=np.float32)
            msk = np.zeros(t_h, dtype=bool)
            for e in p.exams[:idx]:
                offset = current.relative_year - e.relative_year
                if 1 <= offset <= t_h and e.available and e.embedding is not None:
                    pri[offset - 1] = e.embedding
                    msk[offset - 1] = True
            rows_x0.append(np.asarray(current.embedding, dtype=np.float32))
            rows_priors.append(pri)
            rows_mask.append(msk)
            rows_labels.append(patient_labels(p, k, current_year=current.relative_year))
            row_ids.append(p.patient_id)
    return SequenceData(x0=np.stack(rows_x0), priors=np.stack(rows_priors),
                        prior_mask=np.stack(rows_mask),
                        labels=np.stack(rows_labels).astype(np.int64),
                        patient_ids=row_ids)


def _true_history_batch(data: SequenceData, idx, device=None):
    x0 = torch.as_tensor(data.x0[idx])
    priors = torch.as_tensor(data.priors[idx])
    emb = torch.cat([x0.unsqueeze(1), priors], dim=1)
    present = torch.cat([torch.ones(len(idx), 1, dtype=torch.bool),
                         torch.as_tensor(data.prior_mask[idx])], dim=1)
    return emb, present


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def logit_kd_loss(teacher_logits: torch.Tensor, student_logits: torch.Tensor,
                  mask: torch.Tensor, temperature: float = 1.0) -> torch.Tensor:
    """Masked mean over horizons of KL(Bernoulli(sigmoid(z_tea)) ||
    Bernoulli(sigmoid(z_stu))) for one sample. Teacher logits are detached."""
    if teacher_logits.shape != student_logits.shape or teacher_logits.shape != mask.shape:
        raise ValueError("teacher logits, student logits and mask must share length K")
    m = mask.to(student_logits.dtype)
    n_valid = m.sum()
    if n_valid.item() == 0:
        raise DegenerateSampleError("all horizons masked for this sample")
    z_t = teacher_logits.detach() / temperature
    z_s = student_logits / temperature
    p = torch.sigmoid(z_t)
    kl = p * (F.logsigmoid(z_t) - F.logsigmoid(z_s)) \
        + (1.0 - p) * (F.logsigmoid(-z_t) - F.logsigmoid(-z_s))
    return (kl * m).sum() / n_valid


def logit_kd_loss_batch(teacher_logits: torch.Tensor, student_logits: torch.Tensor,
                        mask: torch.Tensor, temperature: float = 1.0) -> torch.Tensor:
    """Batch mean of per-sample logit KD losses; fully-masked rows contribute
    zero (callers drop/count them via the RCE path)."""
    m = mask.to(student_logits.dtype)
    z_t = teacher_logits.detach() / temperature
    z_s = student_logits / temperature
    p = torch.sigmoid(z_t)
    kl = p * (F.logsigmoid(z_t) - F.logsigmoid(z_s)) \
        + (1.0 - p) * (F.logsigmoid(-z_t) - F.logsigmoid(-z_s))
    n_valid = m.sum(dim=-1)
    per_sample = (kl * m).sum(dim=-1) / n_valid.clamp(min=1.0)
    keep = n_valid > 0
    if not keep.any():
        raise DegenerateSampleError("every sample in the batch is fully masked")
    return per_sample[keep].mean()


def total_loss(rce: torch.Tensor, kd_logit: torch.Tensor | None,
               kd_feature: torch.Tensor | None, lambda_logit: float,
               lambda_feature: float) -> torch.Tensor:
    """L_total = L_RCE + lambda_logit * L_KD_logit + lambda_feature * L_KD_feature.

    lambda_feature = 0 recovers the plain RCE + logit-KD objective; both
    coefficients 0 give exactly the RCE value.
    """
    if lambda_logit < 0 or lambda_feature < 0:
        raise ValueError("loss coefficients must be non-negative")
    out = rce
    if lambda_logit != 0:
        if kd_logit is None:
            raise ValueError("lambda_logit > 0 requires a logit KD term")
        out = out + lambda_logit * kd_logit
    if lambda_feature != 0:
        if kd_feature is None:
            raise ValueError("lambda_feature > 0 requires a feature KD term")
        out = out + lambda_feature * kd_feature
    return out


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

@dataclass
class TeacherBundle:
    """K frozen uni-task horizon experts (or one multi-task expert reused for
    every horizon) used only to supervise the student."""

    experts: list[RiskModel]
    checksums: list[str]
    multi_task: bool = False

    @property
    def n_horizons(self) -> int:
        return 1 if self.multi_task else len(self.experts)

    def verify_frozen(self) -> bool:
        return all(parameter_checksum(m) == c for m, c in zip(self.experts, self.checksums))

    def logits(self, emb: torch.Tensor, present: torch.Tensor) -> torch.Tensor:
        """Per-horizon teacher logits on a true-history batch: column k comes
        from expert k (uni-task) or from the single expert (multi-task)."""
        with torch.no_grad():
            if self.multi_task:
                return self.experts[0](emb, present).logits
            cols = [expert(emb, present).logits[:, k]
                    for k, expert in enumerate(self.experts)]
            return torch.stack(cols, dim=-1)


def _freeze(model: nn.Module) -> None:
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)


def make_risk_model(dim: int, t_h: int, n_horizons: int, config: TrainConfig) -> RiskModel:
    agg = SelfAttentionAggregator(dim, t_h=t_h, n_layers=config.n_layers,
                                  n_heads=config.n_heads, dropout=config.dropout)
    return RiskModel(agg, HazardHead(dim, n_horizons))


class StudentModel(nn.Module):
    """History predictor plus risk pathway; consumes only the current exam
    embedding (true priors are never read at inference).

    The risk pathway consumes the reconstructions as fixed inputs (detached),
    so the predictor is shaped only by the feature objective and risk
    supervision cannot corrupt the reconstruction (or vice versa)."""

    def __init__(self, predictor: HistoryPredictor, risk: RiskModel):
        super().__init__()
        self.predictor = predictor
        self.risk = risk

    def forward(self, x0: torch.Tensor):
        x_hat = self.predictor(x0)  # (B, T_h, D)
        emb = torch.cat([x0.unsqueeze(1), x_hat.detach()], dim=1)
        present = torch.ones(emb.shape[:2], dtype=torch.bool, device=emb.device)
        return self.risk(emb, present), x_hat

    def score(self, x0: np.ndarray) -> np.ndarray:
        """Eval-mode cumulative risk for a batch of current-exam embeddings."""
        was_training = self.training
        self.eval()
        try:
            with torch.no_grad():
                out, _ = self(torch.as_tensor(np.atleast_2d(x0), dtype=torch.float32))
                return out.cum_risk.numpy()
        finally:
            self.train(was_training)


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------

def _val_mean_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    vals = []
    for j in range(labels.shape[1]):
        col = labels[:, j]
        if (col == 1).any() and (col == 0).any():
            vals.append(auc(scores[:, j], col))
    return float(np.mean(vals)) if vals else float("nan")


class _EmaTracker:
    """Per-step Polyak average of a module's floating-point parameters.

    Validation and checkpoint selection use the averaged weights: single-epoch
    snapshots of these small models are noisy, and the running average is a
    markedly more stable estimator of where training has converged."""

    def __init__(self, module: torch.nn.Module, decay: float):
        self.decay = decay
        self.steps = 0
        # zero-initialized with bias correction: the average covers only the
        # optimization trajectory, never the random initialization
        self.shadow = {k: torch.zeros_like(v) if v.dtype.is_floating_point
                       else v.detach().clone()
                       for k, v in module.state_dict().items()}

    def update(self, module: torch.nn.Module):
        self.steps += 1
        for k, v in module.state_dict().items():
            s = self.shadow[k]
            if v.dtype.is_floating_point:
                s.mul_(self.decay).add_(v.detach(), alpha=1 - self.decay)
            else:
                s.copy_(v)

    def state(self) -> dict:
        correction = 1.0 - self.decay ** self.steps if self.steps else 1.0
        return {k: v / correction if v.dtype.is_floating_point else v.detach().clone()
                for k, v in self.shadow.items()}

    @contextmanager
    def applied(self, module: torch.nn.Module):
        """Temporarily load the averaged weights into the module."""
        backup = {k: v.detach().clone() for k, v in module.state_dict().items()}
        module.load_state_dict(self.state())
        try:
            yield
        finally:
            module.load_state_dict(backup)


class _JsonlLogger:
    def __init__(self, path):
        self.path = Path(path) if path else None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def log(self, **record):
        if self.path:
            with open(self.path, "a") as f:
                f.write(json.dumps(record) + "\n")


def _train_risk_model(model: RiskModel, train: SequenceData, val: SequenceData,
                      config: TrainConfig, horizon: int | None,
                      log_path=None, tag: str = "model") -> RiskModel:
    """Shared full-history training loop. horizon=None trains multi-task;
    otherwise the RCE is masked to that single 1-based horizon."""
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    logger = _JsonlLogger(log_path)
    k = train.labels.shape[1]

    labels = train.labels.copy()
    if horizon is not None:
        restricted = np.full_like(labels, -1)
        restricted[:, horizon - 1] = labels[:, horizon - 1]
        labels = restricted
        if not (labels[:, horizon - 1] == 1).any():
            raise ValueError(f"no positive training labels at horizon {horizon}")
    w = torch.as_tensor(compute_pos_weights(labels) if horizon is None
                        else _single_horizon_weights(labels, horizon), dtype=torch.float32)
    labels_t = torch.as_tensor(labels)

    opt = torch.optim.Adam(model.parameters(), lr=config.lr,
                           weight_decay=config.weight_decay)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=config.epochs)
    ema = _EmaTracker(model, config.ema_decay)
    best_metric, bad_epochs = -np.inf, 0
    n_dropped_total = 0

    for epoch in range(config.epochs):
        model.train()
        order = rng.permutation(len(train))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            emb, present = _true_history_batch(train, idx)
            out = model(emb, present)
            try:
                loss, n_dropped = rce_loss_batch(out.cum_risk, labels_t[idx], w)
            except DegenerateSampleError:
                n_dropped_total += len(idx)
                continue
            n_dropped_total += n_dropped
            opt.zero_grad()
            loss.backward()
            opt.step()
            ema.update(model)
            epoch_loss += float(loss.item())
            n_batches += 1
        sched.step()

        with ema.applied(model):
            val_scores = _score_full_history(model, val)
        val_labels = val.labels if horizon is None else _restrict(val.labels, horizon)
        metric = _val_mean_auc(val_scores, val_labels)
        logger.log(tag=tag, epoch=epoch, split="val", mean_auc=metric,
                   train_loss=epoch_loss / max(n_batches, 1),
                   dropped_samples=n_dropped_total)
        if np.isfinite(metric) and metric > best_metric:
            best_metric, bad_epochs = metric, 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                break
    # the returned weights are the averaged trajectory at stopping time: the
    # validation metric decides only when to stop, not which snapshot to keep,
    # so a noisy single-epoch validation estimate cannot pick the checkpoint
    if ema.steps:
        model.load_state_dict(ema.state())
    return model


def _single_horizon_weights(restricted_labels: np.ndarray, horizon: int) -> np.ndarray:
    col = restricted_labels[:, horizon - 1]
    n_pos = max(int((col == 1).sum()), 1)
    n_neg = int((col == 0).sum())
    w = np.ones(restricted_labels.shape[1])
    w[horizon - 1] = min(n_neg / n_pos, 100.0)
    return w


def _restrict(labels: np.ndarray, horizon: int) -> np.ndarray:
    out = np.full_like(labels, -1)
    out[:, horizon - 1] = labels[:, horizon - 1]
    return out


def _score_full_history(model: RiskModel, data: SequenceData) -> np.ndarray:
    model.eval()
    with torch.no_grad():
        emb, present = _true_history_batch(data, np.arange(len(data)))
        return model(emb, present).cum_risk.numpy()


def train_teacher(horizon: int, train: SequenceData, val: SequenceData,
                  config: TrainConfig, dim: int, t_h: int, n_horizons: int,
                  log_path=None) -> RiskModel:
    """Train one frozen uni-task expert on full true history, selected by best
    validation AUC at its horizon."""
    if not (1 <= horizon <= n_horizons):
        raise ValueError(f"horizon must lie in 1..{n_horizons}")
    model = make_risk_model(dim, t_h, n_horizons,
                            _reseed(config, config.seed + 1000 * horizon))
    model = _train_risk_model(model, train, val,
                              _reseed(config, config.seed + 1000 * horizon),
                              horizon, log_path, tag=f"teacher_{horizon}")
    _freeze(model)
    return model


def train_teacher_bundle(train: SequenceData, val: SequenceData, config: TrainConfig,
                         dim: int, t_h: int, n_horizons: int, log_path=None) -> TeacherBundle:
    experts = [train_teacher(k, train, val, config, dim, t_h, n_horizons, log_path)
               for k in range(1, n_horizons + 1)]
    return TeacherBundle(experts=experts,
                         checksums=[parameter_checksum(m) for m in experts])


def train_multitask_teacher(train: SequenceData, val: SequenceData, config: TrainConfig,
                            dim: int, t_h: int, n_horizons: int, log_path=None) -> TeacherBundle:
    """One full-history model trained on all horizons jointly, wrapped as a
    single-teacher bundle for the ablation."""
    model = make_risk_model(dim, t_h, n_horizons, config)
    model = _train_risk_model(model, train, val, config, None, log_path, tag="multitask_teacher")
    _freeze(model)
    return TeacherBundle(experts=[model], checksums=[parameter_checksum(model)],
                         multi_task=True)


def _reseed(config: TrainConfig, seed: int) -> TrainConfig:
    return TrainConfig(**{**config.__dict__, "seed": seed})


def train_student(teachers: TeacherBundle | None, train: SequenceData, val: SequenceData,
                  config: TrainConfig, dim: int, t_h: int, n_horizons: int,
                  log_path=None) -> StudentModel:
    """Train the student on reconstructed-history sequences with the combined
    RCE + logit-KD + feature-KD objective; teachers stay frozen.

    teachers=None requires lambda_logit == 0 (the no-KD baseline).
    """
    if teachers is None and config.lambda_logit > 0:
        raise ValueError("lambda_logit > 0 requires a teacher bundle")
    if teachers is not None and not teachers.multi_task and len(teachers.experts) != n_horizons:
        raise ValueError(f"teacher bundle has {len(teachers.experts)} experts, "
                         f"expected {n_horizons}")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    logger = _JsonlLogger(log_path)

    predictor = HistoryPredictor(dim, t_h=t_h)
    student = StudentModel(predictor, make_risk_model(dim, t_h, n_horizons, config))
    w = torch.as_tensor(compute_pos_weights(train.labels), dtype=torch.float32)
    labels_t = torch.as_tensor(train.labels)
    priors_t = torch.as_tensor(train.priors)
    prior_mask_t = torch.as_tensor(train.prior_mask)
    x0_t = torch.as_tensor(train.x0)
    kd_mask = (labels_t != -1)

    # two-stage schedule: warm up the history predictor alone, so the risk
    # pathway sees informative reconstructions from the first epoch instead of
    # learning to ignore untrained slots (only when the feature objective is on)
    if config.feature_pretrain_epochs > 0 and config.lambda_feature > 0:
        pre_opt = torch.optim.Adam(predictor.parameters(), lr=config.lr)
        for _ in range(config.feature_pretrain_epochs):
            order = rng.permutation(len(train))
            for start in range(0, len(order), config.batch_size):
                idx = order[start:start + config.batch_size]
                x_hat = predictor(x0_t[idx])
                loss = feature_kd_loss_batch(priors_t[idx], x_hat, prior_mask_t[idx])
                pre_opt.zero_grad()
                loss.backward()
                pre_opt.step()

    opt = torch.optim.Adam(student.parameters(), lr=config.lr,
                           weight_decay=config.weight_decay)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=config.epochs)
    ema = _EmaTracker(student, config.ema_decay)
    best_metric, bad_epochs = -np.inf, 0
    n_dropped_total = 0

    for epoch in range(config.epochs):
        student.train()
        order = rng.permutation(len(train))
        sums = {"rce": 0.0, "kd_logit": 0.0, "kd_feature": 0.0}
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            out, x_hat = student(x0_t[idx])
            try:
                rce, n_dropped = rce_loss_batch(out.cum_risk, labels_t[idx], w)
            except DegenerateSampleError:
                n_dropped_total += len(idx)
                continue
            n_dropped_total += n_dropped
            kd_logit = None
            if config.lambda_logit > 0:
                emb, present = _true_history_batch(train, idx)
                z_tea = teachers.logits(emb, present)
                kd_logit = logit_kd_loss_batch(z_tea, out.logits, kd_mask[idx],
                                               temperature=config.temperature)
            kd_feature = None
            if config.lambda_feature > 0:
                kd_feature = feature_kd_loss_batch(priors_t[idx], x_hat, prior_mask_t[idx])
            loss = total_loss(rce, kd_logit, kd_feature,
                              config.lambda_logit, config.lambda_feature)
            opt.zero_grad()
            loss.backward()
            opt.step()
            ema.update(student)
            sums["rce"] += float(rce.item())
            sums["kd_logit"] += float(kd_logit.item()) if kd_logit is not None else 0.0
            sums["kd_feature"] += float(kd_feature.item()) if kd_feature is not None else 0.0
            n_batches += 1
        sched.step()

        with ema.applied(student):
            val_scores = student.score(val.x0)
        metric = _val_mean_auc(val_scores, val.labels)
        logger.log(tag="student", epoch=epoch, split="val", mean_auc=metric,
                   dropped_samples=n_dropped_total,
                   **{k_: v / max(n_batches, 1) for k_, v in sums.items()})
        if np.isfinite(metric) and metric > best_metric:
            best_metric, bad_epochs = metric, 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                break
    if ema.steps:
        student.load_state_dict(ema.state())
    if teachers is not None and not teachers.verify_frozen():
        raise RuntimeError("teacher parameters changed during student training")
    return student


class StudentEnsemble:
    """Mean-score ensemble over independently seeded student trainings;
    averages out initialization/shuffling variance of a single run."""

    def __init__(self, members: list[StudentModel]):
        if not members:
            raise ValueError("ensemble needs at least one member")
        self.members = members

    def score(self, x0: np.ndarray) -> np.ndarray:
        return np.mean([m.score(x0) for m in self.members], axis=0)


def train_student_ensemble(teachers: TeacherBundle | None, train: SequenceData,
                           val: SequenceData, config: TrainConfig, dim: int,
                           t_h: int, n_horizons: int, n_members: int = 3,
                           log_path=None) -> StudentEnsemble:
    """Train n_members students with distinct seeds and pool their scores."""
    members = [train_student(teachers, train, val,
                             _reseed(config, config.seed + 101 * j),
                             dim, t_h, n_horizons, log_path)
               for j in range(n_members)]
    return StudentEnsemble(members)


def single_teacher_ablation(train: SequenceData, val: SequenceData, config: TrainConfig,
                            dim: int, t_h: int, n_horizons: int,
                            log_path=None, n_members: int = 1) -> StudentModel | StudentEnsemble:
    """Student supervised by one multi-task full-history teacher instead of K
    uni-task experts."""
    teacher = train_multitask_teacher(train, val, config, dim, t_h, n_horizons, log_path)
    if n_members == 1:
        return train_student(teacher, train, val, config, dim, t_h, n_horizons, log_path)
    return train_student_ensemble(teacher, train, val, config, dim, t_h, n_horizons,
                                  n_members, log_path)


def tune_student_lambda(teachers: TeacherBundle, train: SequenceData, val: SequenceData,
                        config: TrainConfig, dim: int, t_h: int, n_horizons: int,
                        grid=(0.1, 0.5, 1.0, 2.0, 5.0)) -> tuple[StudentModel, float]:
    """Pick lambda_logit on the validation split by pAUC@10% at the longest
    horizon (the quantity distillation is meant to improve).

    Note: on small validation splits this metric is noisy; the fixed default
    lambda_logit is often the more reliable choice.
    """
    from .errors import UndefinedMetricError
    from .evaluation import partial_auc

    best = (None, -np.inf, None)
    for lam in grid:
        cfg = TrainConfig(**{**config.__dict__, "lambda_logit": lam})
        student = train_student(teachers, train, val, cfg, dim, t_h, n_horizons)
        scores = student.score(val.x0)
        try:
            metric = partial_auc(scores[:, -1], val.labels[:, -1])
        except UndefinedMetricError:
            metric = _val_mean_auc(scores, val.labels)
        if metric > best[1]:
            best = (student, metric, lam)
    return best[0], best[2]


# ---------------------------------------------------------------------------
# Checkpoint container
# ---------------------------------------------------------------------------

def save_checkpoint(path, module_name: str, model: nn.Module, dims: dict,
                    config_hash: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save({
        "module_name": module_name,
        "state_dict": model.state_dict(),
        "dims": dims,
        "config_hash": config_hash,
    }, path)


def load_checkpoint(path) -> dict:
    path = Path(path)
    if not path.exists():
        from .errors import DependencyError
        raise DependencyError(f"missing checkpoint file: {path}")
    return torch.load(path, weights_only=False)
