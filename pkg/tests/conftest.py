"""Shared fixtures: small deterministic cohorts and training configs."""

import numpy as np
import pytest
import torch

from phd.data_model import (Cohort, ExamRecord, PatientRecord, SynthConfig,
                            generate_synthetic_cohort)
from phd.distillation import TrainConfig


@pytest.fixture(autouse=True)
def _deterministic_torch():
    torch.manual_seed(0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_patient(pid="p0", years=(-2, -1, 0), diagnosis_year=None, censor_year=5,
                 dim=4, seed=0):
    r = np.random.default_rng(seed)
    exams = tuple(ExamRecord(relative_year=y,
                             embedding=r.standard_normal(dim).astype(np.float32))
                  for y in years)
    return PatientRecord(patient_id=pid, exams=exams,
                         diagnosis_year=diagnosis_year, censor_year=censor_year)


# Overrides that spread events across all horizons so even tiny cohorts have
# positive labels at every horizon (the defaults concentrate events late).
DENSE_EVENTS = {"base_hazard": 0.05, "late_boost": 1.0, "ramp_power": 1.0}


@pytest.fixture
def tiny_cohort():
    """Small synthetic cohort for fast pipeline-level tests."""
    return generate_synthetic_cohort(
        SynthConfig(n_patients=80, dim=8, t_h=2, n_horizons=3, seed=7,
                    **DENSE_EVENTS))


@pytest.fixture
def tiny_train_config():
    return TrainConfig(epochs=2, patience=2, batch_size=64, seed=0)


def central_diff_grad(fn, x: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    """Central finite-difference gradient of a scalar function at x (float64)."""
    x = x.detach().double()
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + eps
            f_plus = float(fn(x))
            flat[i] = orig - eps
            f_minus = float(fn(x))
            flat[i] = orig
            gflat[i] = (f_plus - f_minus) / (2 * eps)
    return grad


def analytic_grad(fn, x: torch.Tensor) -> torch.Tensor:
    x = x.detach().double().requires_grad_(True)
    fn(x).backward()
    return x.grad.detach().clone()


def assert_grad_matches(fn, x: torch.Tensor, rel_tol: float = 1e-4):
    g_fd = central_diff_grad(fn, x)
    g_an = analytic_grad(fn, x)
    denom = torch.maximum(torch.abs(g_fd), torch.abs(g_an)).clamp(min=1e-8)
    rel = torch.abs(g_fd - g_an) / denom
    assert float(rel.max()) < rel_tol, f"max rel grad error {float(rel.max()):.2e}"
