"""Privileged history distillation for multi-horizon longitudinal risk
prediction: synthetic cohorts, horizon-specific teachers, a current-exam-only
student, and the full resampling evaluation protocol."""

from .data_model import (Cohort, CohortSplit, ExamRecord, PatientRecord,
                         SynthConfig, derive_labels, generate_synthetic_cohort,
                         load_cohort, patient_level_split, save_cohort)
from .distillation import (StudentModel, TeacherBundle, TrainConfig,
                           logit_kd_loss, total_loss, train_student,
                           train_teacher)
from .evaluation import (HorizonMetrics, auc, paired_significance, partial_auc,
                         sample_single_exam)
from .history_reconstruction import (HistoryPredictor, feature_kd_loss,
                                     reconstruct_history)
from .risk_model import HazardHead, RiskOutput, compute_pos_weights, rce_loss

__version__ = "0.1.0"
