"""Evaluation protocol: masked time-dependent AUC, standardized partial AUC,
single-exam-per-patient resampling, repeated-split aggregation, history
ablation, paired significance tests, and curve artifact emission."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from ._roc import roc_counts
from .data_model import Cohort, CohortSplit, PatientRecord, patient_labels
from .errors import UndefinedMetricError


# ---------------------------------------------------------------------------
# Core metrics
# ---------------------------------------------------------------------------

def _masked_arrays(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D arrays of equal length")
    keep = labels != -1
    scores, labels = scores[keep], labels[keep].astype(np.int64)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"need both classes after masking, got {n_pos} positives / {n_neg} negatives")
    return scores, labels, n_pos, n_neg


def _roc_points(scores, labels):
    order = np.argsort(-scores, kind="mergesort")
    return roc_counts(labels[order], scores[order])


def auc(scores, labels) -> float:
    """Time-dependent AUC with masked labels (-1 excluded); ties count 0.5.

    Equals the Mann-Whitney U statistic divided by n_pos * n_neg.
    """
    scores, labels, n_pos, n_neg = _masked_arrays(scores, labels)
    fps, tps = _roc_points(scores, labels)
    # integer trapezoid sum: exact until the single final division
    area2 = int(np.sum((fps[1:] - fps[:-1]) * (tps[1:] + tps[:-1])))
    return area2 / (2.0 * n_pos * n_neg)


def roc_curve(scores, labels):
    """Grouped-tie empirical ROC as (fpr, tpr), both starting at 0 and ending
    at 1, monotone non-decreasing."""
    scores, labels, n_pos, n_neg = _masked_arrays(scores, labels)
    fps, tps = _roc_points(scores, labels)
    return fps / n_neg, tps / n_pos


def _restricted_area(fpr: np.ndarray, tpr: np.ndarray, fpr_max: float) -> float:
    area = 0.0
    for i in range(1, len(fpr)):
        x0, x1 = fpr[i - 1], fpr[i]
        y0, y1 = tpr[i - 1], tpr[i]
        if x0 >= fpr_max:
            break
        if x1 <= fpr_max:
            area += (x1 - x0) * (y0 + y1) / 2.0
        else:
            y_cut = y0 + (y1 - y0) * (fpr_max - x0) / (x1 - x0)
            area += (fpr_max - x0) * (y0 + y_cut) / 2.0
            break
    return area


def partial_auc(scores, labels, fpr_max: float = 0.1, standardized: bool = True) -> float:
    """Area under the ROC restricted to FPR in [0, fpr_max].

    standardized=True (default) applies McClish standardization, mapping a
    chance classifier to 0.5 and a perfect one to 1.0, so values are on an
    AUC-like scale. standardized=False returns raw area / fpr_max (perfect =
    1.0, chance = fpr_max / 2).
    """
    if not (0.0 < fpr_max <= 1.0):
        raise ValueError(f"fpr_max must lie in (0, 1], got {fpr_max}")
    fpr, tpr = roc_curve(scores, labels)
    area = _restricted_area(fpr, tpr, fpr_max)
    if not standardized:
        return area / fpr_max
    area_chance = fpr_max * fpr_max / 2.0
    area_perfect = fpr_max
    return 0.5 * (1.0 + (area - area_chance) / (area_perfect - area_chance))


def paired_significance(metric_a, metric_b) -> float:
    """Two-sided Wilcoxon signed-rank p-value over paired per-split metrics
    (exact for n <= 25); identical samples give p = 1.0."""
    a = np.asarray(metric_a, dtype=np.float64)
    b = np.asarray(metric_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-D arrays of equal length")
    if len(a) < 5:
        raise ValueError(f"need at least 5 paired samples, got {len(a)}")
    diffs = a - b
    if np.all(diffs == 0):
        return 1.0
    method = "exact" if len(a) <= 25 else "auto"
    return float(stats.wilcoxon(a, b, alternative="two-sided", method=method).pvalue)


# ---------------------------------------------------------------------------
# Protocol: single-exam sampling, repeated splits, history ablation
# ---------------------------------------------------------------------------

@dataclass
class HorizonMetrics:
    """Per-horizon AUC and pAUC with dispersion over protocol repetitions."""

    auc: np.ndarray          # (K,) mean over repetitions
    pauc: np.ndarray         # (K,)
    auc_std: np.ndarray      # (K,)
    pauc_std: np.ndarray     # (K,)
    n_pos: np.ndarray        # (K,) mean unmasked positives per repetition
    n_neg: np.ndarray        # (K,)
    raw_auc: np.ndarray = field(repr=False, default=None)   # (R, K)
    raw_pauc: np.ndarray = field(repr=False, default=None)  # (R, K)

    @property
    def n_horizons(self) -> int:
        return len(self.auc)


def _metrics_for_sample(scores: np.ndarray, labels: np.ndarray, fpr_max: float):
    """Per-horizon AUC/pAUC for one scored sample set; undefined -> NaN."""
    k = scores.shape[1]
    auc_k = np.full(k, np.nan)
    pauc_k = np.full(k, np.nan)
    n_pos = np.zeros(k)
    n_neg = np.zeros(k)
    for j in range(k):
        col = labels[:, j]
        n_pos[j] = (col == 1).sum()
        n_neg[j] = (col == 0).sum()
        try:
            auc_k[j] = auc(scores[:, j], col)
            pauc_k[j] = partial_auc(scores[:, j], col, fpr_max=fpr_max)
        except UndefinedMetricError:
            pass
    return auc_k, pauc_k, n_pos, n_neg


def sample_single_exam(test_patients: list[PatientRecord], score_fn,
                       n_horizons: int, repetitions: int = 100, seed: int = 0,
                       fpr_max: float = 0.1) -> HorizonMetrics:
    """LoMaR-style evaluation: per repetition, pick one exam per test patient
    uniformly at random as the current exam, score it, and compute masked
    per-horizon metrics; report mean and std over repetitions.

    score_fn(patient, exam_index) must return a length-K risk vector.
    """
    if len(test_patients) == 0:
        raise ValueError("test set is empty")
    for p in test_patients:
        if len(p.exams) == 0:
            raise ValueError(f"patient {p.patient_id} has no exams")
    rng = np.random.default_rng(seed)
    raw_auc = np.empty((repetitions, n_horizons))
    raw_pauc = np.empty((repetitions, n_horizons))
    pos = np.empty((repetitions, n_horizons))
    neg = np.empty((repetitions, n_horizons))
    for r in range(repetitions):
        scores = np.empty((len(test_patients), n_horizons))
        labels = np.empty((len(test_patients), n_horizons), dtype=np.int64)
        for i, p in enumerate(test_patients):
            idx = int(rng.integers(len(p.exams)))
            scores[i] = score_fn(p, idx)
            labels[i] = patient_labels(p, n_horizons, current_year=p.exams[idx].relative_year)
        raw_auc[r], raw_pauc[r], pos[r], neg[r] = _metrics_for_sample(scores, labels, fpr_max)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN horizons
        return HorizonMetrics(
            auc=np.nanmean(raw_auc, axis=0), pauc=np.nanmean(raw_pauc, axis=0),
            auc_std=np.nanstd(raw_auc, axis=0), pauc_std=np.nanstd(raw_pauc, axis=0),
            n_pos=pos.mean(axis=0), n_neg=neg.mean(axis=0),
            raw_auc=raw_auc, raw_pauc=raw_pauc)


@dataclass
class RepeatedSplitResult:
    per_split: list          # HorizonMetrics or None for failed splits
    split_seeds: list[int]
    failures: list[tuple[int, str]]

    def aggregate(self, attr: str = "pauc") -> tuple[np.ndarray, np.ndarray]:
        vals = np.stack([getattr(m, attr) for m in self.per_split if m is not None])
        return vals.mean(axis=0), vals.std(axis=0)


def repeated_split_eval(cohort: Cohort, pipeline, n_splits: int = 10,
                        master_seed: int = 0) -> RepeatedSplitResult:
    """Run pipeline(cohort, split, seed) -> HorizonMetrics once per split seed
    and aggregate; failed splits are recorded and skipped with a warning."""
    seeds = [master_seed + i for i in range(n_splits)]
    per_split = []
    failures = []
    for i, seed in enumerate(seeds):
        from .data_model import patient_level_split
        split = patient_level_split(cohort, 0.8, 0.25, seed)
        try:
            per_split.append(pipeline(cohort, split, seed))
        except Exception as exc:  # noqa: BLE001 - protocol requires recording
            warnings.warn(f"split {i} (seed {seed}) failed: {exc}", stacklevel=2)
            per_split.append(None)
            failures.append((i, str(exc)))
    if all(m is None for m in per_split):
        raise RuntimeError("every split failed")
    return RepeatedSplitResult(per_split=per_split, split_seeds=seeds, failures=failures)


def history_ablation(score_fn, test_patients: list[PatientRecord], n_horizons: int,
                     h_values=(0, 1, 2, 3, 4), repetitions: int = 100, seed: int = 0,
                     fpr_max: float = 0.1) -> dict[int, HorizonMetrics]:
    """Metrics as a function of the number of true priors visible at
    inference. score_fn(patient, exam_index, n_available) -> length-K vector.
    The same sampling seed is reused across h for paired comparisons."""
    out = {}
    for h in h_values:
        out[h] = sample_single_exam(
            test_patients, lambda p, i, h=h: score_fn(p, i, h),
            n_horizons, repetitions=repetitions, seed=seed, fpr_max=fpr_max)
    return out


# ---------------------------------------------------------------------------
# Curve artifacts: every plot gets a CSV twin
# ---------------------------------------------------------------------------

def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def emit_roc_curves(curves: dict[str, tuple[np.ndarray, np.ndarray]], out_dir,
                    fname: str = "roc", zoom_fpr: float = 0.1) -> list[Path]:
    """Write one CSV per named ROC curve plus a two-panel plot (full ROC and a
    low-FPR zoom covering [0, zoom_fpr])."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    fig, (ax_full, ax_zoom) = plt.subplots(1, 2, figsize=(10, 4.2))
    for name, (fpr, tpr) in curves.items():
        safe = name.replace(" ", "_").replace("/", "-")
        csv_path = out_dir / f"{fname}_{safe}.csv"
        _write_csv(csv_path, ["fpr", "tpr"], zip(fpr, tpr))
        written.append(csv_path)
        ax_full.plot(fpr, tpr, label=name)
        ax_zoom.plot(fpr, tpr, label=name)
    ax_full.plot([0, 1], [0, 1], "k--", lw=0.7)
    ax_full.set(xlabel="FPR", ylabel="TPR", title="ROC")
    ax_zoom.set(xlim=(0, zoom_fpr), xlabel="FPR", ylabel="TPR",
                title=f"low-FPR zoom [0, {zoom_fpr}]")
    ax_full.legend(fontsize=7)
    fig.tight_layout()
    png_path = out_dir / f"{fname}.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    written.append(png_path)
    return written


def emit_history_curve(per_h: dict[str, dict[int, HorizonMetrics]], horizon: int,
                       out_dir, fname: str = "history_curve") -> list[Path]:
    """Metric-vs-#H curves for one horizon (1-based), CSV + plot."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    fig, ax = plt.subplots(figsize=(5, 4))
    for name, curve in per_h.items():
        hs = sorted(curve)
        paucs = [curve[h].pauc[horizon - 1] for h in hs]
        for h, v in zip(hs, paucs):
            rows.append([name, h, v])
        ax.plot(hs, paucs, marker="o", label=name)
    csv_path = out_dir / f"{fname}.csv"
    _write_csv(csv_path, ["model", "n_history", f"pauc_{horizon}y"], rows)
    ax.set(xlabel="# true priors at inference", ylabel=f"pAUC@10% ({horizon}y)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    png_path = out_dir / f"{fname}.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [csv_path, png_path]


def emit_ladder(values: dict[str, float], out_dir, fname: str = "ablation_ladder",
                ylabel: str = "pAUC@10% (5y)") -> list[Path]:
    """Ablation ladder bar chart (e.g. no-KD / 1-teacher / K-teacher), CSV + plot."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{fname}.csv"
    _write_csv(csv_path, ["variant", "value"], values.items())
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar(list(values.keys()), list(values.values()))
    ax.set_ylabel(ylabel)
    ax.tick_params(axis="x", rotation=20)
    fig.tight_layout()
    png_path = out_dir / f"{fname}.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [csv_path, png_path]


def emit_curves(results: dict, out_dir) -> list[Path]:
    """Emit all figure artifacts present in a results dict.

    Recognized keys: "roc" (name -> (fpr, tpr)), "history" ((per_h dict,
    horizon)), "ladder" (variant -> value).
    """
    written = []
    if "roc" in results:
        written += emit_roc_curves(results["roc"], out_dir)
    if "history" in results:
        per_h, horizon = results["history"]
        written += emit_history_curve(per_h, horizon, out_dir)
    if "ladder" in results:
        written += emit_ladder(results["ladder"], out_dir)
    return written
