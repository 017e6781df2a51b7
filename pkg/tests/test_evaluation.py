"""Metric oracles, protocol fidelity and artifact emission tests."""

import csv
import math

import numpy as np
import pytest

from phd.data_model import patient_labels
from phd.errors import UndefinedMetricError
from phd.evaluation import (HorizonMetrics, auc, emit_curves,
                            emit_history_curve, emit_ladder, emit_roc_curves,
                            history_ablation, paired_significance, partial_auc,
                            repeated_split_eval, roc_curve, sample_single_exam)

from conftest import make_patient


# ---------------------------------------------------------------------------
# Brute-force oracles
# ---------------------------------------------------------------------------

def brute_auc(scores, labels):
    """Pairwise Mann-Whitney oracle: ties count 1/2."""
    scores, labels = np.asarray(scores, float), np.asarray(labels)
    keep = labels != -1
    scores, labels = scores[keep], labels[keep]
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for sp in pos:
        for sn in neg:
            total += 1.0 if sp > sn else (0.5 if sp == sn else 0.0)
    return total / (len(pos) * len(neg))


def brute_roc(scores, labels):
    """Threshold-sweep ROC oracle (independent of the cumulative-count path)."""
    scores, labels = np.asarray(scores, float), np.asarray(labels)
    keep = labels != -1
    scores, labels = scores[keep], labels[keep]
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    pts = [(0.0, 0.0)]
    for t in sorted(set(scores), reverse=True):
        pts.append((np.mean(neg >= t), np.mean(pos >= t)))
    return np.array([p[0] for p in pts]), np.array([p[1] for p in pts])


def brute_partial_auc(scores, labels, fpr_max, standardized=True):
    fpr, tpr = brute_roc(scores, labels)
    area = 0.0
    for (x0, y0), (x1, y1) in zip(zip(fpr, tpr), zip(fpr[1:], tpr[1:])):
        if x0 >= fpr_max:
            break
        if x1 > fpr_max:  # clip the crossing segment at fpr_max
            y1 = y0 + (y1 - y0) * (fpr_max - x0) / (x1 - x0)
            x1 = fpr_max
        area += (x1 - x0) * (y0 + y1) / 2
    if not standardized:
        return area / fpr_max
    chance = fpr_max ** 2 / 2
    return 0.5 * (1 + (area - chance) / (fpr_max - chance))


def random_instance(rng, n_max=50, with_mask=True):
    n = int(rng.integers(4, n_max + 1))
    if rng.random() < 0.5:
        scores = rng.choice(np.linspace(0, 1, 7), size=n)  # heavy ties
    else:
        scores = rng.standard_normal(n)
    lo = -1 if with_mask else 0
    labels = rng.integers(lo, 2, n)
    while (labels == 1).sum() == 0 or (labels == 0).sum() == 0:
        labels = rng.integers(lo, 2, n)
    return scores, labels


def test_auc_matches_brute_force(rng):
    for _ in range(200):
        scores, labels = random_instance(rng)
        assert auc(scores, labels) == pytest.approx(brute_auc(scores, labels), abs=1e-12)


def test_partial_auc_matches_brute_force(rng):
    for _ in range(200):
        scores, labels = random_instance(rng)
        fpr_max = float(rng.choice([0.05, 0.1, 0.25, 0.5, 1.0]))
        for standardized in (True, False):
            got = partial_auc(scores, labels, fpr_max=fpr_max, standardized=standardized)
            want = brute_partial_auc(scores, labels, fpr_max, standardized)
            assert got == pytest.approx(want, abs=1e-12), (fpr_max, standardized)


def test_partial_auc_at_full_fpr_equals_auc(rng):
    for _ in range(50):
        scores, labels = random_instance(rng)
        assert partial_auc(scores, labels, fpr_max=1.0) == pytest.approx(
            auc(scores, labels), abs=1e-12)


def test_metrics_invariant_to_monotone_transform(rng):
    for _ in range(50):
        scores, labels = random_instance(rng)
        transformed = np.exp(3.0 * scores) + 7.0
        assert auc(scores, labels) == auc(transformed, labels)
        assert partial_auc(scores, labels) == partial_auc(transformed, labels)


def test_metrics_known_values():
    assert auc([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]) == 1.0
    assert auc([0.1, 0.3, 0.8, 0.9], [1, 1, 0, 0]) == 0.0
    assert auc([0.5, 0.5, 0.5, 0.5], [1, 1, 0, 0]) == 0.5
    # perfect separation: standardized pAUC = 1; chance scores ~ 0.5
    assert partial_auc([0.9, 0.8, 0.3], [1, 1, 0], fpr_max=0.1) == pytest.approx(1.0)
    assert partial_auc([0.5, 0.5, 0.5, 0.5], [1, 1, 0, 0],
                       fpr_max=0.1) == pytest.approx(0.5, abs=1e-12)


def test_masked_entries_are_bitwise_inert(rng):
    for _ in range(1000):
        scores, labels = random_instance(rng, n_max=30)
        if not (labels == -1).any():
            labels[int(rng.integers(len(labels)))] = -1
            if (labels == 1).sum() == 0 or (labels == 0).sum() == 0:
                continue
        perturbed = scores.copy()
        perturbed[labels == -1] = rng.standard_normal((labels == -1).sum()) * 100
        assert auc(scores, labels) == auc(perturbed, labels)
        assert partial_auc(scores, labels) == partial_auc(perturbed, labels)


def test_metric_undefined_for_single_class():
    with pytest.raises(UndefinedMetricError):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(UndefinedMetricError):
        partial_auc([0.1, 0.2, 0.3], [0, 0, -1])


def test_roc_curve_endpoints(rng):
    scores, labels = random_instance(rng)
    fpr, tpr = roc_curve(scores, labels)
    assert fpr[0] == 0 and tpr[0] == 0
    assert fpr[-1] == 1 and tpr[-1] == 1
    assert (np.diff(fpr) >= 0).all() and (np.diff(tpr) >= 0).all()


def test_partial_auc_validates_fpr_max():
    with pytest.raises(ValueError):
        partial_auc([0.1, 0.9], [0, 1], fpr_max=0.0)
    with pytest.raises(ValueError):
        partial_auc([0.1, 0.9], [0, 1], fpr_max=1.5)


# ---------------------------------------------------------------------------
# Significance
# ---------------------------------------------------------------------------

def test_wilcoxon_uniform_sign_exact_value():
    b = np.zeros(10)
    a = b + np.arange(1, 11)
    assert paired_significance(a, b) == pytest.approx(2 / 2 ** 10, abs=1e-15)


def test_wilcoxon_identical_samples():
    x = np.arange(8, dtype=float)
    assert paired_significance(x, x.copy()) == 1.0


def test_wilcoxon_input_validation():
    with pytest.raises(ValueError):
        paired_significance([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        paired_significance(np.zeros(6), np.zeros(5))


# ---------------------------------------------------------------------------
# Single-exam sampling protocol
# ---------------------------------------------------------------------------

def _protocol_patients(n=30, seed=0):
    rng = np.random.default_rng(seed)
    patients = []
    for i in range(n):
        n_exams = int(rng.integers(1, 5))
        years = tuple(range(-(n_exams - 1), 1))
        d = int(rng.integers(1, 6)) if rng.random() < 0.4 else None
        patients.append(make_patient(pid=f"p{i}", years=years, diagnosis_year=d,
                                     censor_year=5, dim=3, seed=100 + i))
    return patients


def test_single_exam_sampling_one_exam_per_patient_per_rep():
    patients = _protocol_patients()
    calls = []

    def score_fn(p, idx):
        calls.append((p.patient_id, idx))
        return np.full(5, 0.5 + 0.001 * hash(p.patient_id) % 100 / 1000)

    reps = 100
    sample_single_exam(patients, score_fn, 5, repetitions=reps, seed=0)
    assert len(calls) == reps * len(patients)
    # exactly one exam per patient per repetition
    per_rep = len(patients)
    for r in range(reps):
        chunk = calls[r * per_rep:(r + 1) * per_rep]
        assert [c[0] for c in chunk] == [p.patient_id for p in patients]
        for (pid, idx), p in zip(chunk, patients):
            assert 0 <= idx < len(p.exams)


def test_single_exam_sampling_deterministic_per_seed(rng):
    patients = _protocol_patients()
    score_fn = lambda p, idx: rngs[p.patient_id][idx]
    rngs = {p.patient_id: np.random.default_rng(hash(p.patient_id) % 2 ** 31)
            .random((len(p.exams), 5)) for p in patients}
    a = sample_single_exam(patients, score_fn, 5, repetitions=20, seed=3)
    b = sample_single_exam(patients, score_fn, 5, repetitions=20, seed=3)
    c = sample_single_exam(patients, score_fn, 5, repetitions=20, seed=4)
    assert np.array_equal(a.raw_auc, b.raw_auc, equal_nan=True)
    assert not np.array_equal(a.raw_auc, c.raw_auc, equal_nan=True)
    assert a.raw_auc.shape == (20, 5)


def test_single_exam_sampling_uses_shifted_labels():
    # one patient diagnosed at year 2 with exams at -1 and 0: sampling the
    # exam at -1 must shift the label window by one year
    p = make_patient(pid="px", years=(-1, 0), diagnosis_year=2, censor_year=5)
    seen = {}

    def score_fn(pat, idx):
        seen[idx] = True
        return np.linspace(0.1, 0.5, 5)

    sample_single_exam([p] * 1 + _protocol_patients(10), score_fn, 5,
                       repetitions=30, seed=0)
    assert seen  # scored at least once
    assert patient_labels(p, 5, current_year=-1).tolist() == [0, 0, 1, 1, 1]
    assert patient_labels(p, 5, current_year=0).tolist() == [0, 1, 1, 1, 1]


def test_sample_single_exam_rejects_empty():
    with pytest.raises(ValueError):
        sample_single_exam([], lambda p, i: np.zeros(5), 5)


def test_history_ablation_pairs_sampling_across_h():
    patients = _protocol_patients()
    seen_h = []

    def score_fn(p, idx, h):
        seen_h.append(h)
        return np.full(5, 0.1) + 0.01 * idx + 0.2 * h

    out = history_ablation(score_fn, patients, 5, h_values=(0, 2),
                           repetitions=5, seed=1)
    assert set(out) == {0, 2}
    assert set(seen_h) == {0, 2}
    for h in (0, 2):
        assert isinstance(out[h], HorizonMetrics)


def test_repeated_split_eval_aggregates(tiny_cohort):
    def pipeline(cohort, split, seed):
        patients = cohort.by_id(split.test_ids)
        rng = np.random.default_rng(seed)
        score_fn = lambda p, idx: rng.random(cohort.n_horizons)
        return sample_single_exam(patients, score_fn, cohort.n_horizons,
                                  repetitions=3, seed=seed)

    res = repeated_split_eval(tiny_cohort, pipeline, n_splits=4, master_seed=0)
    assert len(res.per_split) == 4 and not res.failures
    mean, std = res.aggregate("auc")
    assert mean.shape == (tiny_cohort.n_horizons,)


def test_repeated_split_eval_records_failures(tiny_cohort):
    state = {"n": 0}

    def pipeline(cohort, split, seed):
        state["n"] += 1
        if state["n"] == 2:
            raise RuntimeError("boom")
        patients = cohort.by_id(split.test_ids)
        return sample_single_exam(patients, lambda p, i: np.random.default_rng(0)
                                  .random(cohort.n_horizons),
                                  cohort.n_horizons, repetitions=2, seed=seed)

    with pytest.warns(UserWarning):
        res = repeated_split_eval(tiny_cohort, pipeline, n_splits=3)
    assert len(res.failures) == 1
    assert res.per_split[1] is None


# ---------------------------------------------------------------------------
# Artifact emission: every plot gets a CSV twin
# ---------------------------------------------------------------------------

def test_emit_roc_curves_writes_csv_twin(tmp_path, rng):
    scores, labels = random_instance(rng)
    curves = {"model a": roc_curve(scores, labels)}
    written = emit_roc_curves(curves, tmp_path)
    csvs = [p for p in written if p.suffix == ".csv"]
    pngs = [p for p in written if p.suffix == ".png"]
    assert len(csvs) == 1 and len(pngs) == 1
    with open(csvs[0]) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["fpr", "tpr"]
    assert len(rows) - 1 == len(curves["model a"][0])


def test_emit_history_curve_and_ladder(tmp_path):
    hm = HorizonMetrics(auc=np.full(5, 0.7), pauc=np.full(5, 0.6),
                        auc_std=np.zeros(5), pauc_std=np.zeros(5),
                        n_pos=np.ones(5), n_neg=np.ones(5))
    per_h = {"full": {0: hm, 1: hm}, "student": {0: hm, 1: hm}}
    files = emit_history_curve(per_h, horizon=5, out_dir=tmp_path)
    assert {f.suffix for f in files} == {".csv", ".png"}
    files = emit_ladder({"a": 0.5, "b": 0.6}, tmp_path)
    assert {f.suffix for f in files} == {".csv", ".png"}


def test_emit_curves_dispatch(tmp_path, rng):
    scores, labels = random_instance(rng)
    hm = HorizonMetrics(auc=np.full(5, 0.7), pauc=np.full(5, 0.6),
                        auc_std=np.zeros(5), pauc_std=np.zeros(5),
                        n_pos=np.ones(5), n_neg=np.ones(5))
    written = emit_curves({
        "roc": {"m": roc_curve(scores, labels)},
        "history": ({"m": {0: hm, 4: hm}}, 5),
        "ladder": {"x": 0.1},
    }, tmp_path)
    assert sum(1 for f in written if f.suffix == ".png") == 3
    assert sum(1 for f in written if f.suffix == ".csv") == 3
