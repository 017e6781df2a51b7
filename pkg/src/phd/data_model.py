"""Cohort data model: patients, masked multi-horizon labels, splits, synthetic
cohort generation and on-disk serialization.

Labels use the convention {1: event within horizon, 0: event-free through
horizon, -1: unknown (censored before horizon)}.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CohortParseError, UnsupportedVersionError

COHORT_MAGIC = b"PHDC"
COHORT_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExamRecord:
    """One screening exam at an integer year relative to the reference exam.

    Carries either a precomputed visit embedding or per-view feature vectors
    (at most 4 views, all of the same dimensionality).
    """

    relative_year: int
    embedding: np.ndarray | None = None
    views: tuple[np.ndarray, ...] | None = None
    available: bool = True

    def __post_init__(self):
        if self.embedding is None and self.views is None:
            raise ValueError("ExamRecord needs an embedding or view features")
        if self.views is not None:
            if not (1 <= len(self.views) <= 4):
                raise ValueError("views must contain 1..4 feature vectors")
            dims = {v.shape[-1] for v in self.views}
            if len(dims) != 1:
                raise ValueError(f"view feature dims disagree: {sorted(dims)}")

    def __eq__(self, other):
        if not isinstance(other, ExamRecord):
            return NotImplemented
        if self.relative_year != other.relative_year or self.available != other.available:
            return False
        if (self.embedding is None) != (other.embedding is None):
            return False
        if self.embedding is not None and not np.array_equal(self.embedding, other.embedding):
            return False
        if (self.views is None) != (other.views is None):
            return False
        if self.views is not None:
            if len(self.views) != len(other.views):
                return False
            if not all(np.array_equal(a, b) for a, b in zip(self.views, other.views)):
                return False
        return True


@dataclass(frozen=True, eq=False)
class PatientRecord:
    """A patient's ordered exams plus outcome times relative to the reference
    exam (the exam at relative year 0)."""

    patient_id: str
    exams: tuple[ExamRecord, ...]
    diagnosis_year: int | None
    censor_year: int

    def __post_init__(self):
        years = [e.relative_year for e in self.exams]
        if any(b <= a for a, b in zip(years, years[1:])):
            raise ValueError(f"exam years must be strictly increasing, got {years}")
        if self.diagnosis_year is not None and self.diagnosis_year < 1:
            raise ValueError("diagnosis_year must be >= 1 relative to the reference exam")
        if self.censor_year < 0:
            raise ValueError("censor_year must be >= 0")

    def __eq__(self, other):
        if not isinstance(other, PatientRecord):
            return NotImplemented
        return (
            self.patient_id == other.patient_id
            and self.diagnosis_year == other.diagnosis_year
            and self.censor_year == other.censor_year
            and self.exams == other.exams
        )

    def exam_at(self, relative_year: int) -> ExamRecord | None:
        for e in self.exams:
            if e.relative_year == relative_year:
                return e
        return None


@dataclass(eq=False)
class Cohort:
    """A set of patients sharing one embedding dimensionality and horizon count."""

    patients: list[PatientRecord]
    dim: int
    n_horizons: int

    def __eq__(self, other):
        if not isinstance(other, Cohort):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.n_horizons == other.n_horizons
            and self.patients == other.patients
        )

    @property
    def patient_ids(self) -> list[str]:
        return [p.patient_id for p in self.patients]

    def by_id(self, ids) -> list[PatientRecord]:
        wanted = set(ids)
        return [p for p in self.patients if p.patient_id in wanted]


@dataclass(frozen=True)
class CohortSplit:
    train_ids: frozenset[str]
    val_ids: frozenset[str]
    test_ids: frozenset[str]
    seed: int

    def __post_init__(self):
        if self.train_ids & self.val_ids or self.train_ids & self.test_ids or self.val_ids & self.test_ids:
            raise ValueError("split partitions overlap")


# ---------------------------------------------------------------------------
# Labels
# ---------------------------------------------------------------------------

def derive_labels(diagnosis_year: int | None, censor_year: int, n_horizons: int) -> np.ndarray:
    """Masked multi-horizon label vector for horizons 1..n_horizons.

    y_k = 1 if diagnosed within k years; 0 if known event-free through year k;
    -1 if the outcome at year k is unknown. A diagnosis overrides censoring.
    """
    if n_horizons <= 0:
        raise ValueError(f"n_horizons must be positive, got {n_horizons}")
    if censor_year < 0:
        raise ValueError(f"censor_year must be >= 0, got {censor_year}")
    if diagnosis_year is not None and diagnosis_year < 1:
        raise ValueError(f"diagnosis_year must be >= 1, got {diagnosis_year}")
    y = np.empty(n_horizons, dtype=np.int64)
    for i in range(n_horizons):
        k = i + 1
        if diagnosis_year is not None and diagnosis_year <= k:
            y[i] = 1
        elif censor_year >= k:
            y[i] = 0
        else:
            y[i] = -1
    return y


def validate_label_vector(y: np.ndarray) -> None:
    """Raise unless y matches 0* (-1)* 1*: event-free while follow-up lasts,
    then an unknown gap, then positives once diagnosed (positives persist)."""
    y = np.asarray(y)
    if not np.isin(y, (-1, 0, 1)).all():
        raise ValueError("labels must be in {-1, 0, 1}")
    rank = {0: 0, -1: 1, 1: 2}
    ranks = [rank[int(v)] for v in y]
    if any(b < a for a, b in zip(ranks, ranks[1:])):
        raise ValueError("labels must follow the 0* (-1)* 1* pattern")


def patient_labels(patient: PatientRecord, n_horizons: int, current_year: int = 0) -> np.ndarray:
    """Labels relative to an arbitrary current exam year (<= 0)."""
    shift = -current_year
    d = None if patient.diagnosis_year is None else patient.diagnosis_year + shift
    return derive_labels(d, patient.censor_year + shift, n_horizons)


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def patient_level_split(cohort: Cohort, train_frac: float, val_frac_of_train: float,
                        seed: int) -> CohortSplit:
    """Deterministic patient-level split; every exam of a patient lands in
    exactly one partition."""
    if not (0.0 < train_frac < 1.0) or not (0.0 < val_frac_of_train < 1.0):
        raise ValueError("fractions must lie in (0, 1)")
    ids = sorted(cohort.patient_ids)
    if len(ids) < 3:
        raise ValueError(f"need at least 3 patients to split, got {len(ids)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n = len(ids)
    n_pool = int(round(n * train_frac))
    n_val = int(round(n_pool * val_frac_of_train))
    n_pool = min(max(n_pool, 2), n - 1)
    n_val = min(max(n_val, 1), n_pool - 1)
    train = frozenset(shuffled[: n_pool - n_val])
    val = frozenset(shuffled[n_pool - n_val: n_pool])
    test = frozenset(shuffled[n_pool:])
    return CohortSplit(train_ids=train, val_ids=val, test_ids=test, seed=seed)


# ---------------------------------------------------------------------------
# Synthetic cohort generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the planted-signal synthetic cohort.

    Each patient has a latent level `a`, slope `b` and acute state `c`. The
    visit embedding at relative year t encodes the level a + b*t along one
    direction, a weak slope leak along a second, and `c` at full strength
    along a third. Hazards depend on `c` with opposite signs at short and
    long horizons (`acute_coef` vs `acute_flip`) and on `b` increasingly
    with horizon (sharpened by `ramp_power`), gated by `signal`;
    with the default `level_coef=0` the level is a pure distractor that is
    prominent in every exam but carries no risk. Long-horizon risk is
    therefore dominated by the trajectory slope, which a single exam reveals
    only through the weak leak channel while an exam series pins it down:
    true history is strictly more informative for long horizons, and short
    and long horizons pull a shared representation in different directions.
    `censor_full_frac` controls how many patients reach full follow-up; the
    rest censor early, so valid labels at the longest horizons are scarce and
    their risk structure is hard to learn from hard labels alone.
    """

    n_patients: int = 2000
    dim: int = 128
    t_h: int = 4
    n_horizons: int = 5
    signal: float = 1.0
    noise: float = 0.35
    seed: int = 0
    slope_leak: float = 0.35
    base_hazard: float = 0.003
    level_coef: float = 0.0
    slope_coef: float = 3.0
    acute_coef: float = 1.2
    acute_flip: float = 1.2
    late_boost: float = 1.5
    ramp_power: float = 4.0
    censor_full_frac: float = 0.25
    full_history_frac: float = 0.8

    def __post_init__(self):
        if self.n_patients <= 0 or self.dim <= 0 or self.t_h <= 0 or self.n_horizons <= 0:
            raise ValueError("n_patients, dim, t_h and n_horizons must be positive")
        if not (0.0 <= self.signal <= 1.0):
            raise ValueError("signal must lie in [0, 1]")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")


def _signal_directions(dim: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed ^ 0x5EED)
    vs = []
    for _ in range(3):
        v = rng.standard_normal(dim)
        for u in vs:
            v -= u * (u @ v)
        vs.append(v / np.linalg.norm(v))
    return tuple(vs)


def generate_with_latents(config: SynthConfig) -> tuple[Cohort, dict[str, np.ndarray]]:
    """Like generate_synthetic_cohort but also returns the per-patient latent
    (level, slope) pairs, keyed by patient id, for oracle-based checks."""
    rng = np.random.default_rng(config.seed)
    v_level, v_slope, v_acute = _signal_directions(config.dim, config.seed)
    k = config.n_horizons
    ramp = np.arange(k, dtype=float) / max(k - 1, 1)  # 0 at horizon 1, 1 at horizon K
    base_logit = np.log(config.base_hazard / (1.0 - config.base_hazard))

    patients: list[PatientRecord] = []
    latents: dict[str, np.ndarray] = {}
    for i in range(config.n_patients):
        pid = f"p{i:06d}"
        a = rng.standard_normal()
        b = rng.standard_normal()
        c = rng.standard_normal()
        latents[pid] = np.array([a, b, c])

        # per-year diagnosis hazard; the slope contribution and a base-rate
        # boost ramp up sharply toward the last year (so the longest-horizon
        # outcome is dominated by slope-driven late events), while the acute
        # contribution flips sign: it raises near-term risk but lowers
        # late-year risk (a treated acute finding protects long-term), so
        # short and long horizons pull a shared model in opposite directions
        sharp = ramp ** config.ramp_power
        logits = base_logit + config.late_boost * sharp \
            + config.level_coef * a \
            + config.signal * config.slope_coef * b * sharp \
            + config.acute_coef * c * (1.0 - ramp) \
            - config.acute_flip * c * sharp
        hazards = 1.0 / (1.0 + np.exp(-logits))
        draws = rng.random(k)
        hit = np.flatnonzero(draws < hazards)
        diagnosis_year = int(hit[0]) + 1 if hit.size else None

        if rng.random() < config.censor_full_frac:
            censor_year = k
        else:
            censor_year = int(rng.integers(1, k + 1))

        if rng.random() < config.full_history_frac:
            n_priors = config.t_h
        else:
            n_priors = int(rng.integers(0, config.t_h))
        exams = []
        for t in range(-n_priors, 1):
            level = a + b * t
            vec = level * v_level + config.slope_leak * b * v_slope + c * v_acute
            vec = vec + config.noise * rng.standard_normal(config.dim)
            exams.append(ExamRecord(relative_year=t, embedding=vec.astype(np.float32)))
        patients.append(PatientRecord(
            patient_id=pid,
            exams=tuple(exams),
            diagnosis_year=diagnosis_year,
            censor_year=censor_year,
        ))
    return Cohort(patients=patients, dim=config.dim, n_horizons=k), latents


def generate_synthetic_cohort(config: SynthConfig) -> Cohort:
    cohort, _ = generate_with_latents(config)
    return cohort


# ---------------------------------------------------------------------------
# Serialization: JSONL manifest + flat binary embedding sidecar
# ---------------------------------------------------------------------------

def _sidecar_path(manifest_path: str) -> str:
    return str(manifest_path) + ".emb"


def save_cohort(cohort: Cohort, path) -> None:
    """Write the manifest (one patient per JSON line) and the embedding
    sidecar (16-byte header + little-endian float32 rows)."""
    path = str(path)
    embeddings: list[np.ndarray] = []
    lines = []
    for p in cohort.patients:
        exams = []
        for e in p.exams:
            if e.embedding is None:
                raise ValueError("save_cohort requires precomputed visit embeddings")
            exams.append({"year": e.relative_year, "emb": len(embeddings)})
            embeddings.append(np.asarray(e.embedding, dtype="<f4"))
        lines.append(json.dumps({
            "id": p.patient_id,
            "exams": exams,
            "diagnosis_year": p.diagnosis_year,
            "censor_year": p.censor_year,
            "labels": derive_labels(p.diagnosis_year, p.censor_year, cohort.n_horizons).tolist(),
        }, sort_keys=True))
    with open(path, "w") as f:
        f.write("\n".join(lines) + ("\n" if lines else ""))
    with open(_sidecar_path(path), "wb") as f:
        f.write(struct.pack("<4sIII", COHORT_MAGIC, COHORT_FORMAT_VERSION,
                            cohort.dim, len(embeddings)))
        if embeddings:
            f.write(np.stack(embeddings).tobytes())


def load_cohort(path) -> Cohort:
    path = str(path)
    with open(_sidecar_path(path), "rb") as f:
        header = f.read(16)
        if len(header) < 16:
            raise CohortParseError("sidecar header truncated", offset=len(header))
        magic, version, dim, count = struct.unpack("<4sIII", header)
        if magic != COHORT_MAGIC:
            raise CohortParseError(f"bad sidecar magic {magic!r}", offset=0)
        if version != COHORT_FORMAT_VERSION:
            raise UnsupportedVersionError(
                f"cohort format version {version} not supported "
                f"(expected {COHORT_FORMAT_VERSION})")
        raw = f.read()
    expected = count * dim * 4
    if len(raw) != expected:
        raise CohortParseError(
            f"sidecar payload has {len(raw)} bytes, expected {expected}", offset=16 + len(raw))
    table = np.frombuffer(raw, dtype="<f4").reshape(count, dim) if count else np.zeros((0, dim), "<f4")

    patients = []
    n_horizons = None
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CohortParseError(f"invalid JSON: {exc.msg}", line=lineno, offset=exc.pos) from exc
            try:
                exams = tuple(
                    ExamRecord(relative_year=int(e["year"]),
                               embedding=np.array(table[int(e["emb"])], dtype=np.float32))
                    for e in rec["exams"]
                )
                patient = PatientRecord(
                    patient_id=rec["id"],
                    exams=exams,
                    diagnosis_year=rec["diagnosis_year"],
                    censor_year=rec["censor_year"],
                )
                labels = rec["labels"]
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise CohortParseError(f"malformed patient record: {exc}", line=lineno) from exc
            if n_horizons is None:
                n_horizons = len(labels)
            elif len(labels) != n_horizons:
                raise CohortParseError("inconsistent label vector length", line=lineno)
            patients.append(patient)
    if n_horizons is None:
        raise CohortParseError("empty cohort manifest", line=1)
    return Cohort(patients=patients, dim=dim, n_horizons=n_horizons)
