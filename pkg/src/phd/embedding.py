"""Visit embeddings: frozen view encoders, view aggregation, and history
sequence assembly with availability masks."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .data_model import PatientRecord


class SlotSource(enum.Enum):
    TRUE = "true"
    RECONSTRUCTED = "reconstructed"
    ABSENT = "absent"


@dataclass(frozen=True, eq=False)
class VisitEmbedding:
    """Fixed-dimension vector summarizing one exam's views."""

    vector: np.ndarray
    relative_year: int

    def __post_init__(self):
        if not np.isfinite(self.vector).all():
            raise ValueError("visit embedding has non-finite entries")


@dataclass(frozen=True)
class HistorySequence:
    """Current visit embedding plus prior-year slots for offsets -1..-T_h.

    priors[i] holds the slot at offset -(i+1); absent slots are None and
    tagged SlotSource.ABSENT.
    """

    current: VisitEmbedding
    priors: tuple[VisitEmbedding | None, ...]
    sources: tuple[SlotSource, ...]

    def __post_init__(self):
        if len(self.priors) != len(self.sources):
            raise ValueError("priors and sources length mismatch")
        for i, (p, s) in enumerate(zip(self.priors, self.sources)):
            if (p is None) != (s is SlotSource.ABSENT):
                raise ValueError(f"slot {i}: presence disagrees with source tag")

    @property
    def t_h(self) -> int:
        return len(self.priors)


# ---------------------------------------------------------------------------
# View encoders (frozen)
# ---------------------------------------------------------------------------

class IdentityViewEncoder:
    """Passthrough for precomputed view feature vectors of a declared dim."""

    def __init__(self, dim: int):
        self.dim = dim
        self.frozen = True

    def encode(self, view: np.ndarray) -> np.ndarray:
        view = np.asarray(view, dtype=np.float32)
        if view.shape != (self.dim,):
            raise ValueError(f"view has shape {view.shape}, expected ({self.dim},)")
        return view

    def checksum(self) -> str:
        return hashlib.sha256(f"identity:{self.dim}".encode()).hexdigest()


class FrozenMLPViewEncoder(nn.Module):
    """A frozen random-projection encoder standing in for a pretrained image
    backbone; parameters are flagged immutable at construction."""

    def __init__(self, in_dim: int, out_dim: int, seed: int = 0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.proj = nn.Linear(in_dim, out_dim)
        with torch.no_grad():
            self.proj.weight.copy_(torch.randn(out_dim, in_dim, generator=gen) / in_dim ** 0.5)
            self.proj.bias.zero_()
        for p in self.parameters():
            p.requires_grad_(False)
        self.dim = out_dim
        self.frozen = True
        self.eval()

    def encode(self, view: np.ndarray) -> np.ndarray:
        x = torch.as_tensor(np.asarray(view, dtype=np.float32))
        if x.shape[-1] != self.proj.in_features:
            raise ValueError(f"view dim {x.shape[-1]} != encoder input dim {self.proj.in_features}")
        with torch.no_grad():
            return self.proj(x).numpy()

    def checksum(self) -> str:
        return parameter_checksum(self)


def parameter_checksum(module: nn.Module) -> str:
    """Order-stable SHA-256 over all parameter bytes of a torch module."""
    h = hashlib.sha256()
    for name, p in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()


def encode_view(view: np.ndarray, encoder) -> np.ndarray:
    """Encode one view with a frozen encoder; deterministic in eval mode."""
    if not getattr(encoder, "frozen", False):
        raise ValueError("view encoder must be frozen")
    return encoder.encode(view)


# ---------------------------------------------------------------------------
# View aggregation
# ---------------------------------------------------------------------------

def mean_pool_views(view_features: list[np.ndarray]) -> np.ndarray:
    if len(view_features) == 0:
        raise ValueError("cannot aggregate an empty view list")
    return np.mean(np.stack(view_features), axis=0)


class AttentionViewPooling(nn.Module):
    """Learned-query attention pooling over a variable number of views.

    Permutation-invariant: views enter as an unordered set.
    """

    def __init__(self, dim: int):
        super().__init__()
        self.query = nn.Parameter(torch.zeros(dim))
        self.key = nn.Linear(dim, dim)
        self.value = nn.Linear(dim, dim)
        nn.init.normal_(self.query, std=dim ** -0.5)

    def forward(self, views: torch.Tensor) -> torch.Tensor:
        # views: (n_views, dim) -> (dim,)
        if views.shape[0] == 0:
            raise ValueError("cannot aggregate an empty view list")
        scores = self.key(views) @ self.query / views.shape[-1] ** 0.5
        weights = torch.softmax(scores, dim=0)
        return weights @ self.value(views)


def aggregate_views(view_features: list[np.ndarray], relative_year: int,
                    pooling: nn.Module | None = None) -> VisitEmbedding:
    """Collapse 1..4 view features into a single visit embedding."""
    if len(view_features) == 0:
        raise ValueError("cannot aggregate an empty view list")
    if pooling is None:
        vec = mean_pool_views(view_features)
    else:
        views = torch.as_tensor(np.stack(view_features), dtype=torch.float32)
        with torch.no_grad():
            vec = pooling(views).numpy()
    return VisitEmbedding(vector=np.asarray(vec), relative_year=relative_year)


# ---------------------------------------------------------------------------
# History assembly
# ---------------------------------------------------------------------------

def visit_embedding_of(exam, encoder=None, pooling: nn.Module | None = None) -> VisitEmbedding:
    """Resolve an ExamRecord to its visit embedding, encoding views if needed."""
    if exam.embedding is not None:
        return VisitEmbedding(vector=np.asarray(exam.embedding), relative_year=exam.relative_year)
    feats = [encode_view(v, encoder) for v in exam.views]
    return aggregate_views(feats, exam.relative_year, pooling)


def build_history_sequence(patient: PatientRecord, current_exam_index: int,
                           t_h: int, n_available: int,
                           encoder=None, pooling: nn.Module | None = None) -> HistorySequence:
    """Assemble the history window for one current exam.

    Keeps the n_available most recent priors (relative to the current exam) as
    TRUE slots and marks everything else ABSENT. Exams after the current one
    are never visible.
    """
    if not (0 <= current_exam_index < len(patient.exams)):
        raise ValueError(f"current_exam_index {current_exam_index} out of range")
    if not (0 <= n_available <= t_h):
        raise ValueError(f"n_available must lie in [0, {t_h}], got {n_available}")
    current_exam = patient.exams[current_exam_index]
    current_year = current_exam.relative_year
    current = visit_embedding_of(current_exam, encoder, pooling)
    current = VisitEmbedding(vector=current.vector, relative_year=0)

    priors: list[VisitEmbedding | None] = [None] * t_h
    sources: list[SlotSource] = [SlotSource.ABSENT] * t_h
    candidates = [e for e in patient.exams[:current_exam_index]
                  if e.available and 0 < current_year - e.relative_year <= t_h]
    # most recent first
    candidates.sort(key=lambda e: current_year - e.relative_year)
    for e in candidates[:n_available]:
        offset = current_year - e.relative_year  # 1..t_h
        emb = visit_embedding_of(e, encoder, pooling)
        priors[offset - 1] = VisitEmbedding(vector=emb.vector, relative_year=-offset)
        sources[offset - 1] = SlotSource.TRUE
    return HistorySequence(current=current, priors=tuple(priors), sources=tuple(sources))
