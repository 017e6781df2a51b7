"""Longitudinal aggregation, the additive hazard head, and the masked
re-weighted cross-entropy objective."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .embedding import HistorySequence
from .errors import DegenerateSampleError, NumericError

RISK_EPS = 1e-6


@dataclass
class RiskOutput:
    """Additive hazard head outputs for a batch.

    cum_risk[k] = clamp(baseline + increments[0] + ... + increments[k-1]);
    logits are the inverse-sigmoid of cum_risk.
    """

    baseline: torch.Tensor      # (B,)
    increments: torch.Tensor    # (B, K), non-negative
    cum_risk: torch.Tensor      # (B, K), in (0, 1), non-decreasing over K
    logits: torch.Tensor        # (B, K)


def cumulative_risk(baseline: torch.Tensor, increments: torch.Tensor,
                    eps: float = RISK_EPS) -> tuple[torch.Tensor, torch.Tensor]:
    """Running-sum risk and its logits from a baseline and non-negative
    per-horizon increments."""
    if (increments < 0).any():
        raise ValueError("hazard increments must be non-negative")
    p = baseline.unsqueeze(-1) + torch.cumsum(increments, dim=-1)
    p = p.clamp(eps, 1.0 - eps)
    z = torch.log(p) - torch.log1p(-p)
    return p, z


class HazardHead(nn.Module):
    """Maps an aggregated representation to baseline risk plus horizon-specific
    non-negative hazard increments; cumulative risk is monotone by
    construction."""

    def __init__(self, dim: int, n_horizons: int):
        super().__init__()
        self.n_horizons = n_horizons
        self.base = nn.Linear(dim, 1)
        self.hazards = nn.Linear(dim, n_horizons)
        # start with small baseline risk and near-zero increments so the
        # running sum begins well inside (0, 1) and away from the clamp
        with torch.no_grad():
            self.base.bias.fill_(-3.0)
            self.hazards.bias.fill_(-4.6)
            self.base.weight.mul_(0.1)
            self.hazards.weight.mul_(0.1)

    def forward(self, q: torch.Tensor) -> RiskOutput:
        baseline = torch.sigmoid(self.base(q)).squeeze(-1)
        increments = F.softplus(self.hazards(q))
        if not torch.isfinite(increments).all() or not torch.isfinite(baseline).all():
            raise NumericError("non-finite hazard head intermediate")
        p, z = cumulative_risk(baseline, increments)
        return RiskOutput(baseline=baseline, increments=increments, cum_risk=p, logits=z)


class SelfAttentionAggregator(nn.Module):
    """Reference longitudinal encoder: learned positional encoding over
    relative year, learned per-slot absent tokens, and a small self-attention
    stack. Slot 0 is the current exam; slot i>0 is offset -i."""

    def __init__(self, dim: int, t_h: int = 4, n_layers: int = 2, n_heads: int = 4,
                 ff_dim: int | None = None, dropout: float = 0.0):
        super().__init__()
        self.dim = dim
        self.t_h = t_h
        self.pos = nn.Parameter(torch.randn(t_h + 1, dim) * 0.02)
        self.absent = nn.Parameter(torch.randn(t_h, dim) * 0.02)
        layer = nn.TransformerEncoderLayer(
            d_model=dim, nhead=n_heads, dim_feedforward=ff_dim or 2 * dim,
            dropout=dropout, batch_first=True, norm_first=True)
        self.encoder = nn.TransformerEncoder(layer, num_layers=n_layers,
                                             enable_nested_tensor=False)

    @property
    def out_dim(self) -> int:
        return self.dim

    def forward(self, embeddings: torch.Tensor, present: torch.Tensor) -> torch.Tensor:
        """embeddings: (B, T_h+1, D); present: (B, T_h+1) bool. Absent slots
        are replaced by their learned token. Returns q_T: (B, D)."""
        if embeddings.shape[1] != self.t_h + 1:
            raise ValueError(f"expected {self.t_h + 1} slots, got {embeddings.shape[1]}")
        tokens = torch.cat([self.pos.new_zeros(1, self.dim), self.absent], dim=0)
        filled = torch.where(present.unsqueeze(-1), embeddings,
                             tokens.unsqueeze(0).to(embeddings.dtype))
        x = filled + self.pos.to(embeddings.dtype)
        out = self.encoder(x)
        return out[:, 0]


class RiskModel(nn.Module):
    """Aggregator plus hazard head; the shared architecture for teachers,
    baselines and the student risk pathway."""

    def __init__(self, aggregator: nn.Module, head: HazardHead):
        super().__init__()
        self.aggregator = aggregator
        self.head = head

    def forward(self, embeddings: torch.Tensor, present: torch.Tensor) -> RiskOutput:
        return self.head(self.aggregator(embeddings, present))


def sequence_tensors(seq: HistorySequence, dtype=torch.float32) -> tuple[torch.Tensor, torch.Tensor]:
    """Pack one HistorySequence into (1, T_h+1, D) embeddings and a present
    mask; absent slots carry zeros (the aggregator substitutes its tokens)."""
    dim = seq.current.vector.shape[0]
    emb = np.zeros((seq.t_h + 1, dim), dtype=np.float64)
    present = np.zeros(seq.t_h + 1, dtype=bool)
    emb[0] = seq.current.vector
    present[0] = True
    for i, slot in enumerate(seq.priors):
        if slot is not None:
            emb[i + 1] = slot.vector
            present[i + 1] = True
    return (torch.as_tensor(emb, dtype=dtype).unsqueeze(0),
            torch.as_tensor(present).unsqueeze(0))


def aggregate_sequence(aggregator: nn.Module, seq: HistorySequence) -> np.ndarray:
    """Eval-mode aggregation of a single history sequence to q_T."""
    dtype = next(aggregator.parameters()).dtype
    emb, present = sequence_tensors(seq, dtype=dtype)
    was_training = aggregator.training
    aggregator.eval()
    try:
        with torch.no_grad():
            q = aggregator(emb, present).squeeze(0)
    finally:
        aggregator.train(was_training)
    if not torch.isfinite(q).all():
        raise NumericError("non-finite aggregated representation")
    return q.numpy()


# ---------------------------------------------------------------------------
# Losses and class weights
# ---------------------------------------------------------------------------

def rce_loss(cum_risk: torch.Tensor, labels: torch.Tensor,
             pos_weights: torch.Tensor) -> torch.Tensor:
    """Masked re-weighted cross-entropy over horizons for one sample.

    cum_risk: (K,) probabilities in (0,1); labels: (K,) in {0,1,-1};
    pos_weights: (K,). Masked horizons (-1) contribute nothing.
    """
    if cum_risk.shape != labels.shape or cum_risk.shape != pos_weights.shape:
        raise ValueError("cum_risk, labels and pos_weights must share length K")
    mask = (labels != -1).to(cum_risk.dtype)
    n_valid = mask.sum()
    if n_valid.item() == 0:
        raise DegenerateSampleError("all horizons masked for this sample")
    y = labels.clamp(min=0).to(cum_risk.dtype)
    terms = -pos_weights * y * torch.log(cum_risk) - (1.0 - y) * torch.log1p(-cum_risk)
    return (terms * mask).sum() / n_valid


def rce_loss_batch(cum_risk: torch.Tensor, labels: torch.Tensor,
                   pos_weights: torch.Tensor) -> tuple[torch.Tensor, int]:
    """Batch mean of per-sample RCE; degenerate (all-masked) rows are dropped.

    Returns (loss, n_dropped). Raises if every row is degenerate.
    """
    mask = (labels != -1).to(cum_risk.dtype)
    n_valid = mask.sum(dim=-1)
    keep = n_valid > 0
    n_dropped = int((~keep).sum().item())
    if not keep.any():
        raise DegenerateSampleError("every sample in the batch is fully masked")
    y = labels.clamp(min=0).to(cum_risk.dtype)
    w = pos_weights.to(cum_risk.dtype)
    terms = -w * y * torch.log(cum_risk) - (1.0 - y) * torch.log1p(-cum_risk)
    per_sample = (terms * mask).sum(dim=-1) / n_valid.clamp(min=1.0)
    return per_sample[keep].mean(), n_dropped


def compute_pos_weights(train_labels: np.ndarray, max_weight: float = 100.0) -> np.ndarray:
    """Per-horizon positive class weight = #negatives / #positives, computed
    on the training split only; horizons with no positives are capped."""
    labels = np.asarray(train_labels)
    if labels.ndim != 2:
        raise ValueError("expected a (n_samples, K) label array")
    k = labels.shape[1]
    w = np.empty(k, dtype=np.float64)
    for j in range(k):
        col = labels[:, j]
        n_pos = int((col == 1).sum())
        n_neg = int((col == 0).sum())
        if n_pos + n_neg == 0:
            raise ValueError(f"horizon {j + 1} has no unmasked training labels")
        if n_pos == 0:
            warnings.warn(f"horizon {j + 1} has no positives; capping weight at {max_weight}",
                          stacklevel=2)
            w[j] = max_weight
        else:
            w[j] = min(n_neg / n_pos, max_weight)
    return w
