"""History reconstruction: predicts prior-year visit embeddings from the
current exam embedding, trained with a masked MSE feature distillation loss."""

from __future__ import annotations

import warnings

import numpy as np
import torch
import torch.nn as nn

from .embedding import SlotSource, VisitEmbedding


class HistoryPredictor(nn.Module):
    """Maps the current visit embedding to one predicted embedding per prior
    offset.

    Default: a shared 3-layer trunk (ReLU, dropout 0.1) with one linear head
    per offset. share_trunk=False switches to fully independent per-offset
    networks.
    """

    def __init__(self, dim: int, t_h: int = 4, hidden: int | None = None,
                 dropout: float = 0.1, share_trunk: bool = True):
        super().__init__()
        hidden = hidden or dim
        self.dim = dim
        self.t_h = t_h
        self.share_trunk = share_trunk

        def make_trunk():
            return nn.Sequential(
                nn.Linear(dim, hidden), nn.ReLU(), nn.Dropout(dropout),
                nn.Linear(hidden, hidden), nn.ReLU(), nn.Dropout(dropout),
                nn.Linear(hidden, hidden), nn.ReLU(), nn.Dropout(dropout),
            )

        if share_trunk:
            self.trunk = make_trunk()
            self.heads = nn.ModuleList(nn.Linear(hidden, dim) for _ in range(t_h))
        else:
            self.trunks = nn.ModuleList(make_trunk() for _ in range(t_h))
            self.heads = nn.ModuleList(nn.Linear(hidden, dim) for _ in range(t_h))

    def forward(self, x0: torch.Tensor) -> torch.Tensor:
        """(B, D) -> (B, T_h, D); slot i predicts offset -(i+1)."""
        if x0.shape[-1] != self.dim:
            raise ValueError(f"input dim {x0.shape[-1]} != predictor dim {self.dim}")
        if self.share_trunk:
            h = self.trunk(x0)
            outs = [head(h) for head in self.heads]
        else:
            outs = [head(trunk(x0)) for trunk, head in zip(self.trunks, self.heads)]
        return torch.stack(outs, dim=-2)


def reconstruct_history(predictor: HistoryPredictor, x0: VisitEmbedding) -> list[VisitEmbedding]:
    """Predict the T_h prior visit embeddings for one current exam."""
    vec = np.asarray(x0.vector)
    if vec.shape != (predictor.dim,):
        raise ValueError(f"embedding has shape {vec.shape}, expected ({predictor.dim},)")
    was_training = predictor.training
    predictor.eval()
    try:
        with torch.no_grad():
            param = next(predictor.parameters())
            inp = torch.as_tensor(vec, dtype=param.dtype)
            preds = predictor(inp.unsqueeze(0)).squeeze(0).numpy()
    finally:
        predictor.train(was_training)
    return [VisitEmbedding(vector=preds[i], relative_year=-(i + 1))
            for i in range(predictor.t_h)]


def reconstructed_sources(t_h: int) -> tuple[SlotSource, ...]:
    return tuple([SlotSource.RECONSTRUCTED] * t_h)


def feature_kd_loss(true: torch.Tensor, predicted: torch.Tensor,
                    mask: torch.Tensor) -> torch.Tensor:
    """Masked mean of squared L2 distances over available prior slots.

    true, predicted: (T_h, D); mask: (T_h,) bool/0-1 for slot availability.
    Zero available slots yields 0 (with a warning): nothing to supervise.
    """
    if true.shape != predicted.shape:
        raise ValueError(f"shape mismatch: {tuple(true.shape)} vs {tuple(predicted.shape)}")
    mask = mask.to(true.dtype)
    if mask.shape[0] != true.shape[0]:
        raise ValueError("mask length must equal the number of prior slots")
    t_eff = mask.sum()
    if t_eff.item() == 0:
        warnings.warn("feature_kd_loss: no available prior slots, loss is 0", stacklevel=2)
        return (predicted * 0.0).sum()
    sq = ((true - predicted) ** 2).sum(dim=-1)
    return (sq * mask).sum() / t_eff


def feature_kd_loss_batch(true: torch.Tensor, predicted: torch.Tensor,
                          mask: torch.Tensor) -> torch.Tensor:
    """Batch mean of per-sample feature KD losses.

    true, predicted: (B, T_h, D); mask: (B, T_h). Samples with no available
    slot contribute exactly zero loss and gradient.
    """
    mask = mask.to(true.dtype)
    sq = ((true - predicted) ** 2).sum(dim=-1)  # (B, T_h)
    t_eff = mask.sum(dim=-1)  # (B,)
    per_sample = (sq * mask).sum(dim=-1) / t_eff.clamp(min=1.0)
    return per_sample.mean()
