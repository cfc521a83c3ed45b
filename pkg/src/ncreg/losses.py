"""The three unsupervised training losses and their weighted combination."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

__all__ = [
    "huber",
    "global_alignment_loss",
    "neighborhood_consensus_loss",
    "spatial_consistency_loss",
    "LossBreakdown",
    "combine_losses",
]


def huber(value, width: float):
    """Quadratic inside ``|u| <= width``, linear beyond; C1 at the knee.

    Works on floats and on tensors (differentiably).
    """
    if width <= 0:
        raise ValueError("width must be positive")
    if torch.is_tensor(value):
        mag = value.abs()
        return torch.where(mag <= width, 0.5 * value * value, width * (mag - 0.5 * width))
    mag = abs(float(value))
    if mag <= width:
        return 0.5 * mag * mag
    return width * (mag - 0.5 * width)


def _point_tensor(points) -> torch.Tensor:
    t = points if torch.is_tensor(points) else torch.as_tensor(np.asarray(points), dtype=torch.float64)
    if t.ndim != 2 or t.shape[1] != 3:
        raise ValueError("expected an (N, 3) point array")
    return t


def global_alignment_loss(aligned_source, target, width: float) -> torch.Tensor:
    """Symmetric sum of robustly penalized squared nearest-neighbor distances.

    The robust penalty is applied to the *squared* distances, following the
    source formulation literally.
    """
    p = _point_tensor(aligned_source)
    q = _point_tensor(target)
    sq = torch.cdist(p, q).square()
    forward = huber(sq.min(dim=1).values, width).sum()
    backward = huber(sq.min(dim=0).values, width).sum()
    return forward + backward


def neighborhood_consensus_loss(rotation: torch.Tensor, translation: torch.Tensor,
                                source_points: torch.Tensor, pseudo_targets: torch.Tensor,
                                selected: np.ndarray, neighbors: np.ndarray) -> torch.Tensor:
    """Unsquared residual norms of each selected point's transformed neighbors
    against those neighbors' own soft targets (order-aligned)."""
    sel = np.asarray(selected, dtype=np.int64)
    if sel.size == 0:
        raise ValueError("selection must not be empty")
    nbr = torch.from_numpy(np.asarray(neighbors, dtype=np.int64)[sel])  # (S, K)
    src_nbr = source_points[nbr]
    dst_nbr = pseudo_targets[nbr]
    moved = src_nbr @ rotation.transpose(0, 1) + translation
    return (moved - dst_nbr).norm(dim=-1).sum()


def spatial_consistency_loss(refined_map: torch.Tensor, selected: np.ndarray,
                             argmax_targets: np.ndarray | None = None) -> torch.Tensor:
    """Mean negative log probability of each selected row's dominant target.

    The dominant-target index is treated as a constant (it is piecewise
    constant in the parameters); ties resolve to the lowest index.
    """
    sel = np.asarray(selected, dtype=np.int64)
    if sel.size == 0:
        raise ValueError("selection must not be empty")
    rows = refined_map[torch.from_numpy(sel)]
    if argmax_targets is None:
        argmax_targets = np.argmax(rows.detach().cpu().numpy(), axis=1)
    idx = torch.from_numpy(np.asarray(argmax_targets, dtype=np.int64))
    picked = rows[torch.arange(rows.shape[0]), idx]
    return -torch.log(picked).mean()


@dataclass
class LossBreakdown:
    """Scalar loss components of one pipeline iteration (detached floats)."""

    global_alignment: float
    neighborhood_consensus: float
    spatial_consistency: float
    total: float
    neighborhood_weight: float
    consistency_weight: float
    huber_width: float

    def as_dict(self) -> dict:
        return {
            "global_alignment": self.global_alignment,
            "neighborhood_consensus": self.neighborhood_consensus,
            "spatial_consistency": self.spatial_consistency,
            "total": self.total,
        }


def combine_losses(alignment: torch.Tensor, consensus: torch.Tensor, consistency: torch.Tensor,
                   neighborhood_weight: float, consistency_weight: float,
                   huber_width: float) -> tuple[torch.Tensor, LossBreakdown]:
    total = alignment + neighborhood_weight * consensus + consistency_weight * consistency
    breakdown = LossBreakdown(
        global_alignment=float(alignment.detach()),
        neighborhood_consensus=float(consensus.detach()),
        spatial_consistency=float(consistency.detach()),
        total=float(total.detach()),
        neighborhood_weight=neighborhood_weight,
        consistency_weight=consistency_weight,
        huber_width=huber_width,
    )
    return total, breakdown
