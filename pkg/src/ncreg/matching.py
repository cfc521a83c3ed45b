"""Soft correspondence maps: point-wise matching, neighborhood-consensus
refinement, and soft target prediction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

__all__ = [
    "MatchingMap",
    "CorrespondenceSet",
    "pointwise_map",
    "neighborhood_scores",
    "refine_map",
    "predict_pseudo_targets",
    "build_matching_map",
]


@dataclass
class MatchingMap:
    """Row-stochastic correspondence probabilities plus the intermediates
    that produced them."""

    distances: torch.Tensor            # (N, M) feature-space Euclidean distances
    pointwise: torch.Tensor            # (N, M) row-softmax of negated distances
    consensus: Optional[torch.Tensor]  # (N, M) neighborhood agreement scores, None if refinement off
    refined_distances: torch.Tensor    # (N, M)
    refined: torch.Tensor              # (N, M) row-stochastic refined map
    consensus_baseline: float


@dataclass
class CorrespondenceSet:
    """Per source point: its soft target, the shared neighbor lists, and the
    inlier confidence once the scorer has run."""

    pseudo_targets: torch.Tensor        # (N, 3)
    source_points: torch.Tensor         # (N, 3)
    neighbors: np.ndarray               # (N, K)
    weights: Optional[torch.Tensor] = None  # (N,), filled by the inlier scorer


def _as_feature_tensor(feats) -> torch.Tensor:
    t = torch.as_tensor(feats, dtype=torch.float64) if not torch.is_tensor(feats) else feats
    if t.ndim != 2:
        raise ValueError("feature matrices must be 2-D")
    return t.to(torch.float64)


def pointwise_map(feat_p, feat_q) -> tuple[torch.Tensor, torch.Tensor]:
    """Feature distances and the row-stochastic map softmax(-distances).

    The softmax subtracts each row's maximum before exponentiating, so rows
    stay normalized for distances up to at least 1e3.
    """
    fp = _as_feature_tensor(feat_p)
    fq = _as_feature_tensor(feat_q)
    if fp.shape[1] != fq.shape[1]:
        raise ValueError(f"feature dims differ: {fp.shape[1]} vs {fq.shape[1]}")
    distances = torch.cdist(fp, fq)
    return distances, torch.softmax(-distances, dim=1)


def _neighbor_tensor(neighbors, rows: int) -> torch.Tensor:
    nbr = np.asarray(neighbors, dtype=np.int64)
    if nbr.ndim != 2 or nbr.shape[0] != rows:
        raise ValueError("neighbor array does not match the map")
    return torch.from_numpy(nbr)


def neighborhood_scores(pointwise: torch.Tensor, neighbors_p, neighbors_q) -> torch.Tensor:
    """Sum the map over both points' neighbor sets, divided by K (as printed
    in the source formulation: a K^2-term sum with a single 1/K factor)."""
    nbr_p = _neighbor_tensor(neighbors_p, pointwise.shape[0])
    nbr_q = _neighbor_tensor(neighbors_q, pointwise.shape[1])
    if nbr_p.shape[1] != nbr_q.shape[1]:
        raise ValueError("both neighbor indices must use the same k")
    k = nbr_p.shape[1]
    row_sums = pointwise[nbr_p].sum(dim=1)          # (N, M): sum over i' in N(i)
    scores = row_sums[:, nbr_q].sum(dim=2)          # (N, M): sum over j' in N(j)
    return scores / k


def refine_map(distances: torch.Tensor, scores: torch.Tensor,
               consensus_baseline: float) -> tuple[torch.Tensor, torch.Tensor]:
    """Shrink distances where neighborhoods agree (score above the baseline),
    inflate them where they do not, then renormalize row-wise."""
    if distances.shape != scores.shape:
        raise ValueError("distances and scores must have equal shapes")
    refined_distances = torch.exp(consensus_baseline - scores) * distances
    return refined_distances, torch.softmax(-refined_distances, dim=1)


def predict_pseudo_targets(refined: torch.Tensor, target_points) -> torch.Tensor:
    """Soft targets: each row's probability-weighted combination of the
    target points, hence always inside their convex hull."""
    pts = torch.as_tensor(np.asarray(target_points.points if hasattr(target_points, "points")
                                     else target_points), dtype=torch.float64)
    if refined.shape[1] != pts.shape[0]:
        raise ValueError("map columns must equal the target point count")
    return refined @ pts


def build_matching_map(feat_p, feat_q, neighbors_p, neighbors_q,
                       consensus_baseline: float, use_refinement: bool = True) -> MatchingMap:
    distances, pointwise = pointwise_map(feat_p, feat_q)
    if use_refinement:
        consensus = neighborhood_scores(pointwise, neighbors_p, neighbors_q)
        refined_distances, refined = refine_map(distances, consensus, consensus_baseline)
    else:
        consensus = None
        refined_distances, refined = distances, pointwise
    return MatchingMap(
        distances=distances,
        pointwise=pointwise,
        consensus=consensus,
        refined_distances=refined_distances,
        refined=refined,
        consensus_baseline=consensus_baseline,
    )
