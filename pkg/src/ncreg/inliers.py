"""Inlier confidence from the structure difference between a point's source
neighborhood and the neighborhood of its soft correspondence."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

__all__ = ["EdgeSet", "GraphDifferenceScorer", "build_edge_sets", "evaluate_inliers", "select_inliers"]


@dataclass
class EdgeSet:
    """Edges from each point to its k neighbors, on the source side and on the
    soft-correspondence side, in the same (distance, index) neighbor order."""

    source: torch.Tensor  # (N, K, 3): point_i - neighbor_k
    pseudo: torch.Tensor  # (N, K, 3): pseudo_i - pseudo of neighbor_k
    neighbors: np.ndarray  # (N, K) neighbor indices shared by both sides


def build_edge_sets(source_points: torch.Tensor, pseudo_targets: torch.Tensor,
                    neighbors: np.ndarray) -> EdgeSet:
    """Edge vectors point from each center to its neighbors, with the
    correspondence side inheriting the source neighbor order."""
    src = torch.as_tensor(source_points, dtype=torch.float64)
    pseudo = torch.as_tensor(pseudo_targets, dtype=torch.float64)
    if src.shape != pseudo.shape:
        raise ValueError("source points and pseudo targets must have equal shapes")
    nbr = np.asarray(neighbors, dtype=np.int64)
    if nbr.ndim != 2 or nbr.shape[0] != src.shape[0]:
        raise ValueError("neighbors must be an (N, K) index array over the source cloud")
    idx = torch.from_numpy(nbr)
    src_edges = src.unsqueeze(1) - src[idx]
    pseudo_edges = pseudo.unsqueeze(1) - pseudo[idx]
    return EdgeSet(source=src_edges, pseudo=pseudo_edges, neighbors=nbr)


class GraphDifferenceScorer(nn.Module):
    """Scores each correspondence in (0, 1] from the difference of fused edge
    features between the two neighborhoods.

    Each 3-vector edge is lifted to ``channels`` features; a window-3
    convolution along the distance-ordered neighbor axis (replicate-padded)
    fuses every edge with its two list-adjacent edges.  The two sides are
    subtracted, attention over the k edges pools the differences, and a
    bias-free two-layer head maps the pooled vector to a scalar whose
    magnitude is squashed through ``1 - tanh(|.|)``.

    Both head layers and the attention layer carry no bias, so a vanishing
    neighborhood difference scores exactly 1 no matter how the weights move
    during training.
    """

    def __init__(self, channels: int = 16, fusion_kernel: int = 3):
        super().__init__()
        if fusion_kernel not in (1, 3):
            raise ValueError("fusion_kernel must be 1 or 3")
        self.channels = channels
        self.fusion_kernel = fusion_kernel
        self.lift = nn.Linear(3, channels)
        self.fuse = nn.Conv1d(channels, channels, fusion_kernel)
        self.attend = nn.Linear(channels, 1, bias=False)
        self.head_hidden = nn.Linear(channels, channels, bias=False)
        self.head_out = nn.Linear(channels, 1, bias=False)
        self.to(torch.float64)

    def fused_edge_features(self, edges: torch.Tensor) -> torch.Tensor:
        """(N, K, 3) edges -> (N, K, channels) fused features."""
        h = self.lift(edges).permute(0, 2, 1)
        if self.fusion_kernel == 3:
            h = F.pad(h, (1, 1), mode="replicate")
        return self.fuse(h).permute(0, 2, 1)

    def forward(self, source_edges: torch.Tensor, pseudo_edges: torch.Tensor):
        if source_edges.shape != pseudo_edges.shape:
            raise ValueError("edge tensors must have equal shapes")
        if source_edges.ndim != 3 or source_edges.shape[-1] != 3:
            raise ValueError("edges must be (N, K, 3)")
        diff = self.fused_edge_features(source_edges) - self.fused_edge_features(pseudo_edges)
        logits = self.attend(diff).squeeze(-1)
        attention = torch.softmax(logits, dim=1)
        pooled = (attention.unsqueeze(-1) * diff).sum(dim=1)
        h = F.leaky_relu(self.head_hidden(pooled), negative_slope=0.2)
        score = self.head_out(h).squeeze(-1)
        weights = 1.0 - torch.tanh(score.abs())
        return weights, attention


def evaluate_inliers(edges: EdgeSet, scorer: GraphDifferenceScorer):
    """Per-point confidences in (0, 1] plus the per-edge attention rows."""
    return scorer(edges.source, edges.pseudo)


def select_inliers(weights, count: int) -> np.ndarray:
    """Indices of the ``count`` largest weights, ties broken by lowest index."""
    w = weights.detach().cpu().numpy() if torch.is_tensor(weights) else np.asarray(weights, dtype=np.float64)
    n = w.shape[0]
    if count < 1 or count > n:
        raise ValueError(f"count must lie in [1, {n}], got {count}")
    order = np.lexsort((np.arange(n), -w))
    return np.sort(order[:count])
