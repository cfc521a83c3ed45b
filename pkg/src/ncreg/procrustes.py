"""Closed-form weighted rigid alignment with an analytic backward pass."""

from __future__ import annotations

from typing import Optional

import numpy as np
import torch

from .cloud import RigidTransform

__all__ = ["DegenerateGeometryError", "rotation_from_covariance", "weighted_svd_torch", "weighted_svd"]

# Near-repeated singular values make the rotation derivative ill-conditioned;
# denominators are regularized as sign(x) / (|x| + EPS).
_BACKWARD_EPS = 1e-9
_DEGENERACY_RATIO = 1e-12


class DegenerateGeometryError(RuntimeError):
    """Raised when the correspondence covariance is (numerically) rank < 2."""


class _SvdRotation(torch.autograd.Function):
    """R = V diag(1, 1, det(V U^T)) U^T for a 3x3 covariance H = U S V^T.

    The backward pass differentiates the decomposition analytically, with the
    repeated-singular-value denominators 1 / (s_j^2 - s_i^2) regularized so a
    near-tie yields a large-but-finite gradient instead of an overflow.
    """

    @staticmethod
    def forward(ctx, cov: torch.Tensor):
        u, s, vh = torch.linalg.svd(cov)
        if s[1] < _DEGENERACY_RATIO * s[0]:
            raise DegenerateGeometryError(
                "correspondence covariance is rank deficient; the points are "
                "(numerically) collinear after weighting")
        v = vh.transpose(-1, -2)
        det = torch.sign(torch.det(u) * torch.det(v))
        flip = torch.diag(torch.stack([torch.ones_like(det), torch.ones_like(det), det]))
        rotation = v @ flip @ u.transpose(-1, -2)
        ctx.save_for_backward(u, s, v, flip)
        return rotation

    @staticmethod
    def backward(ctx, grad_rotation: torch.Tensor):
        u, s, v, flip = ctx.saved_tensors
        grad_u = grad_rotation.transpose(-1, -2) @ v @ flip
        grad_v = grad_rotation @ u @ flip
        s2 = s * s
        gaps = s2.unsqueeze(0) - s2.unsqueeze(1)   # gaps[i, j] = s_j^2 - s_i^2
        inv = torch.sign(gaps) / (gaps.abs() + _BACKWARD_EPS)
        utu = u.transpose(-1, -2) @ grad_u
        vtv = v.transpose(-1, -2) @ grad_v
        term_u = (inv * (utu - utu.transpose(-1, -2))) * s.unsqueeze(0)
        term_v = s.unsqueeze(1) * (inv * (vtv - vtv.transpose(-1, -2)))
        return u @ (term_u + term_v) @ v.transpose(-1, -2)


def rotation_from_covariance(cov: torch.Tensor) -> torch.Tensor:
    return _SvdRotation.apply(cov)


def weighted_svd_torch(src: torch.Tensor, dst: torch.Tensor, weights: torch.Tensor,
                       spectrum_sink: Optional[list] = None):
    """Rotation and translation minimizing the weighted squared residuals
    of src -> dst correspondences; differentiable in all three inputs.

    ``spectrum_sink``, when given, collects the covariance singular values of
    each call (used by the gradient checker to reject near-degenerate
    instances).
    """
    src = torch.as_tensor(src, dtype=torch.float64)
    dst = torch.as_tensor(dst, dtype=torch.float64)
    weights = torch.as_tensor(weights, dtype=torch.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise ValueError("src and dst must both be (N, 3) with equal N")
    if weights.shape != (src.shape[0],):
        raise ValueError("weights must be one scalar per correspondence")
    if src.shape[0] < 3:
        raise ValueError("at least 3 correspondences are required")
    w_detached = weights.detach()
    if not torch.isfinite(w_detached).all() or (w_detached < 0).any():
        raise ValueError("weights must be finite and non-negative")
    total = weights.sum()
    if total.detach().item() <= 0.0:
        raise ValueError("weights must not sum to zero")

    normalized = (weights / total).unsqueeze(1)
    src_centroid = (normalized * src).sum(dim=0)
    dst_centroid = (normalized * dst).sum(dim=0)
    src_centered = src - src_centroid
    dst_centered = dst - dst_centroid
    cov = src_centered.transpose(0, 1) @ (normalized * dst_centered)
    if spectrum_sink is not None:
        with torch.no_grad():
            spectrum_sink.append(torch.linalg.svdvals(cov).numpy())
    rotation = rotation_from_covariance(cov)
    translation = dst_centroid - rotation @ src_centroid
    return rotation, translation


def weighted_svd(src, dst, weights=None) -> RigidTransform:
    """Array-facing wrapper around :func:`weighted_svd_torch`; uniform
    weights when none are given."""
    src = np.asarray(src, dtype=np.float64)
    if weights is None:
        weights = np.ones(src.shape[0])
    with torch.no_grad():
        rotation, translation = weighted_svd_torch(
            torch.from_numpy(src),
            torch.as_tensor(np.asarray(dst, dtype=np.float64)),
            torch.as_tensor(np.asarray(weights, dtype=np.float64)),
        )
    return RigidTransform(rotation.numpy(), translation.numpy())
