"""Local point descriptors via edge convolutions over a fixed k-NN graph,
model parameter initialization, and the text weights format."""

from __future__ import annotations

import json
import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .cloud import NeighborIndex, PointCloud
from .config import RunConfig
from .inliers import GraphDifferenceScorer

__all__ = [
    "EdgeConvLayer",
    "DescriptorNet",
    "RegistrationModel",
    "init_params",
    "extract_features",
    "save_weights",
    "load_weights",
]

WEIGHTS_FORMAT = "ncreg-weights"
WEIGHTS_VERSION = 1


class EdgeConvLayer(nn.Module):
    """Shared per-edge affine map + leaky-ReLU, max-pooled over the neighbors.

    The edge input is ``[neighbor - center ; center]`` (or just the difference
    when ``include_center`` is off, which makes the layer translation
    invariant).  Max-pool ties route the gradient to the lowest neighbor
    index, keeping backward passes deterministic.
    """

    def __init__(self, in_dim: int, out_dim: int, include_center: bool = True):
        super().__init__()
        self.include_center = include_center
        self.linear = nn.Linear(2 * in_dim if include_center else in_dim, out_dim)

    def forward(self, x: torch.Tensor, neighbor_idx: torch.Tensor) -> torch.Tensor:
        gathered = x[neighbor_idx]                      # (N, K, in_dim)
        center = x.unsqueeze(1)
        edge = gathered - center
        if self.include_center:
            edge = torch.cat([edge, center.expand_as(gathered)], dim=-1)
        h = F.leaky_relu(self.linear(edge), negative_slope=0.2)
        return h.max(dim=1).values


class DescriptorNet(nn.Module):
    """Stack of edge-convolution layers; later layers consume the previous
    layer's features in place of coordinates."""

    def __init__(self, widths=(32, 32), include_center: bool = True):
        super().__init__()
        dims = (3,) + tuple(widths)
        self.layers = nn.ModuleList(
            EdgeConvLayer(dims[i], dims[i + 1], include_center) for i in range(len(widths))
        )
        self.out_dim = dims[-1]
        self.to(torch.float64)

    def forward(self, points: torch.Tensor, neighbor_idx: torch.Tensor) -> torch.Tensor:
        x = points
        for layer in self.layers:
            x = layer(x, neighbor_idx)
        return x


class RegistrationModel(nn.Module):
    """All learnable tensors of the pipeline: the point descriptor plus the
    neighborhood-difference inlier scorer."""

    def __init__(self, config: RunConfig):
        super().__init__()
        self.descriptor = DescriptorNet(config.descriptor_widths, config.include_center)
        self.scorer = GraphDifferenceScorer(config.scorer_channels, config.fusion_kernel)
        self._architecture = {
            "descriptor_widths": list(config.descriptor_widths),
            "include_center": bool(config.include_center),
            "scorer_channels": int(config.scorer_channels),
            "fusion_kernel": int(config.fusion_kernel),
        }

    @property
    def architecture(self) -> dict:
        return dict(self._architecture)

    def matches_config(self, config: RunConfig) -> bool:
        return self._architecture == {
            "descriptor_widths": list(config.descriptor_widths),
            "include_center": bool(config.include_center),
            "scorer_channels": int(config.scorer_channels),
            "fusion_kernel": int(config.fusion_kernel),
        }


def _fan_in_out(param: torch.Tensor) -> tuple[int, int]:
    if param.ndim == 2:          # linear: (out, in)
        return param.shape[1], param.shape[0]
    if param.ndim == 3:          # conv1d: (out, in, kernel)
        kernel = param.shape[2]
        return param.shape[1] * kernel, param.shape[0] * kernel
    raise ValueError(f"unsupported parameter rank {param.ndim}")


def init_params(seed: int, config: RunConfig) -> RegistrationModel:
    """Deterministically initialized model: weights uniform in
    (-s, s) with s = sqrt(6 / (fan_in + fan_out)), biases zero."""
    model = RegistrationModel(config)
    rng = np.random.default_rng(seed)
    with torch.no_grad():
        for name, param in model.named_parameters():
            if name.endswith("bias"):
                param.zero_()
            else:
                fan_in, fan_out = _fan_in_out(param)
                scale = math.sqrt(6.0 / (fan_in + fan_out))
                values = rng.uniform(-scale, scale, size=tuple(param.shape))
                param.copy_(torch.from_numpy(values))
    return model


def extract_features(cloud, index, model) -> torch.Tensor:
    """(N, d) descriptor matrix for a cloud under a prebuilt neighbor index.

    ``cloud`` may be a PointCloud, an (N, 3) array, or a tensor; ``index`` a
    NeighborIndex or an (N, K) integer array; ``model`` a RegistrationModel
    or a bare DescriptorNet.
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else cloud
    pts = torch.as_tensor(np.asarray(pts), dtype=torch.float64)
    nbr = index.neighbors if isinstance(index, NeighborIndex) else index
    nbr = torch.as_tensor(np.asarray(nbr), dtype=torch.int64)
    if nbr.ndim != 2 or nbr.shape[0] != pts.shape[0]:
        raise ValueError("neighbor index does not match the cloud")
    net = model.descriptor if isinstance(model, RegistrationModel) else model
    return net(pts, nbr)


def save_weights(model: RegistrationModel, path) -> None:
    """Write all named tensors as a JSON document; values are emitted with
    repr-exact floats so a round trip is value-exact for finite doubles."""
    tensors = []
    for name, param in model.named_parameters():
        values = param.detach().cpu().numpy().reshape(-1)
        if not np.isfinite(values).all():
            raise ValueError(f"tensor {name} holds non-finite values")
        tensors.append({
            "name": name,
            "shape": list(param.shape),
            "values": [float(v) for v in values],
        })
    doc = {
        "format": WEIGHTS_FORMAT,
        "version": WEIGHTS_VERSION,
        "architecture": model.architecture,
        "tensors": tensors,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, allow_nan=False)
        fh.write("\n")


def load_weights(path) -> RegistrationModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != WEIGHTS_FORMAT:
        raise ValueError(f"{path}: not a {WEIGHTS_FORMAT} file")
    arch = doc["architecture"]
    config = RunConfig().replace(
        descriptor_widths=tuple(arch["descriptor_widths"]),
        include_center=arch["include_center"],
        scorer_channels=arch["scorer_channels"],
        fusion_kernel=arch["fusion_kernel"],
    )
    model = RegistrationModel(config)
    stored = {entry["name"]: entry for entry in doc["tensors"]}
    names = [name for name, _ in model.named_parameters()]
    if set(names) != set(stored):
        raise ValueError(f"{path}: tensor names do not match the declared architecture")
    with torch.no_grad():
        for name, param in model.named_parameters():
            entry = stored[name]
            if list(param.shape) != list(entry["shape"]):
                raise ValueError(f"{path}: tensor {name} has shape {entry['shape']}, "
                                 f"expected {list(param.shape)}")
            values = np.asarray(entry["values"], dtype=np.float64).reshape(param.shape)
            param.copy_(torch.from_numpy(values))
    return model
