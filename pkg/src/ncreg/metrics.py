"""Evaluation metrics (anisotropic MAE, isotropic MIE, symmetric chamfer)
and their CSV serialization."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .cloud import PointCloud, RigidTransform, matrix_to_euler_zyx

__all__ = ["MetricReport", "mae_metrics", "mie_metrics", "chamfer", "write_metrics_csv", "METRIC_COLUMNS"]

METRIC_COLUMNS = ("mae_r", "mae_t", "mie_r", "mie_t", "chamfer")


@dataclass
class MetricReport:
    """One evaluated registration: rotation errors in degrees, translation
    errors in model units, chamfer in squared model units."""

    mae_r: float
    mae_t: float
    mie_r: float
    mie_t: float
    chamfer: float

    def row(self) -> list[float]:
        return [self.mae_r, self.mae_t, self.mie_r, self.mie_t, self.chamfer]


def mae_metrics(predicted: RigidTransform, truth: RigidTransform) -> tuple[float, float]:
    """Mean absolute per-angle (intrinsic z-y-x Euler, degrees) and
    per-component translation errors; warns when either rotation sits in
    gimbal lock, where the convention's z/x split is arbitrary."""
    angles_pred, gimbal_pred = matrix_to_euler_zyx(predicted.rotation)
    angles_true, gimbal_true = matrix_to_euler_zyx(truth.rotation)
    if gimbal_pred or gimbal_true:
        warnings.warn("Euler decomposition is gimbal-locked; per-angle errors are "
                      "convention dependent", RuntimeWarning, stacklevel=2)
    mae_r = float(np.abs(angles_pred - angles_true).mean())
    mae_t = float(np.abs(predicted.translation - truth.translation).mean())
    return mae_r, mae_t


def mie_metrics(predicted: RigidTransform, truth: RigidTransform) -> tuple[float, float]:
    """Geodesic rotation angle (degrees) and translation vector norm."""
    trace = float(np.trace(truth.rotation.T @ predicted.rotation))
    angle = math.degrees(math.acos(min(1.0, max(-1.0, 0.5 * (trace - 1.0)))))
    offset = float(np.linalg.norm(predicted.translation - truth.translation))
    return angle, offset


def _points(cloud) -> np.ndarray:
    return cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)


def chamfer(first, second) -> float:
    """Symmetric sum of mean squared nearest-neighbor distances."""
    from scipy.spatial import cKDTree

    a = _points(first)
    b = _points(second)
    if a.size == 0 or b.size == 0:
        raise ValueError("clouds must be nonempty")
    forward = cKDTree(b).query(a)[0]
    backward = cKDTree(a).query(b)[0]
    return float(np.square(forward).mean() + np.square(backward).mean())


def write_metrics_csv(rows: Iterable[tuple[object, MetricReport]], path,
                      mean_row: bool = True) -> None:
    """One CSV line per (pair id, report), optionally followed by a mean row."""
    rows = list(rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("pair_id",) + METRIC_COLUMNS)
        collected = []
        for pair_id, report in rows:
            writer.writerow([pair_id] + [repr(v) for v in report.row()])
            collected.append(report.row())
        if mean_row and collected:
            means = np.asarray(collected, dtype=np.float64).mean(axis=0)
            writer.writerow(["mean"] + [repr(float(v)) for v in means])
