"""Depth-map evaluation battery: absolute and relative errors, RMSE in
linear and log scale, and threshold inlier ratios."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields
from typing import List, Sequence, Tuple

import numpy as np


@dataclass
class DepthMetrics:
    abs: float
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    n_valid: int

    def row(self) -> List[float]:
        return [self.abs, self.abs_rel, self.sq_rel, self.rmse,
                self.rmse_log, self.delta1, self.delta2, self.delta3,
                self.n_valid]


def nearest_upsample_to(pred: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resize of a prediction onto the ground-truth grid."""
    h, w = pred.shape
    th, tw = shape
    ys = np.minimum((np.arange(th) * h) // th, h - 1)
    xs = np.minimum((np.arange(tw) * w) // tw, w - 1)
    return pred[ys[:, None], xs[None, :]]


def evaluate_depth(pred: np.ndarray, gt: np.ndarray,
                   d_min: float = 0.25, d_max: float = 20.0) -> DepthMetrics:
    """All metrics over the valid pixels (finite ground truth in range).

    Predictions at a different resolution are upsampled to the ground-truth
    grid with nearest neighbor first.  Threshold ratios use strict '<'.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        pred = nearest_upsample_to(pred, gt.shape)
    valid = np.isfinite(gt) & (gt >= d_min) & (gt <= d_max)
    n_valid = int(np.count_nonzero(valid))
    if n_valid == 0:
        raise ValueError("no valid ground-truth pixels to evaluate")
    y = pred[valid]
    ystar = gt[valid]
    diff = y - ystar
    ratio = np.maximum(y / ystar, ystar / y)
    return DepthMetrics(
        abs=float(np.mean(np.abs(diff))),
        abs_rel=float(np.mean(np.abs(diff) / ystar)),
        sq_rel=float(np.mean(diff ** 2 / ystar)),
        rmse=float(np.sqrt(np.mean(diff ** 2))),
        rmse_log=float(np.sqrt(np.mean((np.log(y) - np.log(ystar)) ** 2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25 ** 2)),
        delta3=float(np.mean(ratio < 1.25 ** 3)),
        n_valid=n_valid,
    )


CSV_HEADER = ["sample", "abs", "abs_rel", "sq_rel", "rmse", "rmse_log",
              "d1", "d2", "d3", "n_valid"]


def aggregate(per_sample: Sequence[DepthMetrics]) -> DepthMetrics:
    """Mean of per-map metrics (per-sample-then-average protocol)."""
    if not per_sample:
        raise ValueError("nothing to aggregate")
    cols = np.array([m.row() for m in per_sample], dtype=np.float64)
    mean = cols.mean(axis=0)
    return DepthMetrics(*mean[:8], n_valid=int(round(mean[8])))


def write_metrics_csv(path_or_file, names: Sequence[str],
                      per_sample: Sequence[DepthMetrics]) -> None:
    """Per-sample rows plus a final "mean" row."""
    if len(names) != len(per_sample):
        raise ValueError("one name per metrics row required")

    def emit(f):
        writer = csv.writer(f)
        writer.writerow(CSV_HEADER)
        for name, m in zip(names, per_sample):
            writer.writerow([name] + [f"{v:.6f}" for v in m.row()[:8]]
                            + [m.n_valid])
        mean = aggregate(per_sample)
        writer.writerow(["mean"] + [f"{v:.6f}" for v in mean.row()[:8]]
                        + [mean.n_valid])

    if isinstance(path_or_file, io.IOBase):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as f:
            emit(f)
