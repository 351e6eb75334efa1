"""Overlap metrics, differentiable soft variants and multi-run aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np
import torch

from ppsam.errors import EmptyRuns, ShapeMismatch

SOFT_EPS = 1e-6


def _check_shapes(a, b):
    if tuple(a.shape) != tuple(b.shape):
        raise ShapeMismatch(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def dice(gt: np.ndarray, pred: np.ndarray) -> float:
    """DICE overlap of two binary masks as a percentage in [0, 100].

    Two empty masks agree perfectly and score 100.
    """
    gt = np.asarray(gt, dtype=bool)
    pred = np.asarray(pred, dtype=bool)
    _check_shapes(gt, pred)
    total = int(gt.sum()) + int(pred.sum())
    if total == 0:
        return 100.0
    inter = int(np.logical_and(gt, pred).sum())
    return 200.0 * inter / total


def iou(gt: np.ndarray, pred: np.ndarray) -> float:
    """Intersection over union as a fraction; empty vs empty is 1."""
    gt = np.asarray(gt, dtype=bool)
    pred = np.asarray(pred, dtype=bool)
    _check_shapes(gt, pred)
    union = int(np.logical_or(gt, pred).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(gt, pred).sum()) / union


def soft_dice_and_iou(
    probs: torch.Tensor, gt: torch.Tensor, eps: float = SOFT_EPS
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Soft DICE and soft IoU fractions of a probability map against a mask.

    Both are differentiable in ``probs``. Sums run over every element, so a
    batch is treated as one pooled map.
    """
    probs = torch.as_tensor(probs)
    gt = torch.as_tensor(gt).to(probs.dtype)
    _check_shapes(probs, gt)
    inter = (probs * gt).sum()
    p_sum = probs.sum()
    y_sum = gt.sum()
    soft_dice = 2 * inter / (p_sum + y_sum + eps)
    soft_iou = inter / (p_sum + y_sum - inter + eps)
    return soft_dice, soft_iou


@dataclass(frozen=True)
class CurvePoint:
    perturbation_level: int
    mean_dice: float
    std_dice: float
    run_count: int


def aggregate_runs(scores: Sequence[float], level: int = 0) -> CurvePoint:
    """Population mean and standard deviation of per-run DICE scores."""
    values = np.asarray(list(scores), dtype=np.float64)
    if values.size == 0:
        raise EmptyRuns("cannot aggregate zero runs")
    # two-pass; math.fsum keeps the result independent of run order
    mean = math.fsum(values) / values.size
    var = math.fsum((values - mean) ** 2) / values.size
    std = math.sqrt(var) if values.size > 1 else 0.0
    return CurvePoint(int(level), float(mean), std, int(values.size))


def mean_of(values: Iterable[float]) -> float:
    values = list(values)
    if not values:
        raise EmptyRuns("cannot average zero values")
    return math.fsum(values) / len(values)
