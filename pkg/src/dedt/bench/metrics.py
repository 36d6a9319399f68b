"""Overlap and centre-error metrics over whole trajectories."""
from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from ..geometry import BoundingBox, iou_many

OVERLAP_GRID = np.linspace(0.0, 1.0, 101)
PIXEL_THRESHOLDS = np.arange(0, 51)
PRECISION_PIXELS = 20


class LengthMismatchError(ValueError):
    pass


def _as_boxes(traj) -> np.ndarray:
    if len(traj) and isinstance(traj[0], BoundingBox):
        return np.array([b.as_tuple() for b in traj], dtype=np.float64)
    return np.asarray(traj, dtype=np.float64).reshape(-1, 4)


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p, g = _as_boxes(pred), _as_boxes(gt)
    if len(p) != len(g):
        raise LengthMismatchError(f"trajectory has {len(p)} frames, ground truth {len(g)}")
    if len(p) == 0:
        raise LengthMismatchError("empty trajectory")
    return p, g


def overlaps(pred, gt) -> np.ndarray:
    """Per-frame IoU."""
    p, g = _pair(pred, gt)
    return iou_many(p, g)


def center_errors(pred, gt) -> np.ndarray:
    p, g = _pair(pred, gt)
    dp = p[:, :2] + p[:, 2:] / 2 - g[:, :2] - g[:, 2:] / 2
    return np.hypot(dp[:, 0], dp[:, 1])


def success_curve(pred, gt, grid=OVERLAP_GRID) -> np.ndarray:
    """Fraction of frames with IoU strictly above each threshold."""
    ov = overlaps(pred, gt)
    return (ov[None, :] > np.asarray(grid)[:, None]).mean(axis=1)


def success_auc(pred, gt) -> float:
    """Area under the success plot; the integral collapses to the mean IoU."""
    return float(overlaps(pred, gt).mean())


def success_auc_trapezoid(pred, gt, grid=OVERLAP_GRID) -> float:
    curve = success_curve(pred, gt, grid)
    return float(np.sum((curve[1:] + curve[:-1]) / 2 * np.diff(grid)))


def precision_curve(pred, gt, thresholds=PIXEL_THRESHOLDS) -> np.ndarray:
    err = center_errors(pred, gt)
    return (err[None, :] <= np.asarray(thresholds, dtype=np.float64)[:, None]).mean(axis=1)


def precision_at(pred, gt, thresholds=PIXEL_THRESHOLDS) -> dict:
    """{threshold: fraction within that many pixels}."""
    curve = precision_curve(pred, gt, thresholds)
    return {float(d): float(v) for d, v in zip(thresholds, curve)}


def precision_score(pred, gt, pixels: float = PRECISION_PIXELS) -> float:
    return float(np.mean(center_errors(pred, gt) <= pixels))


def success_rate_05(pred, gt) -> float:
    return float(np.mean(overlaps(pred, gt) > 0.5))


@dataclass
class EvalReport:
    auc: float
    auc_trapezoid: float
    precision: float
    precision_curve: dict
    success_at_05: float
    mean_iou: float
    frames: int
    q_av_mean: float | None = None
    fps: float | None = None
    runs: int = 1
    per_run: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["precision_curve"] = {str(int(k)): v for k, v in self.precision_curve.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def evaluate(pred, gt, q_av_mean=None, fps=None) -> EvalReport:
    auc = success_auc(pred, gt)
    return EvalReport(
        auc=auc,
        auc_trapezoid=success_auc_trapezoid(pred, gt),
        precision=precision_score(pred, gt),
        precision_curve=precision_at(pred, gt),
        success_at_05=success_rate_05(pred, gt),
        mean_iou=auc,
        frames=len(_as_boxes(pred)),
        q_av_mean=q_av_mean,
        fps=fps,
    )


def write_plot_data(directory, pred, gt) -> list[str]:
    """success.csv (tau,success_fraction) and precision.csv (pixels,precision_fraction)."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    success = os.path.join(directory, "success.csv")
    with open(success, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "success_fraction"])
        for tau, v in zip(OVERLAP_GRID, success_curve(pred, gt)):
            w.writerow([f"{tau:.2f}", repr(float(v))])
    paths.append(success)
    precision = os.path.join(directory, "precision.csv")
    with open(precision, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pixels", "precision_fraction"])
        for d, v in zip(PIXEL_THRESHOLDS, precision_curve(pred, gt)):
            w.writerow([int(d), repr(float(v))])
    paths.append(precision)
    return paths
