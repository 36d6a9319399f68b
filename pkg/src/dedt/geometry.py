"""Boxes, transformations, candidate sampling and overlap."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LOG_SCALE_MIN = math.log(0.5)
LOG_SCALE_MAX = math.log(2.0)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel coordinates: left, top, width, height."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box {vals}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box needs positive extent, got w={self.w}, h={self.h}")

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.w / 2.0, self.y + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "BoundingBox":
        x, y, w, h = (float(v) for v in arr)
        return cls(x, y, w, h)


@dataclass(frozen=True)
class Transformation:
    dx: float = 0.0
    dy: float = 0.0
    ds: float = 0.0  # log-scale

    def negate(self) -> "Transformation":
        return Transformation(-self.dx, -self.dy, -self.ds)


@dataclass(frozen=True)
class SearchDistribution:
    sigma_xy: float
    sigma_s: float

    def __post_init__(self):
        if self.sigma_xy < 0 or self.sigma_s < 0:
            raise ValueError("search deviations must be non-negative")

    @classmethod
    def around(cls, box: BoundingBox, ratio: float = 0.25, sigma_s: float = 0.05):
        """Translation spread proportional to the larger side of ``box``."""
        return cls(ratio * max(box.w, box.h), sigma_s)


def apply(box: BoundingBox, t: Transformation) -> BoundingBox:
    cx, cy = box.center
    scale = math.exp(t.ds)
    w, h = box.w * scale, box.h * scale
    return BoundingBox(cx + t.dx - w / 2.0, cy + t.dy - h / 2.0, w, h)


def apply_many(box: BoundingBox, transforms: np.ndarray) -> np.ndarray:
    """Vectorised :func:`apply`; ``transforms`` is (n, 3) of (dx, dy, ds)."""
    transforms = np.atleast_2d(transforms)
    cx, cy = box.center
    scale = np.exp(transforms[:, 2])
    w = box.w * scale
    h = box.h * scale
    return np.column_stack(
        [cx + transforms[:, 0] - w / 2.0, cy + transforms[:, 1] - h / 2.0, w, h]
    )


def sample_transforms(n: int, dist: SearchDistribution, rng: np.random.Generator) -> np.ndarray:
    """Draw n transformations; row 0 is always the identity."""
    if n < 1:
        raise ValueError("need at least one candidate")
    out = np.zeros((n, 3))
    if n > 1:
        out[1:, :2] = rng.normal(0.0, 1.0, size=(n - 1, 2)) * dist.sigma_xy
        out[1:, 2] = rng.normal(0.0, 1.0, size=n - 1) * dist.sigma_s
    out[:, 2] = np.clip(out[:, 2], LOG_SCALE_MIN, LOG_SCALE_MAX)
    return out


def sample_candidates(prev: BoundingBox, n: int, dist: SearchDistribution,
                      rng: np.random.Generator) -> list[tuple[Transformation, BoundingBox]]:
    transforms = sample_transforms(n, dist, rng)
    boxes = apply_many(prev, transforms)
    return [
        (Transformation(*map(float, t)), BoundingBox.from_array(b))
        for t, b in zip(transforms, boxes)
    ]


def iou(a: BoundingBox, b: BoundingBox) -> float:
    # clamping to the smaller side keeps rounding from pushing iou(a, a) past 1
    ix = min(max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x)), a.w, b.w)
    iy = min(max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y)), a.h, b.h)
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def iou_many(boxes: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """IoU between rows of ``boxes`` and ``ref`` (one box or matching rows)."""
    boxes = np.atleast_2d(boxes)
    ref = np.atleast_2d(ref)
    ix = np.minimum(boxes[:, 0] + boxes[:, 2], ref[:, 0] + ref[:, 2]) - np.maximum(boxes[:, 0], ref[:, 0])
    iy = np.minimum(boxes[:, 1] + boxes[:, 3], ref[:, 1] + ref[:, 3]) - np.maximum(boxes[:, 1], ref[:, 1])
    ix = np.clip(ix, 0.0, np.minimum(boxes[:, 2], ref[:, 2]))
    iy = np.clip(iy, 0.0, np.minimum(boxes[:, 3], ref[:, 3]))
    inter = ix * iy
    union = boxes[:, 2] * boxes[:, 3] + ref[:, 2] * ref[:, 3] - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def center_distance(boxes: np.ndarray, ref: np.ndarray) -> np.ndarray:
    boxes = np.atleast_2d(boxes)
    ref = np.atleast_2d(ref)
    dx = (boxes[:, 0] + boxes[:, 2] / 2.0) - (ref[:, 0] + ref[:, 2] / 2.0)
    dy = (boxes[:, 1] + boxes[:, 3] / 2.0) - (ref[:, 1] + ref[:, 3] / 2.0)
    return np.hypot(dx, dy)
