"""Rotated bounding boxes on the normalized [0, 100] image frame.

A box is an axis-aligned rectangle plus a rotation ``theta`` in degrees,
counter-clockwise about the rectangle center, constrained to (-180, 180].
IoU between rotated boxes is exact: convex polygon clipping, not an
axis-aligned approximation.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidCount, InvalidThresholds

FRAME = 100.0

# Pixel-space size cutoffs (32 px and 96 px at 448), rescaled to the [0, 100]
# frame and squared into areas.
SMALL_MAX_AREA = (32.0 * FRAME / 448.0) ** 2
MEDIUM_MAX_AREA = (96.0 * FRAME / 448.0) ** 2
DEFAULT_SIZE_THRESHOLDS = (SMALL_MAX_AREA, MEDIUM_MAX_AREA)

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)"
_BOX_RE = re.compile(
    rf"\[\s*({_NUM})\s*,\s*({_NUM})\s*,\s*({_NUM})\s*,\s*({_NUM})"
    rf"(?:\s*,\s*({_NUM}))?\s*\]"
)


def wrap_angle(theta: float) -> float:
    """Wrap an angle in degrees into (-180, 180]."""

    wrapped = ((theta + 180.0) % 360.0) - 180.0
    return 180.0 if wrapped == -180.0 else wrapped


@dataclass(frozen=True)
class RotatedBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        for v in (self.x_min, self.y_min, self.x_max, self.y_max, self.theta):
            if not math.isfinite(v):
                raise ValueError("box coordinates must be finite")
        if not (0.0 <= self.x_min <= self.x_max <= FRAME):
            raise ValueError(f"need 0 <= x_min <= x_max <= {FRAME:g}, got {self}")
        if not (0.0 <= self.y_min <= self.y_max <= FRAME):
            raise ValueError(f"need 0 <= y_min <= y_max <= {FRAME:g}, got {self}")
        if not (-180.0 < self.theta <= 180.0):
            raise ValueError(f"theta must be in (-180, 180], got {self.theta}")

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)


def area(box: RotatedBox) -> float:
    """Rectangle area; rotation does not change it."""

    return (box.x_max - box.x_min) * (box.y_max - box.y_min)


def corners(box: RotatedBox) -> np.ndarray:
    """Corner coordinates (4, 2), CCW-rotated by theta about the center.

    Order before rotation: (x_min, y_min), (x_max, y_min), (x_max, y_max),
    (x_min, y_max).
    """

    cx, cy = box.center
    pts = np.array(
        [
            [box.x_min, box.y_min],
            [box.x_max, box.y_min],
            [box.x_max, box.y_max],
            [box.x_min, box.y_max],
        ],
        dtype=np.float64,
    )
    t = math.radians(box.theta)
    rot = np.array(
        [[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]], dtype=np.float64
    )
    return (pts - (cx, cy)) @ rot.T + (cx, cy)


def rotated_iou(a: RotatedBox, b: RotatedBox) -> float:
    """Exact IoU of two rotated boxes. Degenerate (zero-area) boxes give 0."""

    area_a = area(a)
    area_b = area(b)
    if area_a == 0.0 or area_b == 0.0:
        return 0.0
    if a == b:  # clipping a quad against itself can shave slivers
        return 1.0
    inter = _kernels.quad_intersection_area(corners(a), corners(b))
    inter = min(inter, area_a, area_b)
    return inter / (area_a + area_b - inter)


def parse_boxes(text: str) -> list[RotatedBox]:
    """Extract every bracketed 4- or 5-number tuple as a box.

    Four numbers mean theta=0. Swapped corners are normalized by swapping;
    theta is wrapped into (-180, 180]. Tuples with coordinates outside
    [0, 100] are skipped; unparseable text yields an empty list.
    """

    boxes = []
    for m in _BOX_RE.finditer(text):
        x1, y1, x2, y2 = (float(m.group(i)) for i in range(1, 5))
        theta = wrap_angle(float(m.group(5))) if m.group(5) is not None else 0.0
        if x1 > x2:
            x1, x2 = x2, x1
        if y1 > y2:
            y1, y2 = y2, y1
        if not (0.0 <= x1 and x2 <= FRAME and 0.0 <= y1 and y2 <= FRAME):
            continue
        boxes.append(RotatedBox(x1, y1, x2, y2, theta))
    return boxes


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else f"{v:.2f}"


def render_box(box: RotatedBox) -> str:
    """Inverse of parse_boxes for a single box: "[x1, y1, x2, y2, theta]"."""

    return (
        f"[{_fmt(box.x_min)}, {_fmt(box.y_min)}, "
        f"{_fmt(box.x_max)}, {_fmt(box.y_max)}, {_fmt(box.theta)}]"
    )


def render_boxes(boxes: list[RotatedBox]) -> str:
    return ", ".join(render_box(b) for b in boxes)


def size_class(
    box: RotatedBox, thresholds: tuple[float, float] = DEFAULT_SIZE_THRESHOLDS
) -> str:
    """"small" | "medium" | "large" by area; boundary values round upward."""

    small_max, medium_max = thresholds
    if not (0.0 < small_max < medium_max):
        raise InvalidThresholds(f"thresholds must increase from > 0, got {thresholds}")
    a = area(box)
    if a < small_max:
        return "small"
    if a < medium_max:
        return "medium"
    return "large"


def count_class(n: int) -> str:
    """"single" for exactly one object, "multiple" otherwise."""

    if n <= 0:
        raise InvalidCount(f"object count must be positive, got {n}")
    return "single" if n == 1 else "multiple"
