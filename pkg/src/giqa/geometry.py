"""Geometric predicates and combinators over normalized boxes."""
from __future__ import annotations

from .coords import NormBox

TOUCH_EPS = 1e-9


def area(b: NormBox) -> float:
    """Box area as a fraction of image area."""
    return (b.x2 - b.x1) * (b.y2 - b.y1)


def _intersection_area(a: NormBox, b: NormBox) -> float:
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def iou(a: NormBox, b: NormBox) -> float:
    """Intersection over union; 0 when the union has zero area."""
    inter = _intersection_area(a, b)
    union = area(a) + area(b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def coverage_ratio(a: NormBox, b: NormBox) -> float:
    """Intersection area over the smaller box's area; 0 if that area is 0."""
    smaller = min(area(a), area(b))
    if smaller <= 0.0:
        return 0.0
    return _intersection_area(a, b) / smaller


def is_touch(a: NormBox, b: NormBox) -> bool:
    """True iff the closed boxes overlap or share boundary (eps-tolerant)."""
    return (
        a.x1 <= b.x2 + TOUCH_EPS
        and b.x1 <= a.x2 + TOUCH_EPS
        and a.y1 <= b.y2 + TOUCH_EPS
        and b.y1 <= a.y2 + TOUCH_EPS
    )


def merge(a: NormBox, b: NormBox) -> NormBox:
    """Smallest axis-aligned box containing both inputs."""
    return NormBox(
        min(a.x1, b.x1),
        min(a.y1, b.y1),
        max(a.x2, b.x2),
        max(a.y2, b.y2),
    )
