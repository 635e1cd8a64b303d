"""Grounded image-quality annotation pipeline and benchmark toolkit."""

from .coords import GridBox, GridSpec, NormBox, discretize, remap
from .geometry import area, coverage_ratio, iou, is_touch, merge
from .refine import RefineConfig, box_merge, iqa_filter, refine

__all__ = [
    "GridBox",
    "GridSpec",
    "NormBox",
    "discretize",
    "remap",
    "area",
    "coverage_ratio",
    "iou",
    "is_touch",
    "merge",
    "RefineConfig",
    "box_merge",
    "iqa_filter",
    "refine",
]

__version__ = "0.1.0"
