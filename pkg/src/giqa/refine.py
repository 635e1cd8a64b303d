"""Box refinement: quality-filter candidate boxes, then merge small
touching or highly covered pairs into bounding unions."""
from __future__ import annotations

import io
from dataclasses import dataclass

from PIL import Image

from . import geometry
from .backends import BackendError, QualityVerifier, Verdict
from .coords import NormBox


class FilterBackendError(BackendError):
    """Verifier failure during filtering; carries the offending box index."""

    def __init__(self, box_index: int, cause: Exception):
        super().__init__(f"verifier failed on box {box_index}: {cause}")
        self.box_index = box_index


@dataclass
class RefineConfig:
    area_threshold: float = 0.256
    coverage_threshold: float = 0.95
    filter_min_candidates: int = 2

    def __post_init__(self):
        if not (0.0 < self.area_threshold <= 1.0):
            raise ValueError("area_threshold must be in (0, 1]")
        if not (0.0 < self.coverage_threshold <= 1.0):
            raise ValueError("coverage_threshold must be in (0, 1]")


def quality_question(quality: str) -> str:
    return f"Is the image quality {quality}?"


def crop_patch(image: Image.Image, box: NormBox) -> bytes:
    """Encode the box's pixel crop as PNG bytes (at least 1x1 px)."""
    w, h = image.size
    left = min(int(box.x1 * w), w - 1)
    top = min(int(box.y1 * h), h - 1)
    right = max(left + 1, min(round(box.x2 * w), w))
    bottom = max(top + 1, min(round(box.y2 * h), h))
    buf = io.BytesIO()
    image.crop((left, top, right, bottom)).save(buf, format="PNG")
    return buf.getvalue()


def iqa_filter(
    image: Image.Image,
    boxes: list[NormBox],
    quality: str,
    verifier: QualityVerifier,
    cfg: RefineConfig = RefineConfig(),
) -> list[NormBox]:
    """Drop boxes whose cropped patch gets a "No" to the quality question.

    Applies only when there are at least `filter_min_candidates` boxes.
    If every box would be dropped, the original list is kept so an object
    asserted by the description is never lost.
    """
    if len(boxes) < cfg.filter_min_candidates:
        return list(boxes)
    question = quality_question(quality)
    kept: list[NormBox] = []
    for i, box in enumerate(boxes):
        patch = crop_patch(image, box)
        try:
            verdict = verifier.verify_quality(patch, question)
        except BackendError as e:
            raise FilterBackendError(i, e) from e
        if verdict is not Verdict.NO:
            kept.append(box)
    if not kept:
        return list(boxes)
    return kept


def _merge_predicate(a: NormBox, b: NormBox, cfg: RefineConfig) -> bool:
    return (
        geometry.area(a) < cfg.area_threshold and geometry.is_touch(a, b)
    ) or geometry.coverage_ratio(a, b) > cfg.coverage_threshold


def box_merge_groups(
    boxes: list[NormBox], cfg: RefineConfig = RefineConfig()
) -> tuple[list[NormBox], list[list[int]]]:
    """Merge pass with provenance: returns (merged boxes, input-index groups).

    Each output box is the bounding union of its group; the groups
    partition the input indices and preserve first-occurrence order.
    The pairwise scan repeats until no pair satisfies the merge predicate,
    so the output is a fixpoint.
    """
    merged = list(boxes)
    groups = [[i] for i in range(len(boxes))]
    changed = True
    while changed:
        changed = False
        i = 0
        while i < len(merged):
            j = i + 1
            while j < len(merged):
                if _merge_predicate(merged[i], merged[j], cfg):
                    merged[i] = geometry.merge(merged[i], merged[j])
                    groups[i].extend(groups[j])
                    del merged[j]
                    del groups[j]
                    changed = True
                else:
                    j += 1
            i += 1
    return merged, groups


def box_merge(boxes: list[NormBox], cfg: RefineConfig = RefineConfig()) -> list[NormBox]:
    return box_merge_groups(boxes, cfg)[0]


def refine(
    image: Image.Image,
    boxes: list[NormBox],
    quality: str,
    verifier: QualityVerifier,
    cfg: RefineConfig = RefineConfig(),
) -> list[NormBox]:
    """Filter then merge, in that order."""
    return box_merge(iqa_filter(image, boxes, quality, verifier, cfg), cfg)
