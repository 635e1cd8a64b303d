"""Annotation pipeline for grounded quality descriptions.

Four stages per record: extract object tags from the human description,
detect boxes for each tag's phrase, refine them (quality filter + merge),
then fuse the surviving boxes into the description as interleaved
[phrase](<idx_l,idx_r>) segments.
"""
from __future__ import annotations

import hashlib
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from PIL import Image, UnidentifiedImageError

from . import grounded_text as gtx
from . import prompts
from .backends import BackendError, Detector, QualityVerifier, ScoreJudge, TextCompleter
from .coords import GridSpec, NormBox, discretize
from .geometry import area
from .refine import RefineConfig, refine
from .textnorm import tokenize

WHOLE_IMAGE_REFERENTS = frozenset({"image", "photo", "picture", "background"})

EFFECT_VALUES = ("no-impact", "positive", "negative")


class StageError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass(frozen=True)
class ObjectTag:
    phrase: str
    quality: str
    effect: str

    def __post_init__(self):
        if not self.phrase:
            raise ValueError("tag phrase must be nonempty")
        if self.effect not in EFFECT_VALUES:
            raise ValueError(f"effect must be one of {EFFECT_VALUES}, got {self.effect!r}")

    @property
    def head_noun(self) -> str:
        toks = tokenize(self.phrase)
        return toks[-1] if toks else self.phrase


@dataclass(frozen=True)
class SourceRecord:
    image: str
    description: str
    source: str = ""

    def __post_init__(self):
        if not self.description:
            raise ValueError("description must be nonempty")


@dataclass(frozen=True)
class DesSample:
    image: str
    question: str
    answer: str  # wire format, grid mode
    task: str = "DES"


@dataclass
class Backends:
    completer: TextCompleter
    detector: Detector
    verifier: QualityVerifier
    judge: Optional[ScoreJudge] = None


@dataclass
class PipelineConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    refine: RefineConfig = field(default_factory=RefineConfig)
    seed: int = 0
    max_boxes_per_object: int = 4


@dataclass
class RecordFailure:
    record: SourceRecord
    stage: str
    error: str


def _normalize_effect(raw: str) -> Optional[str]:
    value = raw.strip().lower().replace(" ", "-").replace("_", "-")
    return value if value in EFFECT_VALUES else None


def _parse_tag_lines(reply: str) -> Optional[list[ObjectTag]]:
    """Parse `phrase | quality | effect` lines; None means unparseable."""
    stripped = reply.strip()
    if stripped.lower() == "none":
        return []
    tags: list[ObjectTag] = []
    for line in stripped.splitlines():
        line = line.strip().lstrip("-*").strip()
        if not line or "|" not in line:
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) != 3 or not parts[0]:
            continue
        effect = _normalize_effect(parts[2])
        if effect is None:
            continue
        tags.append(ObjectTag(parts[0], parts[1], effect))
    if not tags:
        return None
    return tags


def extract_tags(description: str, completer: TextCompleter) -> list[ObjectTag]:
    """Stage 1: pull (phrase, quality, effect) tags out of the description.

    No-impact tags and whole-image referents are dropped. One retry on an
    unparseable completion, then a stage error.
    """
    if not description:
        raise ValueError("description must be nonempty")
    prompt = prompts.tag_extraction_prompt(description)
    tags: Optional[list[ObjectTag]] = None
    for _ in range(2):
        tags = _parse_tag_lines(completer.complete(prompt))
        if tags is not None:
            break
    if tags is None:
        raise StageError("extract_tags", "unparseable tag completion after retry")
    kept = []
    for tag in tags:
        if tag.effect == "no-impact":
            continue
        if tag.phrase.strip().lower() in WHOLE_IMAGE_REFERENTS:
            continue
        kept.append(tag)
    return kept


def locate(
    image: Image.Image,
    image_bytes: bytes,
    tag: ObjectTag,
    detector: Detector,
    verifier: QualityVerifier,
    cfg: RefineConfig = RefineConfig(),
) -> list[NormBox]:
    """Stages 2-3: detect boxes for the tag's phrase, then refine them."""
    detections = detector.detect(image_bytes, tag.phrase)
    boxes = [d.box for d in detections]
    if not boxes:
        return []
    return refine(image, boxes, tag.quality, verifier, cfg)


def _find_mention(description: str, tag: ObjectTag) -> Optional[tuple[int, int]]:
    lower = description.lower()
    idx = lower.find(tag.phrase.lower())
    if idx >= 0:
        return idx, idx + len(tag.phrase)
    m = re.search(r"\b" + re.escape(tag.head_noun.lower()) + r"\b", lower)
    if m:
        return m.start(), m.end()
    return None


def _cap_boxes(boxes: list[NormBox], cap: int) -> list[NormBox]:
    if len(boxes) <= cap:
        return boxes
    keep = set()
    for i in sorted(range(len(boxes)), key=lambda i: -area(boxes[i]))[:cap]:
        keep.add(i)
    return [b for i, b in enumerate(boxes) if i in keep]


def build_answer(
    description: str,
    located: list[tuple[ObjectTag, list[NormBox]]],
    grid: GridSpec = GridSpec(),
    max_boxes_per_object: int = 4,
) -> tuple[gtx.GroundedText, list[str]]:
    """Stage 4: attach each tag's boxes at the first mention of its phrase.

    Longer phrases claim their span first; overlapping shorter mentions
    and unfound mentions are skipped with a warning. Tags without boxes
    leave the text untouched.
    """
    warnings: list[str] = []
    claims: list[tuple[int, int, tuple]] = []
    order = sorted(
        range(len(located)), key=lambda i: -len(located[i][0].phrase)
    )
    for i in order:
        tag, boxes = located[i]
        if not boxes:
            continue
        span = _find_mention(description, tag)
        if span is None:
            warnings.append(f"mention not found for {tag.phrase!r}")
            continue
        start, end = span
        if any(start < c_end and c_start < end for c_start, c_end, _ in claims):
            warnings.append(f"mention overlap, skipped {tag.phrase!r}")
            continue
        capped = _cap_boxes(boxes, max_boxes_per_object)
        grid_boxes = tuple(discretize(b, grid) for b in capped)
        claims.append((start, end, grid_boxes))
    return gtx.segments_from_spans(description, claims), warnings


def record_seed(base_seed: int, record: SourceRecord) -> int:
    digest = hashlib.sha256(
        f"{record.image}\x00{record.description}".encode("utf-8")
    ).digest()
    return base_seed ^ int.from_bytes(digest[:8], "big")


def sample_question(seed: int) -> str:
    return random.Random(seed).choice(prompts.QUESTION_POOL)


def annotate(
    record: SourceRecord, backends: Backends, cfg: PipelineConfig = PipelineConfig()
) -> DesSample:
    """Run all four stages on one record; deterministic under mocks."""
    try:
        with open(record.image, "rb") as f:
            image_bytes = f.read()
        image = Image.open(record.image)
        image.load()
    except (OSError, UnidentifiedImageError) as e:
        raise StageError("load_image", str(e))

    tags = extract_tags(record.description, backends.completer)
    located = [
        (
            tag,
            locate(image, image_bytes, tag, backends.detector, backends.verifier, cfg.refine),
        )
        for tag in tags
    ]
    answer, _ = build_answer(
        record.description, located, cfg.grid, cfg.max_boxes_per_object
    )
    wire = gtx.serialize(answer, gtx.GRID)
    # re-parse to guarantee the stored sample is strict-valid
    gtx.parse(wire, gtx.GRID, cfg.grid, strict=True)
    question = sample_question(record_seed(cfg.seed, record))
    return DesSample(image=record.image, question=question, answer=wire)


def annotate_all(
    records: list[SourceRecord],
    backends: Backends,
    cfg: PipelineConfig = PipelineConfig(),
    workers: int = 1,
) -> tuple[list[Optional[DesSample]], list[RecordFailure]]:
    """Annotate records with a bounded pool; outputs stay in input order.

    Failed records yield None in the samples list and an entry in the
    failure list; the batch always runs to completion.
    """

    def run(record: SourceRecord):
        try:
            return annotate(record, backends, cfg), None
        except (StageError, BackendError, ValueError) as e:
            stage = e.stage if isinstance(e, StageError) else "backend"
            return None, RecordFailure(record, stage, str(e))

    if workers <= 1:
        results = [run(r) for r in records]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, records))
    samples = [s for s, _ in results]
    failures = [f for _, f in results if f is not None]
    return samples, failures
