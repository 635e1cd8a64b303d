"""Question-answer generation from grounded quality descriptions.

Binary (Yes/No) and open-ended (What/Why/How) pairs are drafted by the
text completer, filtered by keyword overlap with the description's tagged
objects, and then given referring (box in question) or grounding (box in
answer) placement.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from . import grounded_text as gtx
from . import prompts
from .backends import TextCompleter
from .coords import GridBox, GridSpec
from .textnorm import content_tokens

KIND_BINARY = "Y"
KIND_OPEN = "W"
OPEN_SUBKINDS = ("What", "Why", "How")
MAX_ANSWER_WORDS = 8


@dataclass(frozen=True)
class TagBoxes:
    phrase: str
    boxes: tuple[GridBox, ...]


@dataclass(frozen=True)
class VqaSample:
    image: str
    question: str  # wire format, grid mode
    answer: str  # wire format, grid mode
    kind: str  # "Y" or "W"
    subkind: str  # Yes|No for Y; What|Why|How for W
    placement: str = "none"  # referring | grounding | none


def tags_from_answer(answer: gtx.GroundedText) -> list[TagBoxes]:
    """Tagged objects with their grid boxes, as carried by a description."""
    return [TagBoxes(seg.phrase, tuple(seg.boxes)) for seg in answer.grounded()]


def _parse_qa_lines(reply: str) -> list[tuple[str, str]]:
    pairs = []
    for line in reply.strip().splitlines():
        line = line.strip().lstrip("-*").strip()
        if "|" not in line:
            continue
        q, _, a = line.partition("|")
        q, a = q.strip(), a.strip()
        if q and a:
            pairs.append((q, a))
    return pairs


def gen_binary(
    description: str,
    tags: Sequence[TagBoxes],
    completer: TextCompleter,
    image: str = "",
) -> tuple[list[VqaSample], list[str]]:
    """Draft Yes/No pairs; answers other than exactly Yes/No are dropped."""
    if not description:
        raise ValueError("description must be nonempty")
    objects = ", ".join(t.phrase for t in tags)
    reply = completer.complete(prompts.binary_qa_prompt(description, objects))
    samples, warnings = [], []
    pairs = _parse_qa_lines(reply)
    if not pairs:
        warnings.append("binary QA completion yielded no pairs")
    for q, a in pairs:
        answer = a.capitalize()
        if answer not in ("Yes", "No"):
            warnings.append(f"dropped non-binary answer {a!r}")
            continue
        samples.append(VqaSample(image, q, answer, KIND_BINARY, answer))
    return samples, warnings


def gen_open(
    description: str,
    tags: Sequence[TagBoxes],
    completer: TextCompleter,
    image: str = "",
) -> tuple[list[VqaSample], list[str]]:
    """Draft What/Why/How pairs with short-phrase answers."""
    if not description:
        raise ValueError("description must be nonempty")
    objects = ", ".join(t.phrase for t in tags)
    reply = completer.complete(prompts.open_qa_prompt(description, objects))
    samples, warnings = [], []
    pairs = _parse_qa_lines(reply)
    if not pairs:
        warnings.append("open QA completion yielded no pairs")
    for q, a in pairs:
        first = q.split(maxsplit=1)[0].capitalize() if q.split() else ""
        if first not in OPEN_SUBKINDS:
            warnings.append(f"dropped question without What/Why/How lead: {q!r}")
            continue
        if len(a.split()) > MAX_ANSWER_WORDS:
            warnings.append(f"dropped over-long answer {a!r}")
            continue
        samples.append(VqaSample(image, q, a, KIND_OPEN, first))
    return samples, warnings


def _sample_tokens(sample: VqaSample) -> set[str]:
    return content_tokens(sample.question) | content_tokens(sample.answer)


def keyword_filter(sample: VqaSample, tags: Sequence[TagBoxes]) -> bool:
    """True iff the QA shares a content token with some tagged object."""
    toks = _sample_tokens(sample)
    return any(toks & content_tokens(t.phrase) for t in tags)


def _matched_tag(sample: VqaSample, tags: Sequence[TagBoxes]) -> Optional[TagBoxes]:
    toks = _sample_tokens(sample)
    for tag in tags:
        if toks & content_tokens(tag.phrase):
            return tag
    return None


def _mention_span(text: str, tag: TagBoxes) -> Optional[tuple[int, int]]:
    lower = text.lower()
    idx = lower.find(tag.phrase.lower())
    if idx >= 0:
        return idx, idx + len(tag.phrase)
    for tok in content_tokens(tag.phrase):
        idx = lower.find(tok)
        if idx >= 0:
            return idx, idx + len(tok)
    return None


def _insert_boxes(text: str, tag: TagBoxes) -> Optional[str]:
    span = _mention_span(text, tag)
    if span is None:
        return None
    gt = gtx.segments_from_spans(text, [(span[0], span[1], tag.boxes)])
    return gtx.serialize(gt, gtx.GRID)


def attach_boxes(
    sample: VqaSample, tags: Sequence[TagBoxes], seed: int
) -> VqaSample:
    """Give the sample referring or grounding box placement.

    A seeded coin picks the placement; binary samples always get
    referring placement since their answers must stay exactly Yes/No.
    Falls back to the other placement (then to none) when the preferred
    text carries no mention of the matched tag.
    """
    tag = _matched_tag(sample, tags)
    if tag is None or not tag.boxes:
        return sample
    if sample.kind == KIND_BINARY:
        prefer = "referring"
    else:
        prefer = "referring" if random.Random(seed).random() < 0.5 else "grounding"
    attempts = [prefer] if sample.kind == KIND_BINARY else [
        prefer,
        "grounding" if prefer == "referring" else "referring",
    ]
    for placement in attempts:
        if placement == "referring":
            new_q = _insert_boxes(sample.question, tag)
            if new_q is not None:
                return replace(sample, question=new_q, placement="referring")
        else:
            new_a = _insert_boxes(sample.answer, tag)
            if new_a is not None:
                return replace(sample, answer=new_a, placement="grounding")
    return sample


def generate(
    description: str,
    tags: Sequence[TagBoxes],
    completer: TextCompleter,
    image: str = "",
    seed: int = 0,
) -> tuple[list[VqaSample], list[str]]:
    """Full per-description generation: draft, filter, attach boxes."""
    binary, w1 = gen_binary(description, tags, completer, image)
    open_, w2 = gen_open(description, tags, completer, image)
    warnings = w1 + w2
    out = []
    for i, sample in enumerate(binary + open_):
        if not keyword_filter(sample, tags):
            warnings.append(f"keyword filter dropped {sample.question!r}")
            continue
        out.append(attach_boxes(sample, tags, seed ^ (0x9E3779B9 * (i + 1))))
    return out, warnings


def balance(pool: list[VqaSample], seed: int = 0) -> list[VqaSample]:
    """Downsample so binary and open counts match, and Yes matches No.

    Both equalities are exact; when the open count is odd it is trimmed
    by one so the binary half can split evenly. Selection is uniform at
    random; surviving samples keep their pool order.
    """
    rng = random.Random(seed)
    yes_idx = [i for i, s in enumerate(pool) if s.kind == KIND_BINARY and s.subkind == "Yes"]
    no_idx = [i for i, s in enumerate(pool) if s.kind == KIND_BINARY and s.subkind == "No"]
    w_idx = [i for i, s in enumerate(pool) if s.kind == KIND_OPEN]
    half = min(len(yes_idx), len(no_idx))
    total = min(2 * half, len(w_idx))
    if total % 2:
        total -= 1
    half = total // 2
    keep = set()
    keep.update(rng.sample(yes_idx, half))
    keep.update(rng.sample(no_idx, half))
    keep.update(rng.sample(w_idx, total))
    return [s for i, s in enumerate(pool) if i in keep]
