"""Parse and serialize text interleaved with [phrase](box,...) segments.

Grammar:
    segment  := "[" phrase "]" "(" box ("," box)* ")"
    grid box := "<" int "," int ">"
    norm box := decimal "," decimal "," decimal "," decimal

Grid and norm boxes never mix within one document; the parse/serialize
mode selects which box syntax is expected. Text outside segments is
preserved verbatim. Phrases may not contain square brackets (no nesting).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Union

from .coords import BoxDomainError, GridBox, GridSpec, NormBox, remap

GRID = "grid"
NORM = "norm"

BoxRef = Union[GridBox, NormBox]


class ParseError(ValueError):
    def __init__(self, message: str, pos: int = -1):
        super().__init__(message if pos < 0 else f"{message} (at offset {pos})")
        self.pos = pos


class MalformedBox(ParseError):
    pass


class OutOfRange(ParseError):
    pass


class ModeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class GroundedSegment:
    phrase: str
    boxes: tuple[BoxRef, ...]

    def __post_init__(self):
        if not self.phrase:
            raise ValueError("segment phrase must be nonempty")
        if not self.boxes:
            raise ValueError("segment must carry at least one box")


Segment = Union[str, GroundedSegment]


@dataclass(frozen=True)
class GroundedText:
    segments: tuple[Segment, ...]
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def grounded(self) -> list[GroundedSegment]:
        return [s for s in self.segments if isinstance(s, GroundedSegment)]


_GRID_BOX_RE = re.compile(r"<\s*(\d+)\s*,\s*(\d+)\s*>")
_NUM_RE = re.compile(r"\d+(?:\.\d+)?|\.\d+")


def _parse_grid_payload(payload: str, grid: GridSpec, pos: int) -> tuple[GridBox, ...]:
    boxes: list[GridBox] = []
    rest = payload.strip()
    while rest:
        m = _GRID_BOX_RE.match(rest)
        if m is None:
            raise MalformedBox(f"bad grid box payload {payload!r}", pos)
        idx_l, idx_r = int(m.group(1)), int(m.group(2))
        gb = GridBox(idx_l, idx_r)
        try:
            gb.validate(grid)
        except BoxDomainError as e:
            raise OutOfRange(str(e), pos) from e
        boxes.append(gb)
        rest = rest[m.end():].lstrip()
        if rest:
            if not rest.startswith(","):
                raise MalformedBox(f"bad grid box payload {payload!r}", pos)
            rest = rest[1:].lstrip()
            if not rest:
                raise MalformedBox(f"trailing comma in {payload!r}", pos)
    if not boxes:
        raise MalformedBox("empty box payload", pos)
    return tuple(boxes)


def _parse_norm_payload(payload: str, pos: int) -> tuple[NormBox, ...]:
    parts = [p.strip() for p in payload.split(",")]
    values: list[float] = []
    for p in parts:
        if not _NUM_RE.fullmatch(p):
            raise MalformedBox(f"bad norm box payload {payload!r}", pos)
        values.append(float(p))
    if not values or len(values) % 4 != 0:
        raise MalformedBox(f"norm payload needs a multiple of 4 values, got {len(values)}", pos)
    boxes: list[NormBox] = []
    for i in range(0, len(values), 4):
        x1, y1, x2, y2 = values[i:i + 4]
        if not all(0.0 <= v <= 1.0 for v in (x1, y1, x2, y2)):
            raise OutOfRange(f"coordinate outside [0,1] in {payload!r}", pos)
        try:
            boxes.append(NormBox(x1, y1, x2, y2))
        except BoxDomainError as e:
            raise OutOfRange(str(e), pos) from e
    return tuple(boxes)


def parse(
    raw: str,
    mode: str = GRID,
    grid: GridSpec = GridSpec(),
    strict: bool = True,
) -> GroundedText:
    """Parse interleaved text into segments.

    Strict mode raises on any malformed segment (including a stray '[').
    Lenient mode never raises: malformed spans degrade to plain text,
    preserved verbatim, with a warning recorded per incident.
    """
    if mode not in (GRID, NORM):
        raise ValueError(f"unknown mode {mode!r}")
    segments: list[Segment] = []
    warnings: list[str] = []
    plain: list[str] = []

    def flush():
        text = "".join(plain)
        plain.clear()
        if text:
            segments.append(text)

    def fail(exc: ParseError, span: str):
        if strict:
            raise exc
        warnings.append(str(exc))
        plain.append(span)

    i = 0
    n = len(raw)
    while i < n:
        start = raw.find("[", i)
        if start < 0:
            plain.append(raw[i:])
            break
        plain.append(raw[i:start])
        close = raw.find("]", start + 1)
        if close < 0 or close == start + 1 or "[" in raw[start + 1:close]:
            fail(MalformedBox("unmatched or empty '[...]'", start), raw[start:start + 1])
            i = start + 1
            continue
        if close + 1 >= n or raw[close + 1] != "(":
            fail(MalformedBox("expected '(' after ']'", close), raw[start:close + 1])
            i = close + 1
            continue
        paren_close = raw.find(")", close + 2)
        if paren_close < 0:
            fail(MalformedBox("unclosed box group", close + 1), raw[start:])
            if strict:
                continue
            break
        phrase = raw[start + 1:close]
        payload = raw[close + 2:paren_close]
        try:
            if mode == GRID:
                boxes = _parse_grid_payload(payload, grid, close + 2)
            else:
                boxes = _parse_norm_payload(payload, close + 2)
        except ParseError as e:
            fail(e, raw[start:paren_close + 1])
            i = paren_close + 1
            continue
        flush()
        segments.append(GroundedSegment(phrase, boxes))
        i = paren_close + 1
    flush()
    return GroundedText(tuple(segments), tuple(warnings))


def _render_box(box: BoxRef, mode: str) -> str:
    if mode == GRID:
        if not isinstance(box, GridBox):
            raise ModeMismatch(f"grid mode cannot render {type(box).__name__}")
        return f"<{box.idx_l},{box.idx_r}>"
    if not isinstance(box, NormBox):
        raise ModeMismatch(f"norm mode cannot render {type(box).__name__}")
    return f"{box.x1:.2f},{box.y1:.2f},{box.x2:.2f},{box.y2:.2f}"


def serialize(gt: GroundedText, mode: str = GRID) -> str:
    """Render back to the wire grammar (norm coords at two decimal places)."""
    if mode not in (GRID, NORM):
        raise ValueError(f"unknown mode {mode!r}")
    out: list[str] = []
    for seg in gt.segments:
        if isinstance(seg, str):
            out.append(seg)
        else:
            payload = ",".join(_render_box(b, mode) for b in seg.boxes)
            out.append(f"[{seg.phrase}]({payload})")
    return "".join(out)


def strip_coordinates(gt: GroundedText) -> str:
    """Plain text with box groups removed and phrases kept in place."""
    parts: list[str] = []
    prev_grounded = False
    for seg in gt.segments:
        if isinstance(seg, str):
            parts.append(seg)
            prev_grounded = False
        else:
            if prev_grounded and parts and not parts[-1].endswith(" "):
                parts.append(" ")
            parts.append(seg.phrase)
            prev_grounded = True
    text = "".join(parts)
    return re.sub(r"  +", " ", text)


def extract_pairs(gt: GroundedText, grid: GridSpec = GridSpec()) -> list[tuple[str, NormBox]]:
    """All (phrase, box) pairs, with grid boxes remapped to cell-center corners."""
    pairs: list[tuple[str, NormBox]] = []
    for seg in gt.grounded():
        for box in seg.boxes:
            if isinstance(box, GridBox):
                pairs.append((seg.phrase, remap(box, grid)))
            else:
                pairs.append((seg.phrase, box))
    return pairs


def plain_text(gt: GroundedText) -> str:
    """Concatenation of rendered segments without any boxes or brackets,
    stripped; used e.g. to check Yes/No answers."""
    return strip_coordinates(gt).strip()


def from_plain(text: str) -> GroundedText:
    return GroundedText((text,) if text else ())


def segments_from_spans(
    text: str,
    spans: Iterable[tuple[int, int, tuple[BoxRef, ...]]],
) -> GroundedText:
    """Build a GroundedText from non-overlapping (start, end, boxes) spans."""
    ordered = sorted(spans, key=lambda s: s[0])
    segs: list[Segment] = []
    cursor = 0
    for start, end, boxes in ordered:
        if start < cursor:
            raise ValueError("overlapping spans")
        if start > cursor:
            segs.append(text[cursor:start])
        segs.append(GroundedSegment(text[start:end], tuple(boxes)))
        cursor = end
    if cursor < len(text):
        segs.append(text[cursor:])
    return GroundedText(tuple(segs))
