"""JSONL persistence and statistics for instruction-tuning samples."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

from . import grounded_text as gtx
from .coords import GridSpec

TASKS = ("DES", "VQA-Y", "VQA-W")

HIST_BINS = 20


class SchemaError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class AnnotatedSample:
    id: str
    image: str
    task: str  # DES | VQA-Y | VQA-W
    question: str  # wire format
    answer: str  # wire format
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")


@dataclass
class DatasetStats:
    images: int
    total: int
    per_task: dict
    yes: int
    no: int
    box_area_histogram: list[int]


def validate_sample(sample: AnnotatedSample, grid: GridSpec = GridSpec(), mode: str = gtx.GRID) -> None:
    """Strict-parse both text fields; VQA-Y answers must be plain Yes/No."""
    question = gtx.parse(sample.question, mode, grid, strict=True)
    answer = gtx.parse(sample.answer, mode, grid, strict=True)
    if sample.task == "VQA-Y" and gtx.plain_text(answer) not in ("Yes", "No"):
        raise ValueError("VQA-Y answer plain text must be exactly Yes or No")
    del question


def write_jsonl(
    samples: Iterable[AnnotatedSample],
    path: str,
    grid: GridSpec = GridSpec(),
    mode: str = gtx.GRID,
) -> int:
    """One JSON object per line, UTF-8; every sample is validated first."""
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for sample in samples:
            validate_sample(sample, grid, mode)
            f.write(
                json.dumps(
                    {
                        "id": sample.id,
                        "image": sample.image,
                        "task": sample.task,
                        "question": sample.question,
                        "answer": sample.answer,
                        "metadata": sample.metadata,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
            )
            f.write("\n")
            count += 1
    return count


REQUIRED_FIELDS = ("id", "image", "task", "question", "answer")


def read_jsonl(
    path: str, grid: GridSpec = GridSpec(), mode: str = gtx.GRID
) -> list[AnnotatedSample]:
    """Read and validate; schema violations report their line number."""
    samples: list[AnnotatedSample] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(lineno, f"invalid JSON: {e}")
            if not isinstance(obj, dict):
                raise SchemaError(lineno, "expected a JSON object")
            missing = [k for k in REQUIRED_FIELDS if k not in obj]
            if missing:
                raise SchemaError(lineno, f"missing fields: {', '.join(missing)}")
            try:
                sample = AnnotatedSample(
                    id=str(obj["id"]),
                    image=str(obj["image"]),
                    task=obj["task"],
                    question=obj["question"],
                    answer=obj["answer"],
                    metadata=obj.get("metadata", {}),
                )
                validate_sample(sample, grid, mode)
            except ValueError as e:
                raise SchemaError(lineno, str(e))
            samples.append(sample)
    return samples


def scan_jsonl(
    path: str, grid: GridSpec = GridSpec(), mode: str = gtx.GRID
) -> tuple[list[AnnotatedSample], list[tuple[int, str]]]:
    """Like read_jsonl, but collects every violation instead of raising."""
    samples: list[AnnotatedSample] = []
    errors: list[tuple[int, str]] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("expected a JSON object")
                missing = [k for k in REQUIRED_FIELDS if k not in obj]
                if missing:
                    raise ValueError(f"missing fields: {', '.join(missing)}")
                sample = AnnotatedSample(
                    id=str(obj["id"]),
                    image=str(obj["image"]),
                    task=obj["task"],
                    question=obj["question"],
                    answer=obj["answer"],
                    metadata=obj.get("metadata", {}),
                )
                validate_sample(sample, grid, mode)
            except (ValueError, json.JSONDecodeError) as e:
                errors.append((lineno, str(e)))
                continue
            samples.append(sample)
    return samples, errors


def stats(
    samples: Iterable[AnnotatedSample],
    grid: GridSpec = GridSpec(),
    mode: str = gtx.GRID,
) -> DatasetStats:
    """Counts plus a fixed 20-bin histogram of box areas.

    Areas come from the remapped normalized corners of every box in both
    question and answer fields.
    """
    per_task = {t: 0 for t in TASKS}
    images = set()
    yes = no = 0
    hist = [0] * HIST_BINS
    total = 0
    for sample in samples:
        total += 1
        per_task[sample.task] += 1
        images.add(sample.image)
        question = gtx.parse(sample.question, mode, grid, strict=True)
        answer = gtx.parse(sample.answer, mode, grid, strict=True)
        if sample.task == "VQA-Y":
            if gtx.plain_text(answer) == "Yes":
                yes += 1
            else:
                no += 1
        for gt in (question, answer):
            for _, box in gtx.extract_pairs(gt, grid):
                a = (box.x2 - box.x1) * (box.y2 - box.y1)
                hist[min(int(a * HIST_BINS), HIST_BINS - 1)] += 1
    return DatasetStats(
        images=len(images),
        total=total,
        per_task=per_task,
        yes=yes,
        no=no,
        box_area_histogram=hist,
    )
