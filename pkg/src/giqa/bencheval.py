"""Benchmark loading and evaluation: description quality (BLEU@4 and a
judge score), VQA accuracy, and grounding precision (mIoU, tag recall)."""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from . import grounded_text as gtx
from . import prompts
from .backends import ScoreJudge, UnparseableScore, parse_yes_no, Verdict
from .coords import GridSpec, NormBox
from .geometry import iou
from .textnorm import token_jaccard, tokenize

NAME_SIM_THRESHOLD = 0.5
IOU_THRESHOLD = 0.5


# ---------------------------------------------------------------------------
# Metrics


def bleu4(candidate: str, reference: str) -> float:
    """BLEU@4 in [0, 100]: geometric mean of modified 1-4-gram precisions
    times the brevity penalty.

    Tokenization lowercases and splits on whitespace/punctuation. When any
    clipped match count is zero, add-one smoothing applies to the n>=2
    precisions (unigram precision stays exact, so disjoint texts score 0).
    """
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand:
        return 0.0
    matched = []
    totals = []
    for n in range(1, 5):
        cand_ngrams = Counter(tuple(cand[i:i + n]) for i in range(len(cand) - n + 1))
        ref_ngrams = Counter(tuple(ref[i:i + n]) for i in range(len(ref) - n + 1))
        matched.append(sum(min(c, ref_ngrams[g]) for g, c in cand_ngrams.items()))
        totals.append(max(len(cand) - n + 1, 0))
    smooth = any(m == 0 for m in matched)
    log_sum = 0.0
    for n in range(4):
        m, t = matched[n], totals[n]
        if smooth and n >= 1:
            m, t = m + 1, t + 1
        if m == 0 or t == 0:
            return 0.0
        log_sum += math.log(m / t)
    bp = 1.0 if len(cand) > len(ref) else math.exp(1.0 - len(ref) / len(cand))
    return 100.0 * bp * math.exp(log_sum / 4.0)


def llm_score(candidate: str, reference: str, judge: ScoreJudge) -> float:
    """Judge rubric score 0..4 rescaled to 0..100."""
    return judge.judge_score(prompts.description_judge_prompt(candidate, reference)) * 25.0


def acc_yes_no(response: str, gt: str) -> int:
    """1 iff the first standalone yes/no word in the response matches."""
    verdict = parse_yes_no(response)
    if verdict is Verdict.UNPARSEABLE:
        return 0
    return int(verdict.value == gt)


def acc_open(question: str, response: str, gt: str, judge: ScoreJudge) -> float:
    """Judge rubric score 0..4 normalized to 0..1."""
    return judge.judge_score(
        prompts.open_answer_judge_prompt(question, response, gt)
    ) / 4.0


def acc_total(acc_y: float, n_y: int, acc_w: float, n_w: int) -> float:
    """Sample-weighted mean of the two accuracy classes."""
    if n_y + n_w <= 0:
        raise ValueError("n_y + n_w must be positive")
    return (n_y * acc_y + n_w * acc_w) / (n_y + n_w)


def _greedy_matches(
    pred_n: int,
    gt_n: int,
    pair_iou,
    eligible,
) -> list[tuple[int, int, float]]:
    """One-to-one greedy matching by descending IoU; ties break on lower
    gt index, then lower pred index."""
    candidates = []
    for g in range(gt_n):
        for p in range(pred_n):
            v = pair_iou(p, g)
            if eligible(p, g, v):
                candidates.append((v, g, p))
    candidates.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_g: set[int] = set()
    used_p: set[int] = set()
    matches = []
    for v, g, p in candidates:
        if g in used_g or p in used_p:
            continue
        used_g.add(g)
        used_p.add(p)
        matches.append((g, p, v))
    return matches


def miou(pred: Sequence[NormBox], gt: Sequence[NormBox]) -> Optional[float]:
    """Mean matched IoU over ground-truth boxes; unmatched ground truth
    counts 0. Returns 0 for predictions against empty ground truth, and
    None (item skipped) when both sides are empty."""
    if not gt:
        return 0.0 if pred else None
    ious = {(p, g): iou(pred[p], gt[g]) for p in range(len(pred)) for g in range(len(gt))}
    matches = _greedy_matches(
        len(pred), len(gt), lambda p, g: ious[(p, g)], lambda p, g, v: v > 0.0
    )
    return sum(v for _, _, v in matches) / len(gt)


def tag_recall(
    pred: Sequence[tuple[str, NormBox]], gt: Sequence[tuple[str, NormBox]]
) -> Optional[float]:
    """Fraction of ground-truth tags matched by a prediction with IoU and
    name similarity both strictly above 0.5. Name similarity is the token
    Jaccard of the normalized phrases."""
    if not gt:
        return 0.0 if pred else None
    ious = {
        (p, g): iou(pred[p][1], gt[g][1])
        for p in range(len(pred))
        for g in range(len(gt))
    }
    sims = {
        (p, g): token_jaccard(pred[p][0], gt[g][0])
        for p in range(len(pred))
        for g in range(len(gt))
    }
    matches = _greedy_matches(
        len(pred),
        len(gt),
        lambda p, g: ious[(p, g)],
        lambda p, g, v: v > IOU_THRESHOLD and sims[(p, g)] > NAME_SIM_THRESHOLD,
    )
    return len(matches) / len(gt)


# ---------------------------------------------------------------------------
# Benchmark data


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class BenchItem:
    id: str
    image: str
    task: str  # DES | VQA-Y | VQA-W
    subkind: str
    question: str
    gt_answer: str
    gt_pairs: tuple[tuple[str, NormBox], ...]


@dataclass(frozen=True)
class BenchManifest:
    des: int
    yes: int
    no: int
    what: int
    why: int
    how: int

    @classmethod
    def reference_scale(cls) -> "BenchManifest":
        """The full benchmark composition: 100 descriptions, 90 binary and
        60 open questions with fixed subkind splits."""
        return cls(des=100, yes=35, no=55, what=30, why=18, how=12)

    @classmethod
    def from_dict(cls, d: Mapping) -> "BenchManifest":
        return cls(
            des=int(d["DES"]),
            yes=int(d["VQA-Y"]["Yes"]),
            no=int(d["VQA-Y"]["No"]),
            what=int(d["VQA-W"]["What"]),
            why=int(d["VQA-W"]["Why"]),
            how=int(d["VQA-W"]["How"]),
        )

    def to_dict(self) -> dict:
        return {
            "DES": self.des,
            "VQA-Y": {"Yes": self.yes, "No": self.no},
            "VQA-W": {"What": self.what, "Why": self.why, "How": self.how},
        }


def check_manifest(manifest: BenchManifest, items: Sequence[BenchItem]) -> None:
    counts = Counter((it.task, it.subkind if it.task != "DES" else "") for it in items)
    expected = {
        ("DES", ""): manifest.des,
        ("VQA-Y", "Yes"): manifest.yes,
        ("VQA-Y", "No"): manifest.no,
        ("VQA-W", "What"): manifest.what,
        ("VQA-W", "Why"): manifest.why,
        ("VQA-W", "How"): manifest.how,
    }
    problems = []
    for key, want in expected.items():
        got = counts.pop(key, 0)
        if got != want:
            label = key[0] if not key[1] else f"{key[0]}/{key[1]}"
            problems.append(f"{label}: declared {want}, found {got}")
    for key, got in counts.items():
        problems.append(f"unexpected {key[0]}/{key[1]}: {got} items")
    if problems:
        raise ManifestError("manifest count mismatch: " + "; ".join(problems))


def load_bench(
    path: str, grid: GridSpec = GridSpec(), mode: str = gtx.GRID
) -> tuple[BenchManifest, list[BenchItem]]:
    """Read a benchmark file: a manifest header line, then one item per
    line. Actual counts must match the declared manifest."""
    items: list[BenchItem] = []
    manifest: Optional[BenchManifest] = None
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if manifest is None:
                if "manifest" not in obj:
                    raise ManifestError("first line must carry the manifest")
                manifest = BenchManifest.from_dict(obj["manifest"])
                continue
            answer_gt = gtx.parse(obj["answer"], mode, grid, strict=True)
            items.append(
                BenchItem(
                    id=str(obj["id"]),
                    image=str(obj.get("image", "")),
                    task=obj["task"],
                    subkind=obj.get("subkind", ""),
                    question=obj["question"],
                    gt_answer=obj["answer"],
                    gt_pairs=tuple(gtx.extract_pairs(answer_gt, grid)),
                )
            )
    if manifest is None:
        raise ManifestError("empty bench file")
    check_manifest(manifest, items)
    return manifest, items


def load_responses(path: str) -> dict[str, str]:
    responses: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                obj = json.loads(line)
                responses[str(obj["id"])] = obj["response"]
    return responses


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class EvalReport:
    bleu4: Optional[float]
    llm_score: Optional[float]
    acc_y: Optional[float]
    acc_w: Optional[float]
    acc_total: Optional[float]
    miou: Optional[float]
    tag_recall: Optional[float]
    n_des: int
    n_y: int
    n_w: int
    judge_failures: list[str] = field(default_factory=list)
    judge_backed: bool = False
    per_item: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "bleu4": self.bleu4,
            "llm_score": self.llm_score,
            "acc_y": self.acc_y,
            "acc_w": self.acc_w,
            "acc_total": self.acc_total,
            "miou": self.miou,
            "tag_recall": self.tag_recall,
            "counts": {"DES": self.n_des, "VQA-Y": self.n_y, "VQA-W": self.n_w},
            "judge_failures": self.judge_failures,
            "judge_backed": self.judge_backed,
            "per_item": self.per_item,
        }


def _mean(values: list[float]) -> Optional[float]:
    return sum(values) / len(values) if values else None


def evaluate(
    items: Sequence[BenchItem],
    responses: Mapping[str, str],
    judge: Optional[ScoreJudge] = None,
    grid: GridSpec = GridSpec(),
    mode: str = gtx.GRID,
) -> EvalReport:
    """Score every item; missing responses evaluate as empty text.

    Responses are parsed leniently. Grounding metrics run on items whose
    ground truth carries boxes; discrete boxes are remapped to normalized
    corners before IoU. Judge failures exclude that item from the judge-
    backed metric and are reported.
    """
    bleu_scores: list[float] = []
    llm_scores: list[float] = []
    y_scores: list[float] = []
    w_scores: list[float] = []
    miou_scores: list[float] = []
    recall_scores: list[float] = []
    judge_failures: list[str] = []
    per_item: list[dict] = []

    for item in items:
        raw = responses.get(item.id, "")
        parsed = gtx.parse(raw, mode, grid, strict=False)
        plain = gtx.plain_text(parsed)
        diag: dict = {"id": item.id, "task": item.task}

        if item.task == "DES":
            ref_plain = gtx.plain_text(gtx.parse(item.gt_answer, mode, grid, strict=True))
            b = bleu4(plain, ref_plain)
            bleu_scores.append(b)
            diag["bleu4"] = b
            if judge is not None:
                try:
                    s = llm_score(plain, ref_plain, judge)
                    llm_scores.append(s)
                    diag["llm_score"] = s
                except UnparseableScore as e:
                    judge_failures.append(f"{item.id}: {e}")
        elif item.task == "VQA-Y":
            gt_word = gtx.plain_text(gtx.parse(item.gt_answer, mode, grid, strict=True))
            a = acc_yes_no(raw, gt_word)
            y_scores.append(a)
            diag["acc"] = a
        elif item.task == "VQA-W":
            if judge is not None:
                question_plain = gtx.plain_text(gtx.parse(item.question, mode, grid, strict=False))
                ref_plain = gtx.plain_text(gtx.parse(item.gt_answer, mode, grid, strict=True))
                try:
                    a = acc_open(question_plain, plain, ref_plain, judge)
                    w_scores.append(a)
                    diag["acc"] = a
                except UnparseableScore as e:
                    judge_failures.append(f"{item.id}: {e}")
        else:
            raise ValueError(f"unknown task {item.task!r} for item {item.id}")

        if item.gt_pairs:
            pred_pairs = gtx.extract_pairs(parsed, grid)
            m = miou([p for _, p in pred_pairs], [b for _, b in item.gt_pairs])
            r = tag_recall(pred_pairs, item.gt_pairs)
            if m is not None:
                miou_scores.append(m)
                diag["miou"] = m
            if r is not None:
                recall_scores.append(r)
                diag["tag_recall"] = r
        per_item.append(diag)

    acc_y = _mean(y_scores)
    acc_w = _mean(w_scores)
    total = None
    if acc_y is not None or acc_w is not None:
        total = acc_total(acc_y or 0.0, len(y_scores), acc_w or 0.0, len(w_scores))
    return EvalReport(
        bleu4=_mean(bleu_scores),
        llm_score=_mean(llm_scores),
        acc_y=acc_y,
        acc_w=acc_w,
        acc_total=total,
        miou=_mean(miou_scores),
        tag_recall=_mean(recall_scores),
        n_des=sum(1 for it in items if it.task == "DES"),
        n_y=sum(1 for it in items if it.task == "VQA-Y"),
        n_w=sum(1 for it in items if it.task == "VQA-W"),
        judge_failures=judge_failures,
        judge_backed=judge is not None,
        per_item=per_item,
    )


def format_report(report: EvalReport) -> str:
    """Human-readable metric table."""

    def fmt(v, scale_2=False):
        if v is None:
            return "N/A"
        return f"{v:.2f}" if scale_2 else f"{v:.4f}"

    lines = [
        "metric       value",
        "-----------  ------",
        f"BLEU@4       {fmt(report.bleu4, True)}",
        f"LLM-Score    {fmt(report.llm_score, True)}",
        f"Acc (Y)      {fmt(report.acc_y)}",
        f"Acc (W)      {fmt(report.acc_w)}",
        f"Acc (Total)  {fmt(report.acc_total)}",
        f"mIoU         {fmt(report.miou)}",
        f"Tag-Recall   {fmt(report.tag_recall)}",
    ]
    if report.judge_failures:
        lines.append(f"judge failures: {len(report.judge_failures)}")
    if not report.judge_backed:
        lines.append("note: no judge configured; judge-backed metrics skipped")
    return "\n".join(lines)
