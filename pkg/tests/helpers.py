"""Shared fixture scenario: five source records with deterministic mock
backends, used by pipeline, CLI, and acceptance tests."""
from __future__ import annotations

import json
import os

from PIL import Image

from giqa import grounded_text as gtx
from giqa import prompts, vqa
from giqa.backends import MockCompleter, MockDetector, MockVerifier, request_digest
from giqa.pipeline import Backends, PipelineConfig, SourceRecord, annotate_all

# release-gate PASS/FAIL lines, echoed by conftest.py after the run
GATE_RESULTS: list[str] = []

DESCRIPTIONS = [
    "The billiard table is clear, but the blurry hands reduce quality.",
    "A sharp mountain with a noisy sky above.",
    "Heavy noise ruins the portrait.",
    "The left lamp is overexposed while the right lamp stays clear.",
    "Slight blur on the dog's face.",
]

TAG_REPLIES = [
    "billiard table | clear | positive\nhands | blurry | negative",
    "mountain | sharp | positive\nsky | noisy | negative",
    "portrait | noisy | negative",
    "left lamp | overexposed | negative\nright lamp | clear | positive",
    "dog's face | blurry | negative",
]

DETECTOR_FIXTURES = {
    "billiard table": [[0.1, 0.5, 0.9, 0.95, 0.9]],
    "hands": [[0.2, 0.2, 0.4, 0.4, 0.8], [0.6, 0.2, 0.8, 0.4, 0.7]],
    "mountain": [[0.05, 0.3, 0.95, 0.9, 0.95]],
    "sky": [[0.0, 0.0, 0.5, 0.2, 0.9], [0.01, 0.0, 0.5, 0.21, 0.6]],
    "portrait": [],
    "left lamp": [[0.05, 0.1, 0.25, 0.5, 0.85]],
    "right lamp": [[0.7, 0.1, 0.9, 0.5, 0.85]],
    "dog's face": [[0.3, 0.3, 0.6, 0.6, 0.9]],
}

VERIFIER_FIXTURES = {
    "Is the image quality blurry?": "Yes",
    "Is the image quality noisy?": "Yes",
    "Is the image quality overexposed?": "Yes",
}

BINARY_REPLIES = {
    DESCRIPTIONS[0]: (
        "Is the billiard table clear? | Yes\n"
        "Are the hands blurry? | Yes\n"
        "Is the billiard table scratched? | No\n"
        "Are the hands overexposed? | No"
    ),
    DESCRIPTIONS[1]: (
        "Is the mountain sharp? | Yes\n"
        "Is the sky noisy? | Yes\n"
        "Is the mountain blurry? | No"
    ),
    DESCRIPTIONS[2]: "Is the portrait noisy? | Yes\nIs the portrait sharp? | No",
    DESCRIPTIONS[3]: (
        "Is the left lamp overexposed? | Yes\n"
        "Is the right lamp clear? | Yes\n"
        "Is the right lamp noisy? | No"
    ),
    DESCRIPTIONS[4]: "Is the dog's face blurry? | Yes",
}

OPEN_REPLIES = {
    DESCRIPTIONS[0]: (
        "What reduces the quality of the hands? | Blur\n"
        "How is the clarity of the billiard table? | High"
    ),
    DESCRIPTIONS[1]: (
        "What distortion affects the sky? | Noise\n"
        "Why is the sky degraded? | Noise in the sky"
    ),
    DESCRIPTIONS[2]: "What ruins the portrait? | Heavy noise",
    DESCRIPTIONS[3]: "How is the exposure of the left lamp? | Too bright",
    DESCRIPTIONS[4]: "What is wrong with the dog's face? | Slight blur",
}


def make_records(image_dir: str) -> list[SourceRecord]:
    """Write five tiny solid-color images and return the records."""
    os.makedirs(image_dir, exist_ok=True)
    records = []
    for i, desc in enumerate(DESCRIPTIONS):
        path = os.path.join(image_dir, f"img{i}.png")
        Image.new("RGB", (64, 48), (40 * i, 80, 120)).save(path)
        records.append(SourceRecord(image=path, description=desc, source=f"src{i}"))
    return records


def stage1_fixtures() -> dict[str, str]:
    return {
        request_digest(prompts.tag_extraction_prompt(desc)): reply
        for desc, reply in zip(DESCRIPTIONS, TAG_REPLIES)
    }


def make_backends(extra_completer_fixtures: dict | None = None) -> Backends:
    fixtures = stage1_fixtures()
    if extra_completer_fixtures:
        fixtures.update(extra_completer_fixtures)
    return Backends(
        completer=MockCompleter(fixtures=fixtures),
        detector=MockDetector(fixtures=DETECTOR_FIXTURES),
        verifier=MockVerifier(fixtures=VERIFIER_FIXTURES),
    )


def vqa_fixtures(des_answers: list[str], cfg: PipelineConfig) -> dict[str, str]:
    """QA-generation fixtures keyed by the prompts the generator will send,
    derived from the produced description answers."""
    fixtures: dict[str, str] = {}
    for wire in des_answers:
        answer = gtx.parse(wire, gtx.GRID, cfg.grid, strict=True)
        description = gtx.plain_text(answer)
        objects = ", ".join(t.phrase for t in vqa.tags_from_answer(answer))
        binary = BINARY_REPLIES.get(description, "")
        open_ = OPEN_REPLIES.get(description, "")
        if binary:
            fixtures[request_digest(prompts.binary_qa_prompt(description, objects))] = binary
        if open_:
            fixtures[request_digest(prompts.open_qa_prompt(description, objects))] = open_
    return fixtures


def full_completer_fixtures(records, cfg: PipelineConfig) -> dict[str, str]:
    """Stage-1 plus QA fixtures (the latter derived by running the
    description pipeline in-process)."""
    samples, failures = annotate_all(records, make_backends(), cfg)
    assert not failures, failures
    answers = [s.answer for s in samples if s is not None]
    fixtures = stage1_fixtures()
    fixtures.update(vqa_fixtures(answers, cfg))
    return fixtures


MINI_BENCH_MANIFEST = {
    "DES": 2,
    "VQA-Y": {"Yes": 1, "No": 1},
    "VQA-W": {"What": 1, "Why": 0, "How": 1},
}

MINI_BENCH_ITEMS = [
    {
        "id": "d1", "image": "b1.png", "task": "DES", "subkind": "",
        "question": "Describe the quality of this image in detail.",
        "answer": "The [blurry hands](<42,84>) ruin the shot.",
    },
    {
        "id": "d2", "image": "b2.png", "task": "DES", "subkind": "",
        "question": "Describe the quality of this image in detail.",
        "answer": "The [noisy sky](<0,21>) over the city.",
    },
    {
        "id": "y1", "image": "b3.png", "task": "VQA-Y", "subkind": "Yes",
        "question": "Is the [lamp](<100,142>) clear?", "answer": "Yes",
    },
    {
        "id": "y2", "image": "b4.png", "task": "VQA-Y", "subkind": "No",
        "question": "Is the sky overexposed?", "answer": "No",
    },
    {
        "id": "w1", "image": "b5.png", "task": "VQA-W", "subkind": "What",
        "question": "What distortion is present?", "answer": "Noise",
    },
    {
        "id": "w2", "image": "b6.png", "task": "VQA-W", "subkind": "How",
        "question": "How does the lamp behave?",
        "answer": "The [lamp](<100,142>) flickers.",
    },
]

MINI_BENCH_RESPONSES = {
    "d1": "The [blurry hands](<42,84>) ruin the shot.",
    "d2": "The [sky](<0,21>) over the city.",
    "y1": "Yes, clearly.",
    "y2": "It is sharp.",
    "w1": "Noise",
    "w2": "The [lamp](<100,142>) flickers.",
}


def write_mini_bench(tmp_path) -> dict:
    """Write the 6-item bench plus scripted responses; returns paths and
    the judge fixture map (w1 scores 3, everything else 4)."""
    bench_path = os.path.join(str(tmp_path), "bench.jsonl")
    with open(bench_path, "w", encoding="utf-8") as f:
        f.write(json.dumps({"manifest": MINI_BENCH_MANIFEST}) + "\n")
        for item in MINI_BENCH_ITEMS:
            f.write(json.dumps(item) + "\n")
    responses_path = os.path.join(str(tmp_path), "responses.jsonl")
    with open(responses_path, "w", encoding="utf-8") as f:
        for rid, text in MINI_BENCH_RESPONSES.items():
            f.write(json.dumps({"id": rid, "response": text}) + "\n")
    judge_fixtures = {
        request_digest(
            prompts.open_answer_judge_prompt("What distortion is present?", "Noise", "Noise")
        ): 3,
    }
    return {
        "bench": bench_path,
        "responses": responses_path,
        "judge_fixtures": judge_fixtures,
    }


def write_fixture_bundle(tmp_path) -> dict:
    """Materialize images, manifest, mock fixture files, and a config file
    for CLI runs. Returns the relevant paths."""
    tmp = str(tmp_path)
    records = make_records(os.path.join(tmp, "images"))
    cfg = PipelineConfig()

    manifest = os.path.join(tmp, "manifest.tsv")
    with open(manifest, "w", encoding="utf-8") as f:
        for r in records:
            f.write(f"{r.image}\t{r.description}\t{r.source}\n")

    completer_path = os.path.join(tmp, "completer_fixtures.json")
    with open(completer_path, "w", encoding="utf-8") as f:
        json.dump(full_completer_fixtures(records, cfg), f)
    detector_path = os.path.join(tmp, "detector_fixtures.json")
    with open(detector_path, "w", encoding="utf-8") as f:
        json.dump(DETECTOR_FIXTURES, f)
    verifier_path = os.path.join(tmp, "verifier_fixtures.json")
    with open(verifier_path, "w", encoding="utf-8") as f:
        json.dump(VERIFIER_FIXTURES, f)

    config_path = os.path.join(tmp, "config.yaml")
    with open(config_path, "w", encoding="utf-8") as f:
        f.write(
            "seed: 0\n"
            "workers: 1\n"
            "backends:\n"
            "  completer:\n"
            "    kind: mock\n"
            f"    fixtures: {completer_path}\n"
            "  detector:\n"
            "    kind: mock\n"
            f"    fixtures: {detector_path}\n"
            "  verifier:\n"
            "    kind: mock\n"
            f"    fixtures: {verifier_path}\n"
            "    default: 'Yes'\n"
        )
    return {
        "records": records,
        "manifest": manifest,
        "config": config_path,
        "tmp": tmp,
    }
