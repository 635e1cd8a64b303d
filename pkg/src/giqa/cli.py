"""Command-line entry point: annotate, genvqa, stats, eval, check.

Exit codes: 0 success, 1 partial failures (some records failed or some
lines invalid), 2 usage/config errors.
"""
from __future__ import annotations

import csv
import hashlib
import json
import sys
import time

import click

from . import bencheval, pipeline, store, vqa
from . import grounded_text as gtx
from .backends import BackendConfig, BackendError, ChatCompletionsClient, HttpJudge, MockJudge
from .config import ConfigError, build_backends, load_config

PIPELINE_VERSION = "0.1.0"


def _summary(command: str, started: float, **fields) -> None:
    payload = {"command": command, **fields, "duration_s": round(time.time() - started, 3)}
    click.echo(json.dumps(payload, sort_keys=True))


def _config_or_exit(path):
    try:
        return load_config(path)
    except (ConfigError, OSError) as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(2)


@click.group()
def main():
    """Grounded image-quality annotation and evaluation toolkit."""


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def annotate(manifest, out_path, config_path):
    """Run the description pipeline over a manifest of records.

    Manifest lines are tab-separated: image path, description, source tag.
    """
    started = time.time()
    cfg = _config_or_exit(config_path)
    try:
        backends = build_backends(cfg, {"completer", "detector", "verifier"})
    except ConfigError as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(2)

    records = []
    with open(manifest, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) < 2:
                click.echo(f"manifest line {lineno}: need image<TAB>description", err=True)
                sys.exit(2)
            records.append(
                pipeline.SourceRecord(
                    image=parts[0],
                    description=parts[1],
                    source=parts[2] if len(parts) > 2 else "",
                )
            )

    pcfg = pipeline.PipelineConfig(grid=cfg.grid, refine=cfg.refine, seed=cfg.seed)
    samples, failures = pipeline.annotate_all(records, backends, pcfg, workers=cfg.workers)
    annotated = []
    for i, sample in enumerate(samples):
        if sample is None:
            continue
        annotated.append(
            store.AnnotatedSample(
                id=f"des-{i:05d}",
                image=sample.image,
                task="DES",
                question=sample.question,
                answer=sample.answer,
                metadata={
                    "source": records[i].source,
                    "seed": cfg.seed,
                    "pipeline_version": PIPELINE_VERSION,
                },
            )
        )
    written = store.write_jsonl(annotated, out_path, cfg.grid, cfg.mode)
    for failure in failures:
        click.echo(f"record failed [{failure.stage}] {failure.record.image}: {failure.error}", err=True)
    _summary("annotate", started, records=len(records), written=written, failures=len(failures))
    sys.exit(1 if failures else 0)


@main.command()
@click.option("--des", "des_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def genvqa(des_path, out_path, config_path):
    """Generate balanced VQA pairs from description samples."""
    started = time.time()
    cfg = _config_or_exit(config_path)
    try:
        backends = build_backends(cfg, {"completer"})
    except ConfigError as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(2)
    try:
        des_samples = store.read_jsonl(des_path, cfg.grid, cfg.mode)
    except (store.SchemaError, OSError) as e:
        click.echo(f"cannot read {des_path}: {e}", err=True)
        sys.exit(2)

    pool: list[vqa.VqaSample] = []
    failures = 0
    for sample in des_samples:
        answer = gtx.parse(sample.answer, cfg.mode, cfg.grid, strict=True)
        description = gtx.plain_text(answer)
        tags = vqa.tags_from_answer(answer)
        digest = hashlib.sha256(f"{sample.id}\x00{sample.answer}".encode()).digest()
        seed = cfg.seed ^ int.from_bytes(digest[:8], "big")
        try:
            generated, warnings = vqa.generate(
                description, tags, backends.completer, sample.image, seed
            )
        except (BackendError, ValueError) as e:
            failures += 1
            click.echo(f"record failed [genvqa] {sample.id}: {e}", err=True)
            continue
        for w in warnings:
            click.echo(f"warning [{sample.id}]: {w}", err=True)
        pool.extend(generated)

    balanced = vqa.balance(pool, cfg.seed)
    out_samples = []
    for i, s in enumerate(balanced):
        out_samples.append(
            store.AnnotatedSample(
                id=f"vqa-{i:05d}",
                image=s.image,
                task=f"VQA-{s.kind}",
                question=s.question,
                answer=s.answer,
                metadata={
                    "subkind": s.subkind,
                    "placement": s.placement,
                    "seed": cfg.seed,
                    "pipeline_version": PIPELINE_VERSION,
                },
            )
        )
    written = store.write_jsonl(out_samples, out_path, cfg.grid, cfg.mode)
    _summary(
        "genvqa",
        started,
        descriptions=len(des_samples),
        pool=len(pool),
        written=written,
        failures=failures,
    )
    sys.exit(1 if failures else 0)


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--hist-out", type=click.Path(dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def stats(in_path, hist_out, config_path):
    """Dataset statistics: counts and a box-area histogram."""
    started = time.time()
    cfg = _config_or_exit(config_path)
    try:
        samples = store.read_jsonl(in_path, cfg.grid, cfg.mode)
    except store.SchemaError as e:
        click.echo(f"invalid dataset: {e}", err=True)
        sys.exit(1)
    result = store.stats(samples, cfg.grid, cfg.mode)
    if hist_out:
        with open(hist_out, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["bin_low", "bin_high", "count"])
            for i, count in enumerate(result.box_area_histogram):
                writer.writerow([i / store.HIST_BINS, (i + 1) / store.HIST_BINS, count])
    _summary(
        "stats",
        started,
        images=result.images,
        total=result.total,
        per_task=result.per_task,
        yes=result.yes,
        no=result.no,
    )
    sys.exit(0)


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def check(in_path, config_path):
    """Strict-parse a JSONL dataset and print violations."""
    started = time.time()
    cfg = _config_or_exit(config_path)
    samples, errors = store.scan_jsonl(in_path, cfg.grid, cfg.mode)
    for lineno, message in errors:
        click.echo(f"line {lineno}: {message}", err=True)
    _summary("check", started, valid=len(samples), violations=len(errors))
    sys.exit(1 if errors else 0)


@main.command("eval")
@click.option("--bench", "bench_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--responses", "responses_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--report", "report_path", required=True, type=click.Path(dir_okay=False))
@click.option("--judge-endpoint", type=str, help="Chat endpoint for the scoring judge.")
@click.option("--mock-judge", "mock_judge_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON fixture file for a deterministic mock judge.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def eval_cmd(bench_path, responses_path, report_path, judge_endpoint, mock_judge_path, config_path):
    """Evaluate model responses against a benchmark file."""
    started = time.time()
    cfg = _config_or_exit(config_path)
    if judge_endpoint and mock_judge_path:
        click.echo("--judge-endpoint and --mock-judge are mutually exclusive", err=True)
        sys.exit(2)
    judge = None
    if mock_judge_path:
        with open(mock_judge_path, "r", encoding="utf-8") as f:
            fixtures = {k: int(v) for k, v in json.load(f).items()}
        judge = MockJudge(fixtures=fixtures)
    elif judge_endpoint:
        judge = HttpJudge(ChatCompletionsClient(BackendConfig(endpoint=judge_endpoint)))
    elif "judge" in cfg.backends:
        from .config import build_judge

        judge = build_judge(cfg.backends["judge"], cfg.seed)

    try:
        _, items = bencheval.load_bench(bench_path, cfg.grid, cfg.mode)
    except (bencheval.ManifestError, ValueError) as e:
        click.echo(f"invalid bench file: {e}", err=True)
        sys.exit(2)
    responses = bencheval.load_responses(responses_path)
    report = bencheval.evaluate(items, responses, judge, cfg.grid, cfg.mode)
    with open(report_path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    click.echo(bencheval.format_report(report))
    _summary(
        "eval",
        started,
        items=len(items),
        judge_failures=len(report.judge_failures),
    )
    sys.exit(1 if report.judge_failures else 0)


if __name__ == "__main__":
    main()
