"""Command-line entry points.

Exit codes: 0 on success, 1 on operational failures, 2 on input contract
violations (bad flags, malformed or mismatched files).  A stream whose
backend degrades mid-run still exits 0: the affected lines are quarantined
and reported, not dropped.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from .bench import (
    DatasetCorrupt,
    LabeledRecord,
    _read_structured_rows,
    build_format_regex,
    read_result_csv,
    run_benchmark,
    sample_calibration_shots,
    write_structured_csv,
)
from .config import BackendConfig, Config, ConfigError, load_config
from .engine import (
    AutoMergePolicy,
    InteractiveMergePolicy,
    NoMergePolicy,
    ParseEvent,
    ParserEngine,
    StateCorrupt,
    StateVersionError,
)
from .extractor.backends import (
    ExtractionUnavailable,
    OracleBackend,
    OracleMiss,
    RemoteChatBackend,
    RemoteEmbedder,
    ReplayBackend,
    ReplayCorrupt,
    ReplayMiss,
    ReplayRecorder,
    RetryPolicy,
)
from .extractor.embedding import HashingEmbedder
from .extractor.pool import DEFAULT_SEEDS, ExamplePool, load_seeds
from .extractor.prompts import build_finetune_record
from .extractor.service import TemplateExtractor
from .metrics import ResultMismatch, compute_report, format_report_table
from .model import RawLogRecord, normalize_template

_CONTRACT_ERRORS = (
    ConfigError,
    DatasetCorrupt,
    StateCorrupt,
    StateVersionError,
    ResultMismatch,
    ReplayCorrupt,
    OracleMiss,
    ReplayMiss,
)


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


class _StubBackend:
    """Placeholder for commands that must not need a model."""

    def complete(self, prompt: str) -> str:
        raise ExtractionUnavailable("no backend configured for this command")


def _oracle_labels(path: str) -> dict[str, str]:
    rows = _read_structured_rows(Path(path))
    return {row["Content"]: row["EventTemplate"] for row in rows}


def _build_backend(cfg: BackendConfig, allow_stub: bool = False):
    if cfg.kind == "oracle":
        if not cfg.labels:
            raise ConfigError("oracle backend needs labels (structured CSV)")
        backend = OracleBackend(_oracle_labels(cfg.labels))
    elif cfg.kind == "replay":
        if not cfg.replay:
            raise ConfigError("replay backend needs a replay file")
        backend = ReplayBackend(cfg.replay)
    else:  # remote
        if not cfg.base_url or not cfg.model:
            if allow_stub:
                return _StubBackend()
            raise ConfigError("remote backend needs base_url and model")
        backend = RemoteChatBackend(
            cfg.base_url,
            cfg.model,
            path=cfg.chat_path,
            api_key_env=cfg.api_key_env,
            timeout=cfg.timeout,
            retry=RetryPolicy(
                max_attempts=cfg.max_attempts,
                backoff_base=cfg.backoff_base,
                jitter=cfg.jitter,
            ),
        )
    if cfg.record:
        backend = ReplayRecorder(backend, cfg.record)
    return backend


def _build_extractor(cfg: Config, allow_stub: bool = False) -> TemplateExtractor:
    backend = _build_backend(cfg.backend, allow_stub=allow_stub)
    if cfg.backend.embedding_kind == "remote":
        if not cfg.backend.base_url or not cfg.backend.embedding_model:
            raise ConfigError("remote embeddings need base_url and embedding_model")
        embedder = RemoteEmbedder(
            cfg.backend.base_url,
            cfg.backend.embedding_model,
            path=cfg.backend.embeddings_path,
            api_key_env=cfg.backend.api_key_env,
            timeout=cfg.backend.timeout,
        )
    else:
        embedder = HashingEmbedder(dim=cfg.engine.embedding_dim)
    if cfg.backend.seeds:
        with open(cfg.backend.seeds, encoding="utf-8") as handle:
            seeds = load_seeds(handle)
    else:
        seeds = list(DEFAULT_SEEDS)
    pool = ExamplePool(embedder, seeds=seeds)
    return TemplateExtractor(
        backend, embedder, pool=pool, shots=cfg.engine.shots
    )


def _interactive_ask(content: str, cluster_template: str, extracted: str) -> str | None:
    click.echo(f"\nincoming log : {content}")
    click.echo(f"cluster      : {cluster_template}")
    click.echo(f"extracted    : {extracted}")
    if not click.confirm("merge this log into the cluster?", default=False):
        return None
    return click.prompt("unified template", default=extracted)


def _merge_policy(name: str, extractor: TemplateExtractor):
    if name == "off":
        return NoMergePolicy()
    if name == "interactive":
        if not sys.stdin.isatty():
            raise ConfigError(
                "interactive merge policy needs a terminal; use --merge-policy"
                " auto or off in scripts"
            )
        return InteractiveMergePolicy(_interactive_ask)
    return AutoMergePolicy(extractor)


def _echo_stats(engine: ParserEngine) -> None:
    stats = engine.stats
    click.echo(f"logs processed      {stats.logs_processed}")
    click.echo(f"clusters            {stats.clusters}")
    click.echo(f"extraction calls    {stats.extraction_calls}")
    click.echo(
        "merge calls         "
        f"{stats.merge_verification_calls + stats.merge_check_calls}"
    )
    click.echo(f"quarantined         {stats.quarantined}")
    click.echo(f"wall seconds        {stats.wall_seconds:.3f}")


@click.group()
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="INI config file; flags override it.",
)
@click.pass_context
def main(ctx: click.Context, config_path: str | None) -> None:
    """Streaming log template mining and evaluation."""
    try:
        ctx.obj = load_config(config_path)
    except ConfigError as exc:
        _fail(2, str(exc))


@main.command("parse")
@click.argument("input_path", type=click.Path(allow_dash=True))
@click.option("--output", "-o", "output_path", type=click.Path(), default=None,
              help="Structured CSV written incrementally.")
@click.option("--state", "state_path", type=click.Path(), default=None,
              help="Engine state JSON; loaded if present, saved after the run.")
@click.option("--backend", "backend_kind",
              type=click.Choice(["remote", "oracle", "replay"]), default=None)
@click.option("--labels", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Structured CSV with ground-truth templates (oracle backend).")
@click.option("--replay", "replay_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Replay file (replay backend).")
@click.option("--record", "record_path", type=click.Path(), default=None,
              help="Record backend responses to this replay file.")
@click.option("--log-format", "log_format", default=None,
              help='Header pattern like "<Date> <Time> <Content>".')
@click.option("--merge-policy", type=click.Choice(["auto", "interactive", "off"]),
              default=None)
@click.option("--shots", type=int, default=None)
@click.option("--depth-cap", type=int, default=None)
@click.pass_obj
def cmd_parse(
    cfg: Config,
    input_path: str,
    output_path: str | None,
    state_path: str | None,
    backend_kind: str | None,
    labels: str | None,
    replay_path: str | None,
    record_path: str | None,
    log_format: str | None,
    merge_policy: str | None,
    shots: int | None,
    depth_cap: int | None,
) -> None:
    """Parse a raw log stream into event clusters."""
    if backend_kind:
        cfg.backend.kind = backend_kind
    if labels:
        cfg.backend.labels = labels
        if backend_kind is None:
            cfg.backend.kind = "oracle"
    if replay_path:
        cfg.backend.replay = replay_path
        if backend_kind is None:
            cfg.backend.kind = "replay"
    if record_path:
        cfg.backend.record = record_path
    if shots is not None:
        cfg.engine.shots = shots
    if depth_cap is not None:
        cfg.engine.depth_cap = depth_cap
    policy_name = merge_policy or cfg.engine.merge_policy

    try:
        extractor = _build_extractor(cfg)
        policy = _merge_policy(policy_name, extractor)
        if state_path and Path(state_path).exists():
            engine = ParserEngine.load_state(state_path, extractor, merge_policy=policy)
            if depth_cap is not None and engine.tree.depth_cap != depth_cap:
                raise ConfigError(
                    f"state was built with depth cap {engine.tree.depth_cap}"
                )
        else:
            engine = ParserEngine(
                extractor, depth_cap=cfg.engine.depth_cap, merge_policy=policy
            )
        pattern = build_format_regex(log_format) if log_format else None
    except _CONTRACT_ERRORS as exc:
        return _fail(2, str(exc))
    except ValueError as exc:
        return _fail(2, str(exc))

    writer = None
    out_handle = None
    if output_path:
        out_handle = open(output_path, "w", newline="", encoding="utf-8")
        writer = csv.writer(out_handle, lineterminator="\n")
        writer.writerow(("LineId", "Content", "EventId", "EventTemplate"))

    unmatched = 0
    line_id = 0
    try:
        with click.open_file(input_path, "r") as stream:
            for raw in stream:
                raw = raw.rstrip("\n")
                line_id += 1
                if pattern is not None:
                    match = pattern.match(raw)
                    if match:
                        content = match.group("Content")
                    else:
                        content = raw
                        unmatched += 1
                else:
                    content = raw
                outcome = engine.process_line(line_id, content, raw=raw)
                if writer is not None:
                    if outcome.event is ParseEvent.QUARANTINED:
                        group = f"Q{len(content.split())}"
                        template = "<*>"
                    else:
                        group = f"C{outcome.cluster_id}"
                        template = engine.clusters[
                            outcome.cluster_id
                        ].log_template.text
                    writer.writerow((line_id, content, group, template))
    except (OracleMiss, ReplayMiss) as exc:
        _fail(2, str(exc))
    finally:
        if out_handle is not None:
            out_handle.close()

    if state_path:
        engine.save_state(state_path)
    _echo_stats(engine)
    if unmatched:
        click.echo(f"warning: {unmatched} lines did not match the log format", err=True)
    if engine.stats.quarantined:
        click.echo(
            f"warning: {engine.stats.quarantined} lines quarantined; rerun with a"
            " healthy backend to reprocess",
            err=True,
        )


@main.command("evaluate")
@click.argument("predicted_csv", type=click.Path(exists=True, dir_okay=False))
@click.argument("truth_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--name", default="stream", help="Row label in the table.")
@click.option("--json", "json_path", type=click.Path(), default=None)
def cmd_evaluate(
    predicted_csv: str, truth_csv: str, name: str, json_path: str | None
) -> None:
    """Score a parsed CSV against a ground-truth CSV."""
    try:
        predicted = read_result_csv(predicted_csv)
        truth = read_result_csv(truth_csv)
        report = compute_report(predicted, truth)
    except _CONTRACT_ERRORS as exc:
        return _fail(2, str(exc))
    except ValueError as exc:
        return _fail(2, str(exc))
    click.echo(format_report_table([(name, report)]))
    if json_path:
        Path(json_path).write_text(report.to_json() + "\n", encoding="utf-8")


@main.command("bench")
@click.option("--dataset", "dataset_names", multiple=True,
              help="Dataset name from the config; repeatable.")
@click.option("--all", "run_all", is_flag=True, help="Run every configured dataset.")
@click.option("--json", "json_path", type=click.Path(), default=None)
@click.option("--output-dir", type=click.Path(file_okay=False), default=None,
              help="Write each dataset's parsed CSV here.")
@click.pass_obj
def cmd_bench(
    cfg: Config,
    dataset_names: tuple[str, ...],
    run_all: bool,
    json_path: str | None,
    output_dir: str | None,
) -> None:
    """Benchmark configured datasets (ground-truth oracle closure by default)."""
    if not cfg.datasets:
        return _fail(2, "no [dataset.*] sections configured")
    if dataset_names:
        missing = [n for n in dataset_names if n not in cfg.datasets]
        if missing:
            return _fail(2, f"unknown datasets: {missing}")
        selected = [cfg.datasets[n] for n in dataset_names]
    else:
        selected = list(cfg.datasets.values()) if run_all else []
        if not selected:
            return _fail(2, "pass --dataset NAME or --all")

    rows = []
    payload = {}
    for spec in selected:
        try:
            backend = None
            if cfg.backend.kind == "replay":
                backend = _build_backend(cfg.backend)
            run = run_benchmark(
                spec,
                backend=backend,
                depth_cap=cfg.engine.depth_cap,
                shots=cfg.engine.shots,
                estimated_call_latency=cfg.bench.estimated_call_latency,
            )
        except _CONTRACT_ERRORS as exc:
            return _fail(2, f"{spec.name}: {exc}")
        report = run.report
        rows.append((spec.name, report.metrics))
        payload[spec.name] = report.to_dict()
        click.echo(
            f"{spec.name}: {report.logs} logs, {report.clusters} clusters, "
            f"{report.extraction_calls} extraction calls, "
            f"base {report.base_seconds:.3f}s, backend {report.backend_seconds:.3f}s"
            + (
                f" (est. {report.estimated_backend_seconds:.3f}s)"
                if report.estimated_backend_seconds
                else ""
            )
        )
        if output_dir:
            out_dir = Path(output_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            write_structured_csv(
                out_dir / f"{spec.name}_structured.csv", run.structured_rows()
            )
    click.echo(format_report_table(rows))
    if json_path:
        Path(json_path).write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )


@main.command("calibrate")
@click.option("--state", "state_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--floor", type=float, default=0.8, show_default=True,
              help="Cosine similarity floor for merge suggestions.")
@click.option("--list", "list_only", is_flag=True,
              help="Print suggestions without applying anything.")
@click.pass_obj
def cmd_calibrate(
    cfg: Config, state_path: str, floor: float, list_only: bool
) -> None:
    """Review suggested cluster merges and apply approved ones."""
    try:
        extractor = _build_extractor(cfg, allow_stub=True)
        engine = ParserEngine.load_state(state_path, extractor)
    except _CONTRACT_ERRORS as exc:
        return _fail(2, str(exc))
    suggestions = engine.suggest_post_merges(floor)
    if not suggestions:
        click.echo("no merge suggestions at this floor")
        return
    if list_only or not sys.stdin.isatty():
        for s in suggestions:
            a, b = engine.clusters[s.cluster_a], engine.clusters[s.cluster_b]
            click.echo(f"[{s.score:.3f}] #{s.cluster_a} ~ #{s.cluster_b}")
            click.echo(f"  #{s.cluster_a}: {a.log_template.text}")
            click.echo(f"      sample: {a.sample_content}")
            click.echo(f"  #{s.cluster_b}: {b.log_template.text}")
            click.echo(f"      sample: {b.sample_content}")
        if not list_only:
            click.echo(
                "not a terminal: listed suggestions only; rerun with --list or"
                " from a terminal to apply",
                err=True,
            )
        return
    applied = 0
    for s in suggestions:
        if s.cluster_a not in engine.clusters or s.cluster_b not in engine.clusters:
            continue  # consumed by an earlier merge
        a, b = engine.clusters[s.cluster_a], engine.clusters[s.cluster_b]
        click.echo(f"\n[{s.score:.3f}] #{a.id}: {a.log_template.text}")
        click.echo(f"        sample: {a.sample_content}")
        click.echo(f"        #{b.id}: {b.log_template.text}")
        click.echo(f"        sample: {b.sample_content}")
        if not click.confirm("merge these clusters?", default=False):
            continue
        keep, absorb = sorted((a.id, b.id))
        default_template = engine.clusters[keep].log_template.text
        text = click.prompt("unified template", default=default_template)
        try:
            unified = normalize_template(text)
            engine.merge_clusters(keep, absorb, unified)
        except ValueError as exc:
            click.echo(f"skipped: {exc}", err=True)
            continue
        applied += 1
    if applied:
        engine.save_state(state_path)
    click.echo(f"applied {applied} merges")


@main.command("export-finetune")
@click.option("--labels", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Structured CSV with Content and EventTemplate columns.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--sample", type=int, default=0, show_default=True,
              help="Calibration-sample size; 0 exports every row.")
def cmd_export_finetune(labels: str, out_path: str, sample: int) -> None:
    """Export instruction-tuning records as JSON Lines."""
    try:
        rows = _read_structured_rows(Path(labels))
    except DatasetCorrupt as exc:
        return _fail(2, str(exc))
    pairs: list[tuple[str, str]]
    if sample > 0:
        records = [
            LabeledRecord(
                record=RawLogRecord(
                    line_id=i, raw=row["Content"], content=row["Content"]
                ),
                group=row["EventId"],
                template=row["EventTemplate"],
            )
            for i, row in enumerate(rows, start=1)
        ]
        chosen = sample_calibration_shots(records, sample)
        pairs = [(rec.content, rec.template) for rec in chosen]
    else:
        pairs = [(row["Content"], row["EventTemplate"]) for row in rows]
    with open(out_path, "w", encoding="utf-8") as handle:
        for log, template in pairs:
            record = {"text": build_finetune_record(log, template)}
            handle.write(json.dumps(record, sort_keys=True) + "\n")
    click.echo(f"wrote {len(pairs)} records to {out_path}")


if __name__ == "__main__":
    main()
