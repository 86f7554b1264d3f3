"""Benchmark harness for loghub-style labeled datasets.

A dataset is a raw ``.log`` file plus a structured CSV (LineId, Content,
EventId, EventTemplate) and optionally a templates CSV (EventId,
EventTemplate).  Raw lines are split into header fields and message content by
a log-format pattern such as ``<Date> <Time> <Pid> <Level> <Component>:
<Content>``; lines that do not match keep the whole line as content and are
flagged.
"""

from __future__ import annotations

import csv
import re
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .engine import NoMergePolicy, ParseEvent, ParseOutcome, ParserEngine
from .extractor.backends import ChatBackend, OracleBackend
from .extractor.embedding import HashingEmbedder
from .extractor.pool import DEFAULT_SHOTS
from .extractor.service import TemplateExtractor
from .metrics import MetricReport, ParsingResult, compute_report
from .model import RawLogRecord
from .tree import DEFAULT_DEPTH_CAP

STRUCTURED_COLUMNS = ("LineId", "Content", "EventId", "EventTemplate")
DEFAULT_CALIBRATION_SHOTS = 32


class DatasetCorrupt(ValueError):
    """The dataset files disagree with each other or with their schema."""


class ShortDatasetWarning(UserWarning):
    """The calibration pool is smaller than the requested sample size."""


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    log_path: Path
    structured_path: Path
    log_format: str
    templates_path: Path | None = None


@dataclass(frozen=True)
class LabeledRecord:
    """One stream line with its ground-truth group and template."""

    record: RawLogRecord
    group: str
    template: str
    matched_format: bool = True

    @property
    def content(self) -> str:
        return self.record.content


def build_format_regex(log_format: str) -> re.Pattern[str]:
    """Compile a ``<Field>``-style header pattern into named groups.

    Literal text between fields matches itself with flexible whitespace; every
    field is non-greedy, so the final ``<Content>`` field takes the rest of
    the line.
    """
    parts = re.split(r"(<[^<>]+>)", log_format)
    fields = []
    regex = ""
    for i, part in enumerate(parts):
        if i % 2 == 0:
            regex += re.sub(r" +", r"\\s+", re.escape(part).replace(r"\ ", " "))
        else:
            name = part[1:-1]
            fields.append(name)
            regex += f"(?P<{name}>.*?)"
    if "Content" not in fields:
        raise ValueError(f"log format has no <Content> field: {log_format!r}")
    return re.compile("^" + regex + "$")


def _read_structured_rows(path: Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        columns = reader.fieldnames or []
        missing = [c for c in STRUCTURED_COLUMNS if c not in columns]
        if missing:
            raise DatasetCorrupt(f"{path}: missing columns {missing}")
        return list(reader)


def load_dataset(spec: DatasetSpec) -> list[LabeledRecord]:
    """Join the raw stream with its labels, line by line.

    Raises:
        DatasetCorrupt: on row-count mismatch, schema violations, or a
            templates CSV that contradicts the structured rows.
    """
    pattern = build_format_regex(spec.log_format)
    with open(spec.log_path, encoding="utf-8") as handle:
        raw_lines = [line.rstrip("\n") for line in handle]
    rows = _read_structured_rows(spec.structured_path)
    if len(raw_lines) != len(rows):
        raise DatasetCorrupt(
            f"{spec.name}: {len(raw_lines)} raw lines but {len(rows)} structured rows"
        )

    event_templates: dict[str, str] | None = None
    if spec.templates_path is not None:
        event_templates = {}
        with open(spec.templates_path, newline="", encoding="utf-8") as handle:
            for row in csv.DictReader(handle):
                event_templates[row["EventId"]] = row["EventTemplate"]

    records = []
    for line_number, (raw, row) in enumerate(zip(raw_lines, rows), start=1):
        match = pattern.match(raw)
        if match:
            content = match.group("Content")
            matched = True
        else:
            content = raw
            matched = False
        if event_templates is not None:
            expected = event_templates.get(row["EventId"])
            if expected is not None and expected != row["EventTemplate"]:
                raise DatasetCorrupt(
                    f"{spec.name}: line {line_number} template disagrees with "
                    f"the templates CSV for {row['EventId']}"
                )
        records.append(
            LabeledRecord(
                record=RawLogRecord(line_id=line_number, raw=raw, content=content),
                group=row["EventId"],
                template=row["EventTemplate"],
                matched_format=matched,
            )
        )
    return records


def check_consistency(records: Sequence[LabeledRecord]) -> list[str]:
    """Cheap ground-truth sanity checks; returns a list of problems.

    Flags content labeled with two different groups or templates, and
    distinct groups whose templates normalize identically (such groups are
    indistinguishable to a pool keyed by normalized text).
    """
    from .metrics import _normalized

    problems = []
    by_content: dict[str, tuple[str, str]] = {}
    for rec in records:
        label = (rec.group, rec.template)
        seen = by_content.setdefault(rec.content, label)
        if seen != label:
            problems.append(f"content {rec.content!r} labeled both {seen} and {label}")
    by_template: dict[str, str] = {}
    for rec in records:
        normalized = _normalized(rec.template)
        owner = by_template.setdefault(normalized, rec.group)
        if owner != rec.group:
            problems.append(
                f"groups {owner} and {rec.group} share normalized template "
                f"{normalized!r}"
            )
    return problems


def sample_calibration_shots(
    records: Sequence[LabeledRecord], n: int = DEFAULT_CALIBRATION_SHOTS
) -> list[LabeledRecord]:
    """Deterministic calibration sample from the first tenth of the stream.

    The head is sorted by token length (stable, so equal lengths keep arrival
    order) and n evenly spaced entries are taken, centered so n=1 picks the
    median-length record.  A head shorter than n is returned whole with a
    :class:`ShortDatasetWarning`.
    """
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    head = list(records[: len(records) // 10])
    ordered = sorted(head, key=lambda rec: len(rec.content.split()))
    if len(ordered) < n:
        warnings.warn(
            f"calibration pool has {len(ordered)} records, wanted {n}",
            ShortDatasetWarning,
            stacklevel=2,
        )
        return ordered
    m = len(ordered)
    return [ordered[((2 * i + 1) * m) // (2 * n)] for i in range(n)]


# ---- benchmark runner ----


@dataclass(frozen=True)
class BenchReport:
    dataset: str
    metrics: MetricReport
    logs: int
    clusters: int
    quarantined: int
    extraction_calls: int
    merge_verification_calls: int
    merge_check_calls: int
    base_seconds: float
    backend_seconds: float
    estimated_backend_seconds: float

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "metrics": self.metrics.to_dict(),
            "logs": self.logs,
            "clusters": self.clusters,
            "quarantined": self.quarantined,
            "extraction_calls": self.extraction_calls,
            "merge_verification_calls": self.merge_verification_calls,
            "merge_check_calls": self.merge_check_calls,
            "base_seconds": self.base_seconds,
            "backend_seconds": self.backend_seconds,
            "estimated_backend_seconds": self.estimated_backend_seconds,
        }


@dataclass
class BenchRun:
    report: BenchReport
    predicted: ParsingResult
    truth: ParsingResult
    records: list[LabeledRecord]
    outcomes: list[ParseOutcome]
    engine: ParserEngine

    def structured_rows(self) -> Iterator[tuple[int, str, str, str]]:
        """Final-state (LineId, Content, EventId, EventTemplate) rows."""
        for rec, outcome in zip(self.records, self.outcomes):
            group = self.predicted.assignment[outcome.line_id]
            yield outcome.line_id, rec.content, group, self.predicted.templates[group]


def truth_result(records: Sequence[LabeledRecord]) -> ParsingResult:
    return ParsingResult.from_rows(
        (rec.record.line_id, rec.group, rec.template) for rec in records
    )


def predicted_result(
    engine: ParserEngine, outcomes: Sequence[ParseOutcome]
) -> ParsingResult:
    """Final-state view of a run: line -> cluster, cluster -> template.

    Quarantined lines form per-token-count pseudo groups with an all-variable
    template; with a healthy backend there are none.
    """
    assignment: dict[int, str] = {}
    templates: dict[str, str] = {}
    for outcome in outcomes:
        if outcome.event is ParseEvent.QUARANTINED or outcome.cluster_id is None:
            continue
        group = f"C{outcome.cluster_id}"
        assignment[outcome.line_id] = group
        templates[group] = engine.clusters[outcome.cluster_id].log_template.text
    for count, line_ids in engine.quarantine.items():
        group = f"Q{count}"
        for line_id in line_ids:
            assignment[line_id] = group
        templates[group] = "<*>"
    return ParsingResult(assignment, templates)


def oracle_backend_for(records: Sequence[LabeledRecord]) -> OracleBackend:
    return OracleBackend({rec.content: rec.template for rec in records})


def run_benchmark(
    spec: DatasetSpec,
    backend: ChatBackend | None = None,
    merge_policy=None,
    depth_cap: int = DEFAULT_DEPTH_CAP,
    shots: int = DEFAULT_SHOTS,
    estimated_call_latency: float = 0.0,
) -> BenchRun:
    """Stream a dataset through a fresh engine and score it.

    Without an explicit backend the dataset's own labels act as a
    ground-truth oracle, which is the closed-loop configuration: parsing cost
    is real, model quality is assumed perfect.  ``base_seconds`` is engine
    time minus backend time; ``estimated_backend_seconds`` prices the call
    count at a configurable per-call latency instead of the measured one.
    """
    records = load_dataset(spec)
    if backend is None:
        backend = oracle_backend_for(records)
    extractor = TemplateExtractor(backend, HashingEmbedder(), shots=shots)
    if merge_policy is None:
        merge_policy = NoMergePolicy()
    engine = ParserEngine(extractor, depth_cap=depth_cap, merge_policy=merge_policy)

    started = time.perf_counter()
    outcomes = [engine.process_log(rec.record) for rec in records]
    elapsed = time.perf_counter() - started

    predicted = predicted_result(engine, outcomes)
    truth = truth_result(records)
    stats = engine.stats
    calls = (
        stats.extraction_calls
        + stats.merge_verification_calls
        + stats.merge_check_calls
    )
    report = BenchReport(
        dataset=spec.name,
        metrics=compute_report(predicted, truth),
        logs=stats.logs_processed,
        clusters=stats.clusters,
        quarantined=stats.quarantined,
        extraction_calls=stats.extraction_calls,
        merge_verification_calls=stats.merge_verification_calls,
        merge_check_calls=stats.merge_check_calls,
        base_seconds=max(0.0, elapsed - extractor.stats.backend_seconds),
        backend_seconds=extractor.stats.backend_seconds,
        estimated_backend_seconds=calls * estimated_call_latency,
    )
    return BenchRun(report, predicted, truth, list(records), outcomes, engine)


# ---- structured CSV output ----


def write_structured_csv(
    path: Path | str,
    rows: Iterable[tuple[int, str, str, str]],
) -> None:
    """Write (LineId, Content, EventId, EventTemplate) rows; deterministic."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(STRUCTURED_COLUMNS)
        for row in rows:
            writer.writerow(row)


def read_result_csv(path: Path | str) -> ParsingResult:
    """Read a structured CSV back into a :class:`ParsingResult`."""
    rows = _read_structured_rows(Path(path))
    try:
        return ParsingResult.from_rows(
            (int(row["LineId"]), row["EventId"], row["EventTemplate"])
            for row in rows
        )
    except ValueError as exc:
        raise DatasetCorrupt(f"{path}: {exc}") from None
