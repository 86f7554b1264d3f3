"""Streaming parse engine: cluster store, template pool, and the main loop.

Per log line: tree search first; a strict hit joins its cluster with zero
model calls.  Otherwise the extractor produces a template.  If the normalized
text is already a pool key the log joins that cluster as a new syntax variant;
else, loose candidates are offered to the merge policy in order; else a new
cluster is born.  Failed extractions are quarantined by token count, never
dropped, so cluster members plus quarantined lines always account for every
processed log.

State round-trips through a versioned JSON document written atomically.  The
prefix tree is an index and is never serialized; loading rebuilds it from the
cluster store.
"""

from __future__ import annotations

import enum
import json
import os
import tempfile
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .extractor.backends import ExtractionUnavailable
from .extractor.pool import ExamplePool, ExtractionExample
from .extractor.service import MergeDecision, TemplateExtractor
from .model import (
    AlignmentError,
    EmptyContentError,
    LogTemplate,
    RawLogRecord,
    SyntaxTemplate,
    all_wildcard_template,
    derive_syntax_template,
    tokenize,
)
from .tree import DEFAULT_DEPTH_CAP, MatchKind, ParseTree

STATE_VERSION = 1


class StateVersionError(ValueError):
    """The state file was written by an incompatible version."""


class StateCorrupt(ValueError):
    """The state file is unreadable or structurally wrong."""


class ParseEvent(enum.Enum):
    STRICT_HIT = "strict_hit"
    VARIANT_ADDED = "variant_added"
    MERGED = "merged"
    NEW_CLUSTER = "new_cluster"
    QUARANTINED = "quarantined"


@dataclass(frozen=True)
class ParseOutcome:
    line_id: int
    cluster_id: int | None
    event: ParseEvent
    llm_calls_used: int


class LogCluster:
    """One event template and the logs assigned to it.

    ``syntax_variants`` maps token count to the variants of that length;
    variants are only ever added (old ones still route logs correctly after a
    template merge).  Members are ids only; ``sample_content`` keeps the first
    member's text for merge prompts and calibration review.
    """

    __slots__ = (
        "id",
        "log_template",
        "syntax_variants",
        "member_ids",
        "sample_content",
        "embedding",
        "flagged",
    )

    def __init__(
        self,
        cluster_id: int,
        log_template: LogTemplate,
        sample_content: str,
        embedding: np.ndarray | None = None,
        flagged: bool = False,
    ):
        self.id = cluster_id
        self.log_template = log_template
        self.syntax_variants: dict[int, list[SyntaxTemplate]] = {}
        self.member_ids: list[int] = []
        self.sample_content = sample_content
        self.embedding = embedding
        self.flagged = flagged

    @property
    def size(self) -> int:
        return len(self.member_ids)

    def add_member(self, line_id: int) -> None:
        self.member_ids.append(line_id)

    def add_variant(self, variant: SyntaxTemplate) -> bool:
        """Record a variant; returns False if an equal one already exists."""
        existing = self.syntax_variants.setdefault(variant.token_count, [])
        if variant in existing:
            return False
        existing.append(variant)
        return True


@dataclass
class EngineStats:
    logs_processed: int = 0
    clusters: int = 0
    quarantined: int = 0
    extraction_calls: int = 0
    merge_verification_calls: int = 0
    merge_check_calls: int = 0
    events: dict[str, int] = field(default_factory=dict)
    wall_seconds: float = 0.0

    def to_dict(self, include_timing: bool = True) -> dict:
        payload = {
            "logs_processed": self.logs_processed,
            "clusters": self.clusters,
            "quarantined": self.quarantined,
            "extraction_calls": self.extraction_calls,
            "merge_verification_calls": self.merge_verification_calls,
            "merge_check_calls": self.merge_check_calls,
            "events": dict(self.events),
        }
        if include_timing:
            payload["wall_seconds"] = self.wall_seconds
        return payload


# ---- merge policies ----


class MergePolicy(Protocol):
    def decide(
        self, content: str, cluster: LogCluster, extracted: LogTemplate
    ) -> MergeDecision: ...


class NoMergePolicy:
    """Merges disabled; every loose miss becomes a new cluster."""

    def decide(
        self, content: str, cluster: LogCluster, extracted: LogTemplate
    ) -> MergeDecision:
        return MergeDecision(False, None, "merging disabled")


class AutoMergePolicy:
    """Backend-driven merging: verification first, then the applies check."""

    def __init__(self, extractor: TemplateExtractor):
        self._extractor = extractor

    def decide(
        self, content: str, cluster: LogCluster, extracted: LogTemplate
    ) -> MergeDecision:
        logs = [content, cluster.sample_content]
        decision = self._extractor.verify_merge(logs)
        if not decision.merge:
            return decision
        if not self._extractor.check_template_applies(
            decision.unified_template, logs
        ):
            return MergeDecision(False, None, "unified template failed applies check")
        return decision


class InteractiveMergePolicy:
    """A human answers instead of the backend.

    ``ask`` receives (log content, cluster template text, extracted template
    text) and returns the unified template text, or None to decline.
    """

    def __init__(self, ask: Callable[[str, str, str], str | None]):
        self._ask = ask

    def decide(
        self, content: str, cluster: LogCluster, extracted: LogTemplate
    ) -> MergeDecision:
        answer = self._ask(content, cluster.log_template.text, extracted.text)
        if answer is None or not answer.strip():
            return MergeDecision(False, None, "declined interactively")
        from .model import normalize_template

        try:
            unified = normalize_template(answer)
        except ValueError:
            return MergeDecision(False, None, "unusable interactive template")
        if unified.is_all_variable:
            return MergeDecision(False, None, "interactive template lacks static text")
        return MergeDecision(True, unified, "approved interactively")


@dataclass(frozen=True)
class MergeSuggestion:
    cluster_a: int
    cluster_b: int
    score: float


# ---- engine ----


class ParserEngine:
    def __init__(
        self,
        extractor: TemplateExtractor,
        depth_cap: int = DEFAULT_DEPTH_CAP,
        merge_policy: MergePolicy | None = None,
    ):
        self.extractor = extractor
        self.merge_policy: MergePolicy = (
            merge_policy if merge_policy is not None else AutoMergePolicy(extractor)
        )
        self.clusters: dict[int, LogCluster] = {}
        self.template_pool: dict[str, int] = {}
        self.tree = ParseTree(depth_cap=depth_cap)
        self.quarantine: dict[int, list[int]] = {}
        self._next_cluster_id = 1
        self._logs_processed = 0
        self._event_counts: dict[str, int] = {e.value: 0 for e in ParseEvent}
        self._wall_seconds = 0.0

    # ---- main loop ----

    def process_line(
        self, line_id: int, content: str, raw: str | None = None
    ) -> ParseOutcome:
        record = RawLogRecord(
            line_id=line_id, raw=raw if raw is not None else content, content=content
        )
        return self.process_log(record)

    def process_log(self, record: RawLogRecord) -> ParseOutcome:
        started = time.perf_counter()
        calls_before = self._llm_calls_total()
        try:
            outcome = self._process(record, calls_before)
        finally:
            self._wall_seconds += time.perf_counter() - started
        self._logs_processed += 1
        self._event_counts[outcome.event.value] += 1
        return outcome

    def _process(self, record: RawLogRecord, calls_before: int) -> ParseOutcome:
        try:
            tokens = tokenize(record.content)
        except EmptyContentError:
            return self._quarantine(record, token_count=0, calls_before=calls_before)

        result = self.tree.search(tokens, self.clusters)
        if result.kind is MatchKind.STRICT:
            cluster = self.clusters[result.strict_cluster]
            cluster.add_member(record.line_id)
            return ParseOutcome(
                record.line_id, cluster.id, ParseEvent.STRICT_HIT, llm_calls_used=0
            )

        try:
            template = self.extractor.extract_template(record.content)
        except ExtractionUnavailable as exc:
            warnings.warn(
                f"line {record.line_id} quarantined: {exc}", stacklevel=2
            )
            return self._quarantine(
                record, token_count=len(tokens), calls_before=calls_before
            )

        pool_hit = self.template_pool.get(template.text)
        if pool_hit is not None:
            cluster = self.clusters[pool_hit]
            self._attach_variant(cluster, tokens, template)
            cluster.add_member(record.line_id)
            return ParseOutcome(
                record.line_id,
                cluster.id,
                ParseEvent.VARIANT_ADDED,
                llm_calls_used=self._llm_calls_total() - calls_before,
            )

        if result.kind is MatchKind.LOOSE:
            for candidate_id in result.loose_candidates:
                cluster = self.clusters[candidate_id]
                decision = self.merge_policy.decide(record.content, cluster, template)
                if not decision.merge:
                    continue
                cluster.log_template = decision.unified_template
                self._attach_variant(cluster, tokens, decision.unified_template)
                # The merged key joins the pool; old keys stay valid.
                self.template_pool[decision.unified_template.text] = cluster.id
                cluster.add_member(record.line_id)
                return ParseOutcome(
                    record.line_id,
                    cluster.id,
                    ParseEvent.MERGED,
                    llm_calls_used=self._llm_calls_total() - calls_before,
                )

        cluster = self._create_cluster(record, tokens, template)
        return ParseOutcome(
            record.line_id,
            cluster.id,
            ParseEvent.NEW_CLUSTER,
            llm_calls_used=self._llm_calls_total() - calls_before,
        )

    def _quarantine(
        self, record: RawLogRecord, token_count: int, calls_before: int
    ) -> ParseOutcome:
        self.quarantine.setdefault(token_count, []).append(record.line_id)
        return ParseOutcome(
            record.line_id,
            None,
            ParseEvent.QUARANTINED,
            llm_calls_used=self._llm_calls_total() - calls_before,
        )

    def _derive_variant(
        self, tokens: Sequence[str], template: LogTemplate
    ) -> tuple[SyntaxTemplate, bool]:
        try:
            return derive_syntax_template(tokens, template), True
        except AlignmentError:
            return all_wildcard_template(len(tokens)), False

    def _attach_variant(
        self, cluster: LogCluster, tokens: Sequence[str], template: LogTemplate
    ) -> None:
        variant, aligned = self._derive_variant(tokens, template)
        if not aligned:
            cluster.flagged = True
        if cluster.add_variant(variant):
            self.tree.insert(variant, cluster.id)

    def _create_cluster(
        self, record: RawLogRecord, tokens: Sequence[str], template: LogTemplate
    ) -> LogCluster:
        variant, aligned = self._derive_variant(tokens, template)
        cluster = LogCluster(
            self._next_cluster_id,
            template,
            sample_content=record.content,
            embedding=self.extractor.embed(record.content),
            flagged=not aligned or template.is_all_variable,
        )
        self._next_cluster_id += 1
        cluster.add_variant(variant)
        cluster.add_member(record.line_id)
        self.clusters[cluster.id] = cluster
        self.template_pool[template.text] = cluster.id
        self.tree.insert(variant, cluster.id)
        return cluster

    def _llm_calls_total(self) -> int:
        stats = self.extractor.stats
        return (
            stats.extraction_calls
            + stats.merge_verification_calls
            + stats.merge_check_calls
        )

    # ---- reporting ----

    @property
    def stats(self) -> EngineStats:
        return EngineStats(
            logs_processed=self._logs_processed,
            clusters=len(self.clusters),
            quarantined=sum(len(ids) for ids in self.quarantine.values()),
            extraction_calls=self.extractor.stats.extraction_calls,
            merge_verification_calls=self.extractor.stats.merge_verification_calls,
            merge_check_calls=self.extractor.stats.merge_check_calls,
            events=dict(self._event_counts),
            wall_seconds=self._wall_seconds,
        )

    # ---- calibration ----

    def suggest_post_merges(self, floor: float = 0.8) -> list[MergeSuggestion]:
        """Cluster pairs whose embedding cosine reaches the floor, best first."""
        embedded = [
            (cid, cluster.embedding)
            for cid, cluster in sorted(self.clusters.items())
            if cluster.embedding is not None
        ]
        suggestions = []
        for i, (id_a, vec_a) in enumerate(embedded):
            for id_b, vec_b in embedded[i + 1 :]:
                score = float(vec_a @ vec_b)
                if score >= floor:
                    suggestions.append(MergeSuggestion(id_a, id_b, score))
        suggestions.sort(key=lambda s: (-s.score, s.cluster_a, s.cluster_b))
        return suggestions

    def merge_clusters(
        self, keep_id: int, absorb_id: int, unified_template: LogTemplate
    ) -> LogCluster:
        """Fold one cluster into another (calibration-approved merge)."""
        if keep_id == absorb_id:
            raise ValueError("cannot merge a cluster with itself")
        if unified_template.is_all_variable:
            raise ValueError("a unified template needs static text")
        keep = self.clusters[keep_id]
        absorb = self.clusters[absorb_id]
        keep.log_template = unified_template
        for variants in absorb.syntax_variants.values():
            for variant in variants:
                keep.add_variant(variant)
                # Re-route the absorbed path whether or not the variant is new.
                self.tree.insert(variant, keep.id)
        keep.member_ids.extend(absorb.member_ids)
        keep.flagged = keep.flagged or absorb.flagged
        del self.clusters[absorb_id]
        for text, cid in list(self.template_pool.items()):
            if cid == absorb_id:
                self.template_pool[text] = keep_id
        self.template_pool[unified_template.text] = keep_id
        self.tree.prune_stale(self.clusters)
        return keep

    # ---- persistence ----

    def save_state(self, path: str | Path) -> None:
        """Write the versioned state document atomically (temp + rename)."""
        path = Path(path)
        payload = {
            "version": STATE_VERSION,
            "depth_cap": self.tree.depth_cap,
            "next_cluster_id": self._next_cluster_id,
            "clusters": [
                _cluster_payload(self.clusters[cid]) for cid in sorted(self.clusters)
            ],
            "template_pool": self.template_pool,
            "quarantine": {
                str(count): ids for count, ids in sorted(self.quarantine.items())
            },
            "example_pool": _pool_payload(self.extractor.pool),
            "stats": {
                **self.stats.to_dict(include_timing=False),
                **self.extractor.stats.to_dict(),
            },
        }
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        fd, tmp_name = tempfile.mkstemp(
            dir=path.parent or Path("."), prefix=path.name, suffix=".tmp"
        )
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                handle.write(text)
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise

    @classmethod
    def load_state(
        cls,
        path: str | Path,
        extractor: TemplateExtractor,
        merge_policy: MergePolicy | None = None,
    ) -> "ParserEngine":
        """Restore clusters, pools, and counters; the tree is rebuilt."""
        try:
            with open(path, encoding="utf-8") as handle:
                payload = json.load(handle)
        except (OSError, ValueError) as exc:
            raise StateCorrupt(f"cannot read state file {path}: {exc}") from None
        if not isinstance(payload, dict) or "version" not in payload:
            raise StateCorrupt(f"state file {path} has no version field")
        if payload["version"] != STATE_VERSION:
            raise StateVersionError(
                f"state version {payload['version']}, expected {STATE_VERSION}"
            )
        try:
            engine = cls(
                extractor,
                depth_cap=payload["depth_cap"],
                merge_policy=merge_policy,
            )
            for item in payload["clusters"]:
                cluster = _cluster_from_payload(item)
                engine.clusters[cluster.id] = cluster
            engine.template_pool = {
                str(text): int(cid) for text, cid in payload["template_pool"].items()
            }
            engine.quarantine = {
                int(count): [int(i) for i in ids]
                for count, ids in payload["quarantine"].items()
            }
            engine._next_cluster_id = int(payload["next_cluster_id"])
            extractor.pool = _pool_from_payload(
                payload["example_pool"], extractor.embedder
            )
            stats = payload["stats"]
            engine._logs_processed = int(stats["logs_processed"])
            engine._event_counts.update(
                {str(k): int(v) for k, v in stats["events"].items()}
            )
            extractor.stats.extraction_calls = int(stats["extraction_calls"])
            extractor.stats.merge_verification_calls = int(
                stats["merge_verification_calls"]
            )
            extractor.stats.merge_check_calls = int(stats["merge_check_calls"])
            extractor.stats.empty_extraction_fallbacks = int(
                stats.get("empty_extraction_fallbacks", 0)
            )
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise StateCorrupt(f"state file {path} is malformed: {exc!r}") from None
        engine.tree = ParseTree.rebuild(engine.clusters, depth_cap=engine.tree.depth_cap)
        return engine


def _cluster_payload(cluster: LogCluster) -> dict:
    return {
        "id": cluster.id,
        "template": cluster.log_template.text,
        "variants": {
            str(count): [list(v.entries) for v in variants]
            for count, variants in sorted(cluster.syntax_variants.items())
        },
        "member_ids": cluster.member_ids,
        "sample": cluster.sample_content,
        "embedding": None
        if cluster.embedding is None
        else [float(x) for x in cluster.embedding],
        "flagged": cluster.flagged,
    }


def _cluster_from_payload(item: dict) -> LogCluster:
    cluster = LogCluster(
        int(item["id"]),
        LogTemplate(item["template"]),
        sample_content=item["sample"],
        embedding=None
        if item["embedding"] is None
        else np.asarray(item["embedding"], dtype=np.float64),
        flagged=bool(item["flagged"]),
    )
    for count, variants in item["variants"].items():
        for entries in variants:
            variant = SyntaxTemplate(tuple(entries))
            if variant.token_count != int(count):
                raise ValueError(
                    f"variant length {variant.token_count} filed under {count}"
                )
            cluster.add_variant(variant)
    cluster.member_ids = [int(i) for i in item["member_ids"]]
    return cluster


def _pool_payload(pool: ExamplePool) -> dict:
    return {
        "seed_count": pool.seed_count,
        "capacity": pool.capacity,
        "examples": [
            {
                "log": ex.log,
                "template": ex.template,
                "embedding": [float(x) for x in ex.embedding],
            }
            for ex in pool.examples
        ],
    }


def _pool_from_payload(payload: dict, embedder) -> ExamplePool:
    examples = [
        ExtractionExample(
            item["log"],
            item["template"],
            np.asarray(item["embedding"], dtype=np.float64),
        )
        for item in payload["examples"]
    ]
    return ExamplePool.restore(
        embedder,
        examples,
        seed_count=int(payload["seed_count"]),
        capacity=int(payload["capacity"]),
    )
