"""Deterministic synthetic log corpora for the test suite.

Every template starts with a unique static head token (``svc00``..) so no log
of one template can strict-match another template's variants, and every slot
value is a single whitespace-free token so each template derives exactly one
token-aligned variant.  Both properties are load-bearing for the closure and
call-count tests; keep them if you add shapes.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from pathlib import Path

from logmill.bench import DatasetSpec

LOG_FORMAT = "<Date> <Time> <Level> <Content>"
_LEVELS = ("INFO", "WARN", "ERROR")

# single-token value makers per slot category
_MAKERS = {
    "OID": lambda rng: f"obj_{rng.randrange(1_000_000)}",
    "LOI": lambda rng: "/10.%d.%d.%d:%d"
    % (rng.randrange(256), rng.randrange(256), rng.randrange(256),
       rng.randrange(1024, 65536)),
    "OBN": lambda rng: str(rng.randrange(1, 5000)),
    "TID": lambda rng: "%02d:%02d:%02d"
    % (rng.randrange(24), rng.randrange(60), rng.randrange(60)),
    "SID": lambda rng: f"sess-{rng.randrange(16**6):06x}",
    "TDA": lambda rng: f"{rng.randrange(1, 10_000)}ms",
    "CRS": lambda rng: f"core{rng.randrange(64)}",
    "OBA": lambda rng: f"{rng.random() * 100:.2f}",
    "STC": lambda rng: str(rng.randrange(100, 600)),
    "OTP": lambda rng: rng.choice(("IDLE", "BUSY", "DOWN", "PAUSED")),
}

# each shape is a tuple of static words and {CAT} slots; the unique head is
# prepended at build time.  two shapes use a compound blk_{OID} token and one
# is fully static.
_SHAPES = [
    ("worker", "{CRS}", "finished", "batch", "{OBN}", "in", "{TDA}"),
    ("request", "from", "{LOI}", "returned", "status", "{STC}"),
    ("session", "{SID}", "opened", "for", "user", "{OID}"),
    ("copy", "{OID}", "to", "{LOI}", "took", "{TDA}"),
    ("queue", "depth", "is", "{OBN}", "at", "{TID}"),
    ("heartbeat", "state", "{OTP}", "load", "{OBA}"),
    ("deleting", "block", "blk_{OID}", "from", "{LOI}"),
    ("verified", "blk_{OID}", "checksum", "ok"),
    ("cache", "flush", "complete"),
    ("retry", "{OBN}", "of", "{OBN}", "for", "{SID}"),
    ("latency", "{TDA}", "over", "threshold", "{TDA}"),
    ("scheduler", "moved", "{OID}", "to", "core", "{CRS}"),
]


@dataclass(frozen=True)
class SynthTemplate:
    event_id: str
    head: str
    parts: tuple[str, ...]

    @property
    def text(self) -> str:
        """Ground-truth label with category tokens."""
        out = [self.head]
        for part in self.parts:
            out.append(part.replace("{", "<").replace("}", ">"))
        return " ".join(out)

    def render(self, rng: random.Random) -> str:
        out = [self.head]
        for part in self.parts:
            if "{" in part:
                prefix, rest = part.split("{", 1)
                category, suffix = rest.split("}", 1)
                out.append(prefix + _MAKERS[category](rng) + suffix)
            else:
                out.append(part)
        return " ".join(out)


def make_templates(n: int = 50) -> list[SynthTemplate]:
    return [
        SynthTemplate(
            event_id=f"E{i:02d}",
            head=f"svc{i:02d}",
            parts=_SHAPES[i % len(_SHAPES)],
        )
        for i in range(n)
    ]


@dataclass(frozen=True)
class SynthLine:
    line_id: int
    content: str
    event_id: str
    template: str


def make_stream(
    n_lines: int, templates: list[SynthTemplate], seed: int
) -> list[SynthLine]:
    """A shuffled stream where every template appears at least once."""
    rng = random.Random(seed)
    picks = list(range(len(templates)))
    picks += [rng.randrange(len(templates)) for _ in range(n_lines - len(picks))]
    rng.shuffle(picks)
    lines = []
    for line_id, idx in enumerate(picks[:n_lines], start=1):
        tpl = templates[idx]
        lines.append(
            SynthLine(line_id, tpl.render(rng), tpl.event_id, tpl.text)
        )
    return lines


def labels_of(lines: list[SynthLine]) -> dict[str, str]:
    return {line.content: line.template for line in lines}


def write_loghub(
    directory: Path, name: str, lines: list[SynthLine]
) -> DatasetSpec:
    """Write raw .log + structured CSV + templates CSV in loghub-2k layout."""
    directory.mkdir(parents=True, exist_ok=True)
    log_path = directory / f"{name}.log"
    structured_path = directory / f"{name}_structured.csv"
    templates_path = directory / f"{name}_templates.csv"

    rng = random.Random(hash(name) & 0xFFFF)
    with open(log_path, "w", encoding="utf-8") as handle:
        for line in lines:
            stamp = "%02d:%02d:%02d" % (
                rng.randrange(24), rng.randrange(60), rng.randrange(60)
            )
            level = _LEVELS[line.line_id % len(_LEVELS)]
            handle.write(f"2026-08-15 {stamp} {level} {line.content}\n")

    with open(structured_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("LineId", "Content", "EventId", "EventTemplate"))
        for line in lines:
            writer.writerow((line.line_id, line.content, line.event_id,
                             line.template))

    seen: dict[str, str] = {}
    for line in lines:
        seen.setdefault(line.event_id, line.template)
    with open(templates_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("EventId", "EventTemplate"))
        for event_id in sorted(seen):
            writer.writerow((event_id, seen[event_id]))

    return DatasetSpec(
        name=name,
        log_path=log_path,
        structured_path=structured_path,
        log_format=LOG_FORMAT,
        templates_path=templates_path,
    )
