"""Few-shot example pool for the extraction prompt.

The pool starts with exactly ten seed pairs, one per variable category, and
grows append-only as the extractor parses new logs.  Shot selection is top-k
cosine similarity against the query embedding, ties broken by insertion order,
so selection is reproducible for a fixed pool state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..model import VariableCategory
from .embedding import EmbeddingDimError

DEFAULT_CAPACITY = 10_000
DEFAULT_SHOTS = 3

# One seed per category, in category order.  Overridable via a seeds file, but
# replacements must also cover each category exactly once.
DEFAULT_SEEDS: tuple[tuple[str, str], ...] = (
    (
        "Registered session 4f6f1d42 for user 2291",
        "Registered session <OID> for user <OID>",
    ),
    (
        "Failed to bind to /10.10.34.11:9866",
        "Failed to bind to <LOI>",
    ),
    (
        "Starting job nightly_backup on queue primary",
        "Starting job <OBN> on queue <OBN>",
    ),
    (
        "Mounted filesystem of type ext4 in read-only mode",
        "Mounted filesystem of type <TID> in read-only mode",
    ),
    (
        "Verbose logging switched to 1",
        "Verbose logging switched to <SID>",
    ),
    (
        "Checkpoint completed in 312 ms",
        "Checkpoint completed in <TDA> ms",
    ),
    (
        "Cache resized to 2048 KB",
        "Cache resized to <CRS> KB",
    ),
    (
        "Replicated 8 blocks across 3 nodes",
        "Replicated <OBA> blocks across <OBA> nodes",
    ),
    (
        "Upload rejected with status code 403",
        "Upload rejected with status code <STC>",
    ),
    (
        "Worker heartbeat state changed to IDLE",
        "Worker heartbeat state changed to <OTP>",
    ),
)


@dataclass(frozen=True)
class ExtractionExample:
    """A (log, category-form template) pair plus its embedding."""

    log: str
    template: str
    embedding: np.ndarray


def _seed_categories(seeds: Sequence[tuple[str, str]]) -> list[VariableCategory]:
    categories = []
    for _, template in seeds:
        present = [c for c in VariableCategory if c.token in template]
        if len(present) != 1:
            raise ValueError(
                f"seed template must use exactly one category, got {template!r}"
            )
        categories.append(present[0])
    return categories


class ExamplePool:
    """Append-only shot pool with FIFO eviction of non-seed entries."""

    def __init__(
        self,
        embedder,
        seeds: Sequence[tuple[str, str]] = DEFAULT_SEEDS,
        capacity: int = DEFAULT_CAPACITY,
    ):
        categories = _seed_categories(seeds)
        if len(seeds) != len(VariableCategory) or set(categories) != set(
            VariableCategory
        ):
            raise ValueError(
                "seeds must cover each variable category exactly once "
                f"(got {len(seeds)} seeds for {sorted(c.value for c in set(categories))})"
            )
        if capacity < len(seeds):
            raise ValueError("capacity cannot be smaller than the seed count")
        self._embedder = embedder
        self.capacity = capacity
        self.seed_count = len(seeds)
        self._examples: list[ExtractionExample] = [
            ExtractionExample(log, template, embedder.embed(log))
            for log, template in seeds
        ]
        self._matrix: np.ndarray | None = None

    @classmethod
    def restore(
        cls,
        embedder,
        examples: Sequence[ExtractionExample],
        seed_count: int,
        capacity: int,
    ) -> "ExamplePool":
        """Rebuild a pool from persisted examples, skipping seed validation."""
        if seed_count < 0 or len(examples) < seed_count:
            raise ValueError("pool state is inconsistent with its seed count")
        pool = cls.__new__(cls)
        pool._embedder = embedder
        pool.capacity = capacity
        pool.seed_count = seed_count
        pool._examples = list(examples)
        pool._matrix = None
        return pool

    def __len__(self) -> int:
        return len(self._examples)

    @property
    def examples(self) -> tuple[ExtractionExample, ...]:
        return tuple(self._examples)

    @property
    def dim(self) -> int:
        return int(self._examples[0].embedding.shape[0])

    def add(self, log: str, template: str, embedding: np.ndarray | None = None) -> None:
        """Append one example; evicts the oldest non-seed entry when full."""
        if embedding is None:
            embedding = self._embedder.embed(log)
        if embedding.shape[0] != self.dim:
            raise EmbeddingDimError(
                f"pool dim {self.dim}, example dim {embedding.shape[0]}"
            )
        self._examples.append(ExtractionExample(log, template, embedding))
        if len(self._examples) > self.capacity:
            del self._examples[self.seed_count]  # oldest non-seed
        self._matrix = None

    def select(self, query_embedding: np.ndarray, k: int = DEFAULT_SHOTS) -> list[ExtractionExample]:
        """Top-k by cosine similarity; ties keep insertion order."""
        if k < 0:
            raise ValueError(f"k must be >= 0, got {k}")
        if query_embedding.shape[0] != self.dim:
            raise EmbeddingDimError(
                f"pool dim {self.dim}, query dim {query_embedding.shape[0]}"
            )
        if k == 0:
            return []
        if self._matrix is None:
            self._matrix = np.stack([ex.embedding for ex in self._examples])
        scores = self._matrix @ query_embedding
        # Stable sort on the negated scores keeps ties in insertion order.
        order = np.argsort(-scores, kind="stable")[:k]
        return [self._examples[i] for i in order]


def load_seeds(lines: Iterable[str]) -> list[tuple[str, str]]:
    """Parse a seeds file: tab-separated ``log<TAB>template`` lines."""
    seeds = []
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        if "\t" not in line:
            raise ValueError(f"seeds line {lineno} is not log<TAB>template")
        log, template = line.split("\t", 1)
        seeds.append((log, template))
    return seeds
