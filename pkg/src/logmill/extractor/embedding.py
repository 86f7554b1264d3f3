"""Embedding providers for shot selection.

Offline runs (ground-truth oracle, replay) use the hashing embedder: character
n-grams hashed into a fixed-dimension vector.  It has no vocabulary and no
model weights, so the same text embeds to the same unit vector on every
machine and every run, which is what replay determinism needs.  Remote runs
may use a served embedding model instead (see backends.RemoteEmbedder).
"""

from __future__ import annotations

import hashlib

import numpy as np

DEFAULT_DIM = 64


class EmbeddingDimError(ValueError):
    """Query and pool embeddings have different dimensions."""


class HashingEmbedder:
    """Deterministic character n-gram hashing embedder."""

    def __init__(self, dim: int = DEFAULT_DIM, ngram_sizes: tuple[int, ...] = (2, 3, 4)):
        if dim < 2:
            raise ValueError(f"embedding dim must be >= 2, got {dim}")
        self.dim = dim
        self.ngram_sizes = ngram_sizes

    def embed(self, text: str) -> np.ndarray:
        # Sentinels give short texts at least one bigram and make prefixes and
        # suffixes distinguishable.
        padded = f"\x02{text}\x03"
        vec = np.zeros(self.dim, dtype=np.float64)
        for n in self.ngram_sizes:
            for i in range(len(padded) - n + 1):
                gram = padded[i : i + n]
                digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
                value = int.from_bytes(digest, "big")
                sign = 1.0 if value & 1 else -1.0
                vec[(value >> 1) % self.dim] += sign
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:  # degenerate cancellation; keep the vector unit-length
            vec[0] = 1.0
            return vec
        return vec / norm
