"""The extractor service: prompt assembly, backend calls, response parsing.

One instance owns the chat backend, the embedder, and the shot pool, and
counts every backend call, so an engine run can report exactly how many model
invocations the stream cost.
"""

from __future__ import annotations

import re
import time
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..model import (
    AllVariableTemplateWarning,
    LogTemplate,
    normalize_template,
)
from .backends import ChatBackend
from .pool import DEFAULT_SHOTS, ExamplePool
from .embedding import HashingEmbedder
from .prompts import (
    build_extraction_prompt,
    build_merge_check_prompt,
    build_merge_verification_prompt,
)


class EmptyExtraction(ValueError):
    """The backend response contains no template text."""


class MergeParseError(ValueError):
    """A merge-verification response does not follow the answer format."""


@dataclass(frozen=True)
class MergeDecision:
    """Outcome of a merge verification.

    ``merge`` is True only when the backend affirmed the merge AND supplied a
    unified template with at least some static text.
    """

    merge: bool
    unified_template: LogTemplate | None = None
    reason: str = ""

    def __post_init__(self) -> None:
        if self.merge:
            if self.unified_template is None:
                raise ValueError("a positive merge decision needs a template")
            if self.unified_template.is_all_variable:
                raise ValueError("a unified template needs static text")


# ---- response parsing ----

_PARSED_MARKER = "Parsed Log:"
_ANSWER_RE = re.compile(r"^\s*Answer\s*:\s*(.+?)\s*$", re.IGNORECASE | re.MULTILINE)
_REASON_RE = re.compile(r"^\s*Reason\s*:\s*(.+?)\s*$", re.IGNORECASE | re.MULTILINE)
_UNIFIED_RE = re.compile(
    r"^\s*Unified Template\s*:\s*(.+?)\s*$", re.IGNORECASE | re.MULTILINE
)
_YES_NO_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


def _clean_template_line(line: str) -> str:
    text = line.strip()
    if len(text) > 1 and text.startswith("`") and text.endswith("`"):
        text = text.strip("`").strip()
    return text


def parse_extraction_response(response: str) -> str:
    """Pull the template line out of a completion.

    Models may echo reasoning or the whole shot list; the template is the
    first non-empty line after the last "Parsed Log:" marker, or the last
    non-empty line when no marker is present.  Code fences are stripped.

    Raises:
        EmptyExtraction: if no template text remains.
    """
    if _PARSED_MARKER in response:
        tail = response.rsplit(_PARSED_MARKER, 1)[1]
        for line in tail.splitlines():
            cleaned = _clean_template_line(line)
            if cleaned:
                return cleaned
        raise EmptyExtraction("nothing after the Parsed Log: marker")
    lines = [_clean_template_line(line) for line in response.splitlines()]
    lines = [line for line in lines if line]
    if not lines:
        raise EmptyExtraction("blank completion")
    return lines[-1]


def _last_match(pattern: re.Pattern[str], text: str) -> str | None:
    found = pattern.findall(text)
    return found[-1] if found else None


def parse_merge_verification_response(response: str) -> MergeDecision:
    """Parse the Answer / Unified Template lines of a verification response.

    A "Yes" whose unified template turns out to be all placeholders is
    downgraded to a no-merge decision rather than an error; a "Yes" without a
    usable template at all is a :class:`MergeParseError`.
    """
    raw_answer = _last_match(_ANSWER_RE, response)
    if raw_answer is None:
        raise MergeParseError("no Answer line in response")
    answer = raw_answer.strip(" \"'{}.").lower()
    reason = _last_match(_REASON_RE, response) or ""
    if answer.startswith("no"):
        return MergeDecision(False, None, reason)
    if not answer.startswith("yes"):
        raise MergeParseError(f"unrecognized answer {raw_answer!r}")

    unified = _last_match(_UNIFIED_RE, response)
    if unified is None:
        raise MergeParseError("Yes answer without a Unified Template line")
    unified = unified.strip().strip('"')
    if not unified or unified.lower() == "none":
        raise MergeParseError("Yes answer with template None")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AllVariableTemplateWarning)
        try:
            template = normalize_template(unified)
        except ValueError as exc:
            raise MergeParseError(f"bad unified template {unified!r}") from exc
    if template.is_all_variable:
        return MergeDecision(False, None, "unified template has no static text")
    return MergeDecision(True, template, reason)


def parse_yes_no_response(response: str) -> bool:
    """Affirmative only for an explicit yes; anything unclear is a no."""
    tail = response.rsplit("Answer:", 1)[-1]
    match = _YES_NO_RE.search(tail)
    return bool(match) and match.group(1).lower() == "yes"


# ---- service ----


@dataclass
class ExtractorStats:
    extraction_calls: int = 0
    merge_verification_calls: int = 0
    merge_check_calls: int = 0
    empty_extraction_fallbacks: int = 0
    backend_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "extraction_calls": self.extraction_calls,
            "merge_verification_calls": self.merge_verification_calls,
            "merge_check_calls": self.merge_check_calls,
            "empty_extraction_fallbacks": self.empty_extraction_fallbacks,
        }


class TemplateExtractor:
    """Turns raw log content into normalized templates via a chat backend."""

    def __init__(
        self,
        backend: ChatBackend,
        embedder=None,
        pool: ExamplePool | None = None,
        shots: int = DEFAULT_SHOTS,
    ):
        self.backend = backend
        self.embedder = embedder if embedder is not None else HashingEmbedder()
        self.pool = pool if pool is not None else ExamplePool(self.embedder)
        self.shots = shots
        self.stats = ExtractorStats()
        self._last_embedding: tuple[str, np.ndarray] | None = None

    def embed(self, content: str) -> np.ndarray:
        # The engine re-asks for the embedding of the log just extracted;
        # memoizing the most recent call avoids embedding it twice.
        if self._last_embedding is not None and self._last_embedding[0] == content:
            return self._last_embedding[1]
        vector = self.embedder.embed(content)
        self._last_embedding = (content, vector)
        return vector

    def _complete(self, prompt: str) -> str:
        started = time.perf_counter()
        try:
            return self.backend.complete(prompt)
        finally:
            self.stats.backend_seconds += time.perf_counter() - started

    def _static_fallback(self, content: str) -> LogTemplate:
        self.stats.empty_extraction_fallbacks += 1
        warnings.warn(
            f"empty extraction twice; treating log as static: {content!r}",
            stacklevel=3,
        )
        text = " ".join(content.split())
        try:
            return LogTemplate(text)
        except ValueError:
            # Content itself contains category-token-shaped text.
            return normalize_template(text)

    def extract_template(self, content: str) -> LogTemplate:
        """One in-context extraction round trip.

        Selects shots, prompts the backend, parses and normalizes the answer,
        and appends (log, raw template) to the shot pool.  An empty completion
        is retried once, then the whole log is kept as a static template and
        flagged.
        """
        embedding = self.embed(content)
        selected = self.pool.select(embedding, self.shots)
        prompt = build_extraction_prompt(
            content, [(ex.log, ex.template) for ex in selected]
        )
        self.stats.extraction_calls += 1
        try:
            raw = parse_extraction_response(self._complete(prompt))
        except EmptyExtraction:
            self.stats.extraction_calls += 1
            try:
                raw = parse_extraction_response(self._complete(prompt))
            except EmptyExtraction:
                return self._static_fallback(content)
        template = normalize_template(raw)
        self.pool.add(content, raw, embedding)
        return template

    def verify_merge(self, logs: Sequence[str]) -> MergeDecision:
        """Ask whether the logs share one template; unparseable means no."""
        prompt = build_merge_verification_prompt(logs)
        self.stats.merge_verification_calls += 1
        response = self._complete(prompt)
        try:
            return parse_merge_verification_response(response)
        except MergeParseError as exc:
            return MergeDecision(False, None, f"unparseable response: {exc}")

    def check_template_applies(
        self, template: LogTemplate, logs: Sequence[str]
    ) -> bool:
        """Gate a proposed unified template against the logs it must cover."""
        if template.is_all_variable:
            return False  # never accept a template without static text
        prompt = build_merge_check_prompt(template.text, logs)
        self.stats.merge_check_calls += 1
        return parse_yes_no_response(self._complete(prompt))
