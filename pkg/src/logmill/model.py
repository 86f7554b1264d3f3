"""Core domain types and the template algebra.

Log content is tokenized on whitespace runs.  Two template forms coexist:

* :class:`LogTemplate` is the semantic form an extractor produces: free text
  in which every dynamic variable is the literal placeholder ``<*>``.  One
  placeholder may stand for several whitespace-separated tokens.
* :class:`SyntaxTemplate` is the token-aligned form used for matching: exactly
  one entry per token.  An entry is either the literal token, ``<*>``, or a
  mixed pattern such as ``blk_<*>``.

``derive_syntax_template`` converts the first form into the second for a
concrete token sequence; ``strict_match``/``loose_match`` compare the second
form against token sequences.
"""

from __future__ import annotations

import enum
import re
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

PLACEHOLDER = "<*>"


class VariableCategory(enum.Enum):
    """The closed set of dynamic-variable categories used by the extractor."""

    OID = "OID"  # object ids (session ids, user ids)
    LOI = "LOI"  # location indicators (paths, URIs, IP addresses)
    OBN = "OBN"  # object names (domains, tasks, jobs)
    TID = "TID"  # type indicators
    SID = "SID"  # switch indicators (numerical only)
    TDA = "TDA"  # time or duration of an action
    CRS = "CRS"  # computing resources (memory, disk, bytes)
    OBA = "OBA"  # object amounts (numbers of errors, nodes, ...)
    STC = "STC"  # status codes (numerical only)
    OTP = "OTP"  # all other parameter kinds

    @property
    def token(self) -> str:
        return f"<{self.value}>"


# Category tokens (plus the generic <XXX> an extractor is told to emit) that
# normalization rewrites to the placeholder.
_CATEGORY_TOKEN = re.compile(
    "<(?:%s|XXX)>" % "|".join(c.value for c in VariableCategory)
)
# Placeholder runs separated by nothing or only whitespace collapse to one.
_ADJACENT_PLACEHOLDERS = re.compile(r"<\*>(?:\s*<\*>)+")


class EmptyContentError(ValueError):
    """Raised when log content is empty or whitespace-only."""


class AlignmentError(ValueError):
    """Raised when a template's static text cannot be aligned to the tokens."""

    def __init__(self, template_text: str, joined_tokens: str):
        super().__init__(
            f"cannot align template {template_text!r} to log {joined_tokens!r}"
        )
        self.template_text = template_text
        self.joined_tokens = joined_tokens


class AllVariableTemplateWarning(UserWarning):
    """A normalized template contains no static text (kept, but suspect)."""


def tokenize(content: str) -> list[str]:
    """Split log content on whitespace runs.

    Raises:
        EmptyContentError: if ``content`` has no non-whitespace characters.
    """
    tokens = content.split()
    if not tokens:
        raise EmptyContentError("log content is empty or whitespace-only")
    return tokens


@dataclass(frozen=True)
class RawLogRecord:
    """One log line: 1-based position in the stream, raw line, message body."""

    line_id: int
    raw: str
    content: str

    def __post_init__(self) -> None:
        if self.line_id < 1:
            raise ValueError(f"line_id must be >= 1, got {self.line_id}")


@dataclass(frozen=True)
class TokenizedLog:
    record: RawLogRecord
    tokens: tuple[str, ...]

    @classmethod
    def from_record(cls, record: RawLogRecord) -> "TokenizedLog":
        return cls(record=record, tokens=tuple(tokenize(record.content)))


@dataclass(frozen=True)
class LogTemplate:
    """Semantic template text; every variable is the literal ``<*>``."""

    text: str

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("template text must be non-empty")
        if _CATEGORY_TOKEN.search(self.text):
            raise ValueError(
                f"category tokens must be normalized away first: {self.text!r}"
            )

    @property
    def placeholder_count(self) -> int:
        return self.text.count(PLACEHOLDER)

    @property
    def is_all_variable(self) -> bool:
        """True when nothing but placeholders and whitespace remains."""
        return not self.text.replace(PLACEHOLDER, "").strip()


@dataclass(frozen=True)
class SyntaxTemplate:
    """Token-aligned template: one entry per token."""

    entries: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValueError("syntax template must have at least one entry")
        for entry in self.entries:
            # one entry per whitespace-delimited token, so neither is legal
            if not entry or entry.split() != [entry]:
                raise ValueError(f"invalid syntax entry: {entry!r}")

    @property
    def token_count(self) -> int:
        return len(self.entries)


def all_wildcard_template(token_count: int) -> SyntaxTemplate:
    """The all-``<*>`` fallback used when alignment fails."""
    return SyntaxTemplate((PLACEHOLDER,) * token_count)


def normalize_template(raw: str) -> LogTemplate:
    """Canonicalize extractor output into a :class:`LogTemplate`.

    Category tokens (``<OID>`` ... ``<OTP>``) and the generic ``<XXX>`` become
    ``<*>``; placeholder runs separated only by whitespace collapse to a single
    placeholder; surrounding whitespace is trimmed.  Idempotent.

    A result consisting solely of placeholders is kept but triggers an
    :class:`AllVariableTemplateWarning` so calibration can review it.
    """
    if not raw or not raw.strip():
        raise ValueError("template text is empty")
    text = _CATEGORY_TOKEN.sub(PLACEHOLDER, raw)
    text = _ADJACENT_PLACEHOLDERS.sub(PLACEHOLDER, text)
    template = LogTemplate(text.strip())
    if template.is_all_variable:
        warnings.warn(
            f"template has no static text: {raw!r}",
            AllVariableTemplateWarning,
            stacklevel=2,
        )
    return template


def derive_syntax_template(
    tokens: Sequence[str], template: LogTemplate
) -> SyntaxTemplate:
    """Align a semantic template to concrete tokens, one entry per token.

    The template's static text (whitespace runs collapsed, mirroring
    ``tokenize``) must cover the space-joined tokens exactly, with each
    placeholder consuming a non-empty character run.  Placeholders take the
    leftmost, shortest span that admits a full match, so a placeholder spanning
    k tokens yields k consecutive ``<*>`` entries and static text embedded in a
    token yields a mixed entry such as ``blk_<*>``.

    Raises:
        AlignmentError: if no such alignment exists.
    """
    if not tokens:
        raise EmptyContentError("cannot align a template to zero tokens")
    joined = " ".join(tokens)
    text = " ".join(template.text.split())
    statics = text.split(PLACEHOLDER)
    if len(statics) == 1:
        if text != joined:
            raise AlignmentError(template.text, joined)
        return SyntaxTemplate(tuple(tokens))
    pattern = "(.+?)".join(re.escape(part) for part in statics)
    match = re.fullmatch(pattern, joined)
    if match is None:
        raise AlignmentError(template.text, joined)

    variable = bytearray(len(joined))
    for group in range(1, len(statics)):
        start, end = match.span(group)
        for i in range(start, end):
            variable[i] = 1

    entries = []
    pos = 0
    for token in tokens:
        end = pos + len(token)
        parts: list[str] = []
        in_run = False
        for i in range(pos, end):
            if variable[i]:
                if not in_run:
                    parts.append(PLACEHOLDER)
                    in_run = True
            else:
                parts.append(joined[i])
                in_run = False
        entries.append("".join(parts))
        pos = end + 1  # skip the joining space
    return SyntaxTemplate(tuple(entries))


@lru_cache(maxsize=None)
def _entry_pattern(entry: str) -> re.Pattern[str]:
    # <*> stands for any non-empty character run within the token.
    return re.compile(".+".join(re.escape(part) for part in entry.split(PLACEHOLDER)))


def loose_match(template: SyntaxTemplate, tokens: Sequence[str]) -> bool:
    """Token counts equal, and every entry is verbatim-equal or has ``<*>``."""
    if len(tokens) != template.token_count:
        return False
    for entry, token in zip(template.entries, tokens):
        if entry != token and PLACEHOLDER not in entry:
            return False
    return True


def strict_match(template: SyntaxTemplate, tokens: Sequence[str]) -> bool:
    """Loose match with wildcard entries checked character-rigorously.

    Static entries need exact equality; an entry containing ``<*>`` matches a
    token only if its static fragments appear in order with every placeholder
    consuming at least one character.  Strict implies loose.
    """
    if len(tokens) != template.token_count:
        return False
    for entry, token in zip(template.entries, tokens):
        if entry == token:
            continue
        if PLACEHOLDER not in entry:
            return False
        if _entry_pattern(entry).fullmatch(token) is None:
            return False
    return True
