"""Streaming log template mining with a language-model extractor.

The engine groups a log stream into event clusters online.  A prefix tree
over template tokens answers most lines without any model call; the model is
consulted only when a line matches no known template, and its answers are
cached as templates and in-context examples so repeated structures stay
cheap.  The metrics module scores a parse against ground truth, including a
partition-edit distance that stays interpretable when template counts differ.
"""

from .engine import (
    AutoMergePolicy,
    InteractiveMergePolicy,
    NoMergePolicy,
    ParseEvent,
    ParseOutcome,
    ParserEngine,
    StateCorrupt,
    StateVersionError,
)
from .extractor import (
    EmbeddingDimError,
    ExtractionUnavailable,
    HashingEmbedder,
    OracleBackend,
    RemoteChatBackend,
    ReplayBackend,
    ReplayRecorder,
    TemplateExtractor,
)
from .metrics import (
    MetricReport,
    ParsingResult,
    ResultMismatch,
    compute_report,
    f_group,
    f_template,
    format_report_table,
    ggd,
    grouping_accuracy,
    parsing_accuracy,
    partition_distance,
    pgd,
    template_toggle_cost,
)
from .model import (
    AlignmentError,
    AllVariableTemplateWarning,
    EmptyContentError,
    LogTemplate,
    PLACEHOLDER,
    RawLogRecord,
    SyntaxTemplate,
    TokenizedLog,
    VariableCategory,
    derive_syntax_template,
    loose_match,
    normalize_template,
    strict_match,
    tokenize,
)
from .tree import MatchKind, MatchResult, ParseTree

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "AllVariableTemplateWarning",
    "AutoMergePolicy",
    "EmbeddingDimError",
    "EmptyContentError",
    "ExtractionUnavailable",
    "HashingEmbedder",
    "InteractiveMergePolicy",
    "LogTemplate",
    "MatchKind",
    "MatchResult",
    "MetricReport",
    "NoMergePolicy",
    "OracleBackend",
    "PLACEHOLDER",
    "ParseEvent",
    "ParseOutcome",
    "ParserEngine",
    "ParseTree",
    "ParsingResult",
    "RawLogRecord",
    "RemoteChatBackend",
    "ReplayBackend",
    "ReplayRecorder",
    "ResultMismatch",
    "StateCorrupt",
    "StateVersionError",
    "SyntaxTemplate",
    "TemplateExtractor",
    "TokenizedLog",
    "VariableCategory",
    "compute_report",
    "derive_syntax_template",
    "f_group",
    "f_template",
    "format_report_table",
    "ggd",
    "grouping_accuracy",
    "loose_match",
    "normalize_template",
    "parsing_accuracy",
    "partition_distance",
    "pgd",
    "strict_match",
    "template_toggle_cost",
    "tokenize",
    "__version__",
]
