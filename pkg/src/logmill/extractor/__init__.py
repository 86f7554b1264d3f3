"""LLM-backed template extraction: prompts, backends, shot pool, service."""

from .backends import (
    ChatBackend,
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
    request_hash,
)
from .embedding import DEFAULT_DIM, EmbeddingDimError, HashingEmbedder
from .pool import (
    DEFAULT_CAPACITY,
    DEFAULT_SEEDS,
    DEFAULT_SHOTS,
    ExamplePool,
    ExtractionExample,
    load_seeds,
)
from .prompts import (
    MERGE_VERIFICATION_FORMAT,
    TASK_HEADER,
    build_extraction_prompt,
    build_finetune_record,
    build_merge_check_prompt,
    build_merge_verification_prompt,
)
from .service import (
    EmptyExtraction,
    ExtractorStats,
    MergeDecision,
    MergeParseError,
    TemplateExtractor,
    parse_extraction_response,
    parse_merge_verification_response,
    parse_yes_no_response,
)

__all__ = [
    "ChatBackend",
    "DEFAULT_CAPACITY",
    "DEFAULT_DIM",
    "DEFAULT_SEEDS",
    "DEFAULT_SHOTS",
    "EmbeddingDimError",
    "EmptyExtraction",
    "ExamplePool",
    "ExtractionExample",
    "ExtractionUnavailable",
    "ExtractorStats",
    "HashingEmbedder",
    "MERGE_VERIFICATION_FORMAT",
    "MergeDecision",
    "MergeParseError",
    "OracleBackend",
    "OracleMiss",
    "RemoteChatBackend",
    "RemoteEmbedder",
    "ReplayBackend",
    "ReplayCorrupt",
    "ReplayMiss",
    "ReplayRecorder",
    "RetryPolicy",
    "TASK_HEADER",
    "TemplateExtractor",
    "build_extraction_prompt",
    "build_finetune_record",
    "build_merge_check_prompt",
    "build_merge_verification_prompt",
    "load_seeds",
    "parse_extraction_response",
    "parse_merge_verification_response",
    "parse_yes_no_response",
    "request_hash",
]
