"""Prompt scaffolding for the template extractor.

The wording below is load-bearing: replay files key responses by a hash of the
exact prompt string, and the golden tests pin these bytes.  Do not reflow,
reword, or "fix" anything in the constants (including the misspelling
"anwser" in the merge-verification format block).

Every builder returns a single user-message string; blocks are separated by
one blank line.
"""

from __future__ import annotations

from typing import Sequence

# Task statement shared by the extraction and merge prompts: what counts as a
# dynamic variable, the ten category definitions, and the substitution rules.
TASK_HEADER = (
    "As a log parser, your task is to analyze logs and identify dynamic"
    " variables. These variables are distinct from static parts, which are"
    " hardcoded sections in the logging code. The categories of dynamic"
    " variables are concluded as:"
    "\n\n"
    "Object ID (OID): Includes variables like session IDs and user IDs."
    "\n\n"
    "Location Indicator (LOI): Path information, URIs, and IP addresses."
    "\n\n"
    "Object Name (OBN): Domain names, task names, job names."
    "\n\n"
    "Type Indicator (TID): Category for type indicators."
    "\n\n"
    "Switch Indicator (SID): Category for switch indicators (only numerical"
    " ones)."
    "\n\n"
    "Time/Duration of an Action (TDA): Timespan or duration of actions."
    "\n\n"
    "Computing Resources (CRS): Memory, disk space, number of bytes."
    "\n\n"
    "Object Amount (OBA): Number of errors, nodes, etc."
    "\n\n"
    "Status Code (STC): Error codes (only numerical ones)."
    "\n\n"
    "Other Parameters (OTP): All other types of variables."
    "\n\n"
    "To parse the logs, substitute dynamic variables with their respective"
    " category tokens, denoted by <XXX>. Everything outside the <XXX> should"
    " remain exactly unchanged! Do not fix any typo! If a variable comprises"
    " several smaller, fine-grained variables, don't dissect it. Instead,"
    " replace the entire compound variable with a single <XXX> token. Do not"
    " substitute all content in the log as a variable; only genuine dynamic"
    " variables should be replaced."
)

# Output-format block of the merge-verification prompt.  The braced fields and
# the ellipsis are literal prompt text describing the expected answer shape.
MERGE_VERIFICATION_FORMAT = (
    "Given the following logs, output the parse result for each of them"
    " first, then determine whether they are instances from the same event"
    " template. The output should use the following format:"
    "\n\n"
    "EventTemplate_1: {parse result for Log_1}"
    "\n\n"
    "EventTemplate_2: {parse result for Log_2}"
    "\n\n"
    "..."
    "\n\n"
    "EventTemplate_N: {parse result for Log_N}"
    "\n\n"
    "Reason: {brief reason whether they should be unified}"
    "\n\n"
    'Answer: {"Yes" or "No"}'
    "\n\n"
    "Unified Template: {one unified template if yes. Make sure there are"
    ' static parts in the template. "None" if the anwser is no}'
)


def build_extraction_prompt(
    log: str, shots: Sequence[tuple[str, str]] = ()
) -> str:
    """Extraction prompt: task header, shots, then the query log.

    ``shots`` are (log, category-form template) pairs.  With zero shots the
    "Examples:" header stays and the query follows it directly.  The prompt
    ends with the bare "Parsed Log: " marker the completion continues from.
    """
    parts = [TASK_HEADER, "Examples:"]
    for shot_log, shot_template in shots:
        parts.append(f"Log: {shot_log}")
        parts.append(f"Parsed Log: {shot_template}")
    parts.append(f"Log: {log}")
    parts.append("Parsed Log: ")
    return "\n\n".join(parts)


def build_finetune_record(log: str, template: str) -> str:
    """Instruction-tuning record pairing one log with its template."""
    return (
        "Below is an instruction that describes a task. Write a response that"
        " appropriately completes the request"
        "\n\n"
        "### Instruction:"
        "\n\n"
        "Analyze the input log and identify dynamic variables. Substitute"
        " dynamic variables with <XXX>."
        "\n\n"
        "### Input:"
        "\n\n"
        f"{log}"
        "\n\n"
        "### Response:"
        "\n\n"
        f"{template}"
        "\n\n"
        "### End"
    )


def _numbered_logs(logs: Sequence[str]) -> list[str]:
    if len(logs) < 2:
        raise ValueError("merge prompts need at least two logs")
    return [f"Log_{i}: {log}" for i, log in enumerate(logs, start=1)]


def build_merge_verification_prompt(logs: Sequence[str]) -> str:
    """Ask whether the given logs are instances of one event template."""
    parts = [TASK_HEADER, MERGE_VERIFICATION_FORMAT, *_numbered_logs(logs)]
    return "\n\n".join(parts)


def build_merge_check_prompt(template_text: str, logs: Sequence[str]) -> str:
    """Ask whether an already-unified template applies to the given logs."""
    parts = [
        TASK_HEADER,
        f'Does the template: "{template_text}" apply to the following logs?'
        " Please answer with yes or no.",
        *_numbered_logs(logs),
        "Answer:",
    ]
    return "\n\n".join(parts)
