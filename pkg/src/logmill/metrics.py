"""Evaluation metrics for parsed streams.

Grouping metrics compare who-is-with-whom; template metrics additionally
compare what the groups say.  The granularity distances count edit operations
between parsings: the grouping distance is the minimum number of group
merges/splits turning one partition into the other, and the parsing distance
adds per-group-pair token toggles between static and variable designation.

Template comparisons happen on normalized text (placeholders unified, runs
collapsed), mirroring how the engine keys its template pool.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import AbstractSet, Hashable, Iterable, Mapping, Sequence

from .model import AllVariableTemplateWarning, PLACEHOLDER, normalize_template

GroupKey = Hashable


class ResultMismatch(ValueError):
    """The two results do not describe the same set of log lines."""


@dataclass(frozen=True)
class ParsingResult:
    """A full parse of a stream: line -> group, group -> template text."""

    assignment: Mapping[int, GroupKey]
    templates: Mapping[GroupKey, str]

    def __post_init__(self) -> None:
        missing = {g for g in self.assignment.values() if g not in self.templates}
        if missing:
            raise ValueError(f"groups without a template: {sorted(map(str, missing))}")

    @classmethod
    def from_rows(
        cls, rows: Iterable[tuple[int, GroupKey, str]]
    ) -> "ParsingResult":
        """Build from (line_id, group, template) triples.

        A group appearing with two different templates is a contract
        violation (one template per group).
        """
        assignment: dict[int, GroupKey] = {}
        templates: dict[GroupKey, str] = {}
        for line_id, group, template in rows:
            if line_id in assignment:
                raise ValueError(f"duplicate line id {line_id}")
            assignment[line_id] = group
            if group in templates and templates[group] != template:
                raise ValueError(f"group {group!r} has conflicting templates")
            templates[group] = template
        return cls(assignment, templates)

    def groups(self) -> dict[GroupKey, frozenset[int]]:
        members: dict[GroupKey, set[int]] = {}
        for line_id, group in self.assignment.items():
            members.setdefault(group, set()).add(line_id)
        return {g: frozenset(ids) for g, ids in members.items()}


@lru_cache(maxsize=None)
def _normalized(template_text: str) -> str:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AllVariableTemplateWarning)
        return normalize_template(template_text).text


def _check_same_lines(predicted: ParsingResult, truth: ParsingResult) -> None:
    if set(predicted.assignment) != set(truth.assignment):
        raise ResultMismatch(
            "predicted and ground-truth results cover different line ids"
        )


def _ratio(numerator: int, denominator: int) -> float:
    return numerator / denominator if denominator else 0.0


def _harmonic(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


# ---- message-level accuracies ----


def grouping_accuracy(predicted: ParsingResult, truth: ParsingResult) -> float:
    """Fraction of messages whose predicted group has exactly the same
    member set as their ground-truth group."""
    _check_same_lines(predicted, truth)
    pred_groups = predicted.groups()
    true_groups = truth.groups()
    correct = sum(
        1
        for line_id, group in predicted.assignment.items()
        if pred_groups[group] == true_groups[truth.assignment[line_id]]
    )
    return _ratio(correct, len(predicted.assignment))


def parsing_accuracy(predicted: ParsingResult, truth: ParsingResult) -> float:
    """Fraction of messages whose predicted template equals the ground-truth
    template after normalization."""
    _check_same_lines(predicted, truth)
    correct = sum(
        1
        for line_id, group in predicted.assignment.items()
        if _normalized(predicted.templates[group])
        == _normalized(truth.templates[truth.assignment[line_id]])
    )
    return _ratio(correct, len(predicted.assignment))


# ---- group-level F scores ----


@dataclass(frozen=True)
class GroupScores:
    precision: float
    recall: float
    f1: float
    correct: int
    predicted_groups: int
    truth_groups: int


def f_group(predicted: ParsingResult, truth: ParsingResult) -> GroupScores:
    """Group F1: a predicted group counts when some ground-truth group has
    exactly the same member set."""
    _check_same_lines(predicted, truth)
    pred_groups = predicted.groups()
    true_sets = set(truth.groups().values())
    correct = sum(1 for members in pred_groups.values() if members in true_sets)
    precision = _ratio(correct, len(pred_groups))
    recall = _ratio(correct, len(truth.groups()))
    return GroupScores(
        precision,
        recall,
        _harmonic(precision, recall),
        correct,
        len(pred_groups),
        len(truth.groups()),
    )


def f_template(predicted: ParsingResult, truth: ParsingResult) -> GroupScores:
    """Template F1: the group condition plus normalized template equality."""
    _check_same_lines(predicted, truth)
    pred_groups = predicted.groups()
    true_by_set = {
        members: group for group, members in truth.groups().items()
    }
    correct = 0
    for group, members in pred_groups.items():
        true_group = true_by_set.get(members)
        if true_group is None:
            continue
        if _normalized(predicted.templates[group]) == _normalized(
            truth.templates[true_group]
        ):
            correct += 1
    precision = _ratio(correct, len(pred_groups))
    recall = _ratio(correct, len(true_by_set))
    return GroupScores(
        precision,
        recall,
        _harmonic(precision, recall),
        correct,
        len(pred_groups),
        len(true_by_set),
    )


# ---- granularity distances ----


def partition_distance(
    p: Sequence[AbstractSet[int]], q: Sequence[AbstractSet[int]]
) -> int:
    """Minimum merges/splits turning partition p into partition q.

    Closed form: both partitions must first be refined to their common meet
    (one split per extra part), then reassembled (one merge per part
    reduction), so the distance is 2*|meet| - |p| - |q|.
    """
    p_parts = [frozenset(part) for part in p if part]
    q_parts = [frozenset(part) for part in q if part]
    p_index: dict[int, int] = {}
    for i, part in enumerate(p_parts):
        for element in part:
            if element in p_index:
                raise ValueError(f"element {element!r} in two parts of p")
            p_index[element] = i
    q_index: dict[int, int] = {}
    for i, part in enumerate(q_parts):
        for element in part:
            if element in q_index:
                raise ValueError(f"element {element!r} in two parts of q")
            q_index[element] = i
    if set(p_index) != set(q_index):
        raise ResultMismatch("partitions cover different element sets")
    meet = {(p_index[element], q_index[element]) for element in p_index}
    return 2 * len(meet) - len(p_parts) - len(q_parts)


def ggd(predicted: ParsingResult, truth: ParsingResult) -> int:
    """Group granularity distance between the two groupings."""
    _check_same_lines(predicted, truth)
    return partition_distance(
        list(predicted.groups().values()), list(truth.groups().values())
    )


def _is_variable(token: str) -> bool:
    return PLACEHOLDER in token


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for token_a in a:
        current = [0]
        for j, token_b in enumerate(b, start=1):
            if token_a == token_b:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[len(b)]


def template_toggle_cost(a_text: str, b_text: str) -> int:
    """Static/variable designation toggles between two templates.

    Token designation is variable iff the token contains ``<*>`` (a mangled
    token like ``<*>x<*>`` is ONE variable token).  Equal token counts compare
    positionally; unequal counts align the static tokens by longest common
    subsequence and charge 1 per unmatched static token.  Symmetric.
    """
    a = _normalized(a_text).split()
    b = _normalized(b_text).split()
    if len(a) == len(b):
        return sum(
            1
            for token_a, token_b in zip(a, b)
            if _is_variable(token_a) != _is_variable(token_b)
        )
    statics_a = [t for t in a if not _is_variable(t)]
    statics_b = [t for t in b if not _is_variable(t)]
    lcs = _lcs_length(statics_a, statics_b)
    return (len(statics_a) - lcs) + (len(statics_b) - lcs)


def pgd(predicted: ParsingResult, truth: ParsingResult) -> int:
    """Parsing granularity distance: ggd plus template toggles.

    Every (predicted group, truth group) pair that shares members contributes
    its template toggle cost exactly once, regardless of how many messages the
    pair covers.
    """
    _check_same_lines(predicted, truth)
    pairs = {
        (predicted.assignment[line_id], truth.assignment[line_id])
        for line_id in predicted.assignment
    }
    toggles = sum(
        template_toggle_cost(predicted.templates[pg], truth.templates[tg])
        for pg, tg in pairs
    )
    return ggd(predicted, truth) + toggles


# ---- report ----


@dataclass(frozen=True)
class MetricReport:
    message_count: int
    grouping_accuracy: float
    parsing_accuracy: float
    group_precision: float
    group_recall: float
    group_f1: float
    template_precision: float
    template_recall: float
    template_f1: float
    ggd: int
    pgd: int
    predicted_groups: int
    truth_groups: int
    correct_groups: int
    correct_template_groups: int

    def to_dict(self) -> dict:
        return {
            "message_count": self.message_count,
            "grouping_accuracy": self.grouping_accuracy,
            "parsing_accuracy": self.parsing_accuracy,
            "group_precision": self.group_precision,
            "group_recall": self.group_recall,
            "group_f1": self.group_f1,
            "template_precision": self.template_precision,
            "template_recall": self.template_recall,
            "template_f1": self.template_f1,
            "ggd": self.ggd,
            "pgd": self.pgd,
            "predicted_groups": self.predicted_groups,
            "truth_groups": self.truth_groups,
            "correct_groups": self.correct_groups,
            "correct_template_groups": self.correct_template_groups,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def compute_report(predicted: ParsingResult, truth: ParsingResult) -> MetricReport:
    _check_same_lines(predicted, truth)
    group_scores = f_group(predicted, truth)
    template_scores = f_template(predicted, truth)
    return MetricReport(
        message_count=len(predicted.assignment),
        grouping_accuracy=grouping_accuracy(predicted, truth),
        parsing_accuracy=parsing_accuracy(predicted, truth),
        group_precision=group_scores.precision,
        group_recall=group_scores.recall,
        group_f1=group_scores.f1,
        template_precision=template_scores.precision,
        template_recall=template_scores.recall,
        template_f1=template_scores.f1,
        ggd=ggd(predicted, truth),
        pgd=pgd(predicted, truth),
        predicted_groups=group_scores.predicted_groups,
        truth_groups=group_scores.truth_groups,
        correct_groups=group_scores.correct,
        correct_template_groups=template_scores.correct,
    )


# Canonical column order for tabular output.
TABLE_COLUMNS = ("GA", "PA", "FGA", "FTA", "GGD", "PGD")


def format_report_table(reports: Sequence[tuple[str, MetricReport]]) -> str:
    """Aligned plain-text table, one row per named report."""
    name_width = max([len("dataset")] + [len(name) for name, _ in reports])
    header = "dataset".ljust(name_width) + "".join(
        f"{column:>9}" for column in TABLE_COLUMNS
    )
    lines = [header]
    for name, report in reports:
        cells = [
            f"{report.grouping_accuracy:9.4f}",
            f"{report.parsing_accuracy:9.4f}",
            f"{report.group_f1:9.4f}",
            f"{report.template_f1:9.4f}",
            f"{report.ggd:9d}",
            f"{report.pgd:9d}",
        ]
        lines.append(name.ljust(name_width) + "".join(cells))
    return "\n".join(lines)
