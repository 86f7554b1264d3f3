"""Metric tests.

The partition-distance oracle below walks merge/split sequences with
breadth-first search, so the closed form is checked against true shortest
paths rather than against itself.

The distance models calibration work: first split too-coarse groups, then
merge too-fine ones.  Splits after the first merge are not legal moves; a
merge widens a template by one static-to-variable toggle, and re-splitting
that merged group along a *different* boundary is not something one toggle
can express.  Without the phase rule the metric would collapse: merging
everything into one group and re-splitting it arbitrarily would turn any
partition into any other in |P|+|Q|-2 moves (see the counterexample test).
"""

from __future__ import annotations

import itertools
import random

import pytest

from logmill.metrics import (
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

Partition = frozenset[frozenset[int]]


# ---- oracle: BFS over the merge/split move graph ----


def all_partitions(universe: tuple[int, ...]) -> list[Partition]:
    if not universe:
        return [frozenset()]
    first, rest = universe[0], universe[1:]
    out = []
    for partial in all_partitions(rest):
        parts = list(partial)
        for i in range(len(parts)):
            out.append(
                frozenset(
                    parts[:i] + [parts[i] | {first}] + parts[i + 1:]
                )
            )
        out.append(frozenset(list(partial) + [frozenset({first})]))
    return out


def merge_moves(partition: Partition) -> list[Partition]:
    parts = sorted(partition, key=sorted)
    out = []
    for a, b in itertools.combinations(parts, 2):
        rest = [p for p in parts if p is not a and p is not b]
        out.append(frozenset(rest + [a | b]))
    return out


def split_moves(partition: Partition) -> list[Partition]:
    parts = sorted(partition, key=sorted)
    out = []
    for part in parts:
        if len(part) < 2:
            continue
        elems = sorted(part)
        head, tail = elems[0], elems[1:]
        for mask in range(2 ** len(tail) - 1):
            side = frozenset(
                {head} | {tail[i] for i in range(len(tail)) if mask >> i & 1}
            )
            rest = [p for p in parts if p is not part]
            out.append(frozenset(rest + [side, part - side]))
    return out


def bfs_distances(source: Partition) -> dict[Partition, int]:
    """Shortest split-phase-then-merge-phase path lengths from ``source``.

    States are (partition, merging_started); once a merge happens no further
    splits are allowed.  The returned distance for a partition is the best
    over both phase states.
    """
    start = (source, False)
    dist = {start: 0}
    frontier = [start]
    while frontier:
        nxt = []
        for node, merging in frontier:
            steps = dist[(node, merging)]
            neighbors = [(m, True) for m in merge_moves(node)]
            if not merging:
                neighbors += [(s, False) for s in split_moves(node)]
            for state in neighbors:
                if state not in dist:
                    dist[state] = steps + 1
                    nxt.append(state)
        frontier = nxt
    best: dict[Partition, int] = {}
    for (node, _), steps in dist.items():
        if node not in best or steps < best[node]:
            best[node] = steps
    return best


def test_partition_distance_matches_bfs_shortest_path():
    # every ordered pair of partitions of {1..4}; Bell(4) = 15
    universe = (1, 2, 3, 4)
    partitions = all_partitions(universe)
    assert len(partitions) == 15
    for source in partitions:
        dist = bfs_distances(source)
        assert len(dist) == 15
        for target in partitions:
            closed = partition_distance(list(source), list(target))
            assert closed == dist[target], (source, target)


def test_interleaved_moves_would_collapse_the_metric():
    # regression guard for the phase rule: with free interleaving,
    # merge-everything-then-resplit reaches ANY regrouping of {1..4} in two
    # moves, so crossed groupings would score the same as near-misses
    crossed = [{1, 4}, {2, 3}]
    assert partition_distance([{1, 2}, {3, 4}], crossed) == 4


def test_partition_distance_fixtures():
    assert partition_distance([{1, 2}, {3}], [{1, 2}, {3}]) == 0
    assert partition_distance([{1, 2}, {3}], [{1}, {2}, {3}]) == 1  # one split
    assert partition_distance([{1, 2}, {3}], [{1, 2, 3}]) == 1  # one merge
    assert partition_distance([{1, 2}, {3}], [{1}, {2, 3}]) == 2
    assert partition_distance([{1, 2, 3, 4}], [{1}, {2}, {3}, {4}]) == 3


def test_partition_distance_symmetry_fuzz():
    rng = random.Random(31)
    for _ in range(100):
        n = rng.randint(1, 7)
        p = [rng.randrange(3) for _ in range(n)]
        q = [rng.randrange(3) for _ in range(n)]
        parts_p = [
            {i for i, g in enumerate(p) if g == k} for k in set(p)
        ]
        parts_q = [
            {i for i, g in enumerate(q) if g == k} for k in set(q)
        ]
        assert partition_distance(parts_p, parts_q) == partition_distance(
            parts_q, parts_p
        )


def test_partition_distance_rejects_bad_input():
    with pytest.raises(ResultMismatch):
        partition_distance([{1, 2}], [{1, 2, 3}])
    with pytest.raises(ValueError):
        partition_distance([{1, 2}, {2, 3}], [{1, 2, 3}])


# ---- canonical grouping fixture ----


def _fixture() -> tuple[ParsingResult, ParsingResult]:
    predicted = ParsingResult.from_rows(
        [
            (1, "A", "connect to <*>"),
            (2, "A", "connect to <*>"),
            (3, "B", "close <*>"),
            (4, "C", "close session 9"),
        ]
    )
    truth = ParsingResult.from_rows(
        [
            (1, "g1", "connect to <*>"),
            (2, "g1", "connect to <*>"),
            (3, "g2", "close <*>"),
            (4, "g2", "close <*>"),
        ]
    )
    return predicted, truth


def test_grouping_accuracy_fixture():
    predicted, truth = _fixture()
    assert grouping_accuracy(predicted, truth) == 0.5


def test_group_f1_fixture():
    predicted, truth = _fixture()
    scores = f_group(predicted, truth)
    assert scores.correct == 1
    assert scores.precision == pytest.approx(1 / 3)
    assert scores.recall == pytest.approx(1 / 2)
    assert scores.f1 == pytest.approx(0.4)


def test_parsing_accuracy_normalizes_both_sides():
    predicted = ParsingResult.from_rows([(1, "A", "read <OID> done")])
    truth = ParsingResult.from_rows([(1, "g", "read <*> done")])
    assert parsing_accuracy(predicted, truth) == 1.0


def test_f_template_needs_both_conditions():
    predicted, truth = _fixture()
    scores = f_template(predicted, truth)
    assert scores.correct == 1  # group A matches g1 and texts agree
    bad_text = ParsingResult.from_rows(
        [
            (1, "A", "connect <*> now"),
            (2, "A", "connect <*> now"),
            (3, "B", "close <*>"),
            (4, "C", "close session 9"),
        ]
    )
    assert f_template(bad_text, truth).correct == 0


def test_scores_zero_when_nothing_matches():
    predicted = ParsingResult.from_rows([(1, "A", "a"), (2, "B", "b")])
    truth = ParsingResult.from_rows([(1, "g", "a"), (2, "g", "a")])
    scores = f_group(predicted, truth)
    assert scores.precision == 0.0 and scores.recall == 0.0 and scores.f1 == 0.0


# ---- granularity distances ----


def test_ggd_fixture():
    predicted, truth = _fixture()
    assert ggd(predicted, truth) == 1  # merge B and C


def test_toggle_cost_equal_counts_compares_designation_only():
    assert template_toggle_cost("send <*> bytes", "send <*> bytes") == 0
    assert template_toggle_cost("send 500 bytes", "send <*> bytes") == 1
    # differing static TEXT at the same position is not a toggle
    assert template_toggle_cost("send <*> bytes", "recv <*> bytes") == 0
    assert template_toggle_cost("<*> a <*>", "x <*> y") == 3


def test_toggle_cost_mangled_token_is_one_variable_token():
    mangled = "<*>edec<*>e<*>-<*>-<*>a<*>a"
    assert template_toggle_cost(mangled, "<*>") == 0


def test_toggle_cost_unequal_counts_uses_static_lcs():
    assert template_toggle_cost("alpha <*> beta", "alpha beta") == 0
    assert template_toggle_cost("alpha x <*>", "y <*>") == 3
    assert template_toggle_cost("a b c", "a c") == 1


def test_toggle_cost_symmetric_fuzz():
    rng = random.Random(17)
    vocab = ["a", "b", "<*>", "x=<*>", "c"]
    for _ in range(200):
        left = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 6)))
        right = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 6)))
        assert template_toggle_cost(left, right) == template_toggle_cost(
            right, left
        )


def test_pgd_fixture_counts_pairs_once():
    predicted, truth = _fixture()
    # pairs: (A,g1) cost 0, (B,g2) cost 0, (C,g2): "close session 9" vs
    # "close <*>" has unequal... equal counts (3 vs 2)? no: 3 vs 2 tokens ->
    # statics [close, session, 9] vs [close], lcs 1 -> cost 2
    assert pgd(predicted, truth) == 1 + 2


def test_pgd_zero_for_identical_results():
    predicted, truth = _fixture()
    assert pgd(truth, truth) == 0
    assert pgd(predicted, predicted) == 0


def test_pgd_single_toggle():
    predicted = ParsingResult.from_rows([(1, "A", "send 500 bytes")])
    truth = ParsingResult.from_rows([(1, "g", "send <*> bytes")])
    assert ggd(predicted, truth) == 0
    assert pgd(predicted, truth) == 1


def test_compute_report_and_table():
    predicted, truth = _fixture()
    report = compute_report(predicted, truth)
    assert isinstance(report, MetricReport)
    assert report.message_count == 4
    assert report.grouping_accuracy == 0.5
    assert report.group_f1 == pytest.approx(0.4)
    assert report.ggd == 1
    assert report.pgd == 3
    table = format_report_table([("demo", report)])
    lines = table.splitlines()
    assert lines[0].split() == ["dataset", "GA", "PA", "FGA", "FTA", "GGD", "PGD"]
    assert lines[1].split()[0] == "demo"
    assert "0.5000" in lines[1] and "0.4000" in lines[1]
    payload = report.to_dict()
    assert payload["grouping_accuracy"] == 0.5
    assert payload["pgd"] == 3


def test_mismatched_line_ids_raise():
    predicted = ParsingResult.from_rows([(1, "A", "a")])
    truth = ParsingResult.from_rows([(2, "g", "a")])
    with pytest.raises(ResultMismatch):
        grouping_accuracy(predicted, truth)
    with pytest.raises(ResultMismatch):
        compute_report(predicted, truth)


def test_from_rows_validation():
    with pytest.raises(ValueError):
        ParsingResult.from_rows([(1, "A", "a"), (1, "B", "b")])
    with pytest.raises(ValueError):
        ParsingResult.from_rows([(1, "A", "a"), (2, "A", "b")])
    with pytest.raises(ValueError):
        ParsingResult({1: "A"}, {})
