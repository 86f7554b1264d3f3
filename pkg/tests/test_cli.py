"""CLI tests: every command end to end through CliRunner, plus exit codes."""

from __future__ import annotations

import csv
import json
import sys

import numpy as np
import pytest
from click.testing import CliRunner

import synth
from logmill import cli
from logmill.bench import read_result_csv
from logmill.engine import NoMergePolicy, ParserEngine
from logmill.extractor.backends import ExtractionUnavailable, OracleBackend
from logmill.extractor.prompts import build_finetune_record
from logmill.extractor.service import TemplateExtractor

FORMAT = synth.LOG_FORMAT


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def dataset(tmp_path):
    """A small labeled corpus on disk: 40 lines over 5 templates."""
    templates = synth.make_templates(5)
    lines = synth.make_stream(40, templates, seed=21)
    spec = synth.write_loghub(tmp_path / "alpha", "alpha", lines)
    return spec, lines


def parse_args(spec, *extra):
    return [
        "parse", str(spec.log_path),
        "--labels", str(spec.structured_path),
        "--log-format", FORMAT,
        "--merge-policy", "off",
        *extra,
    ]


# ---- parse ----


def test_parse_writes_csv_and_state(runner, dataset, tmp_path):
    spec, lines = dataset
    out_csv = tmp_path / "out.csv"
    state = tmp_path / "state.json"
    result = runner.invoke(
        cli.main, parse_args(spec, "--output", str(out_csv), "--state", str(state))
    )
    assert result.exit_code == 0, result.output
    assert "logs processed      40" in result.output
    assert "clusters            5" in result.output
    assert "extraction calls    5" in result.output
    assert state.exists()

    with open(out_csv, newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 40
    assert [int(r["LineId"]) for r in rows] == [line.line_id for line in lines]
    assert rows[0]["Content"] == lines[0].content
    assert rows[0]["EventId"].startswith("C")
    assert "<*>" in rows[0]["EventTemplate"] or rows[0]["EventTemplate"]


def test_parse_resumes_from_state_with_zero_new_calls(runner, dataset, tmp_path):
    spec, _ = dataset
    state = tmp_path / "state.json"
    first = runner.invoke(cli.main, parse_args(spec, "--state", str(state)))
    assert first.exit_code == 0
    second = runner.invoke(cli.main, parse_args(spec, "--state", str(state)))
    assert second.exit_code == 0
    # everything strict-matches the restored tree: cumulative logs, same calls
    assert "logs processed      80" in second.output
    assert "extraction calls    5" in second.output
    assert "clusters            5" in second.output


def test_parse_rejects_state_with_other_depth_cap(runner, dataset, tmp_path):
    spec, _ = dataset
    state = tmp_path / "state.json"
    assert runner.invoke(cli.main, parse_args(spec, "--state", str(state))).exit_code == 0
    result = runner.invoke(
        cli.main, parse_args(spec, "--state", str(state), "--depth-cap", "8")
    )
    assert result.exit_code == 2
    assert "depth cap 16" in result.stderr


def test_parse_reads_stdin(runner, tmp_path):
    labels = tmp_path / "labels.csv"
    labels.write_text(
        "LineId,Content,EventId,EventTemplate\n"
        "1,alpha 1,E1,alpha <OBA>\n"
        "2,alpha 2,E1,alpha <OBA>\n"
    )
    result = runner.invoke(
        cli.main,
        ["parse", "-", "--labels", str(labels), "--merge-policy", "off"],
        input="alpha 1\nalpha 2\n",
    )
    assert result.exit_code == 0
    assert "logs processed      2" in result.output
    assert "clusters            1" in result.output


def test_parse_empty_stdin_yields_header_only_csv(runner, tmp_path):
    labels = tmp_path / "labels.csv"
    labels.write_text("LineId,Content,EventId,EventTemplate\n")
    out_csv = tmp_path / "out.csv"
    result = runner.invoke(
        cli.main,
        ["parse", "-", "--labels", str(labels), "--output", str(out_csv)],
        input="",
    )
    assert result.exit_code == 0
    assert "logs processed      0" in result.output
    assert out_csv.read_text() == "LineId,Content,EventId,EventTemplate\n"


def test_parse_warns_about_unmatched_format_lines(runner, tmp_path):
    log = tmp_path / "mixed.log"
    log.write_text("2026-08-15 10:00:00 INFO fine line\npanic!\n")
    labels = tmp_path / "labels.csv"
    labels.write_text(
        "LineId,Content,EventId,EventTemplate\n"
        "1,fine line,E1,fine line\n"
        "2,panic!,E2,panic!\n"
    )
    result = runner.invoke(
        cli.main,
        ["parse", str(log), "--labels", str(labels), "--log-format", FORMAT],
    )
    assert result.exit_code == 0
    assert "1 lines did not match the log format" in result.stderr


def test_parse_oracle_miss_is_contract_error(runner, dataset, tmp_path):
    spec, _ = dataset
    stray = tmp_path / "stray.log"
    stray.write_text("2026-08-15 10:00:00 INFO never labeled content\n")
    result = runner.invoke(
        cli.main,
        ["parse", str(stray), "--labels", str(spec.structured_path),
         "--log-format", FORMAT],
    )
    assert result.exit_code == 2
    assert "error:" in result.stderr


def test_parse_without_backend_config_fails_fast(runner, tmp_path):
    log = tmp_path / "a.log"
    log.write_text("hello\n")
    result = runner.invoke(cli.main, ["parse", str(log)])
    assert result.exit_code == 2
    assert "base_url" in result.stderr


def test_parse_interactive_needs_terminal(runner, dataset):
    spec, _ = dataset
    result = runner.invoke(
        cli.main,
        ["parse", str(spec.log_path), "--labels", str(spec.structured_path),
         "--log-format", FORMAT, "--merge-policy", "interactive"],
    )
    assert result.exit_code == 2
    assert "needs a terminal" in result.stderr


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_parse_degraded_backend_quarantines_and_exits_zero(
    runner, tmp_path, monkeypatch
):
    class FailingBackend:
        def complete(self, prompt):
            raise ExtractionUnavailable("endpoint down")

    monkeypatch.setattr(cli, "RemoteChatBackend", lambda *a, **k: FailingBackend())
    config = tmp_path / "remote.ini"
    config.write_text(
        "[backend]\nbase_url = https://model.example\nmodel = m1\n"
    )
    out_csv = tmp_path / "out.csv"
    result = runner.invoke(
        cli.main,
        ["--config", str(config), "parse", "-", "--merge-policy", "off",
         "--output", str(out_csv)],
        input="disk c7 offline\ndisk c8 offline\n",
    )
    assert result.exit_code == 0  # degraded, not failed
    assert "quarantined         2" in result.output
    assert "2 lines quarantined" in result.stderr
    with open(out_csv, newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert [r["EventId"] for r in rows] == ["Q3", "Q3"]
    assert [r["EventTemplate"] for r in rows] == ["<*>", "<*>"]


# ---- record / replay ----


def test_parse_record_then_replay_is_identical(runner, dataset, tmp_path):
    spec, _ = dataset
    replay = tmp_path / "replay.jsonl"
    out1 = tmp_path / "out1.csv"
    out2 = tmp_path / "out2.csv"

    recorded = runner.invoke(
        cli.main,
        parse_args(spec, "--record", str(replay), "--output", str(out1)),
    )
    assert recorded.exit_code == 0
    assert replay.exists() and replay.stat().st_size > 0

    replayed = runner.invoke(
        cli.main,
        ["parse", str(spec.log_path), "--replay", str(replay),
         "--log-format", FORMAT, "--merge-policy", "off",
         "--output", str(out2)],
    )
    assert replayed.exit_code == 0
    assert out1.read_bytes() == out2.read_bytes()
    assert "extraction calls    5" in replayed.output


def test_parse_replay_miss_is_contract_error(runner, dataset, tmp_path):
    spec, _ = dataset
    replay = tmp_path / "replay.jsonl"
    assert runner.invoke(
        cli.main, parse_args(spec, "--record", str(replay))
    ).exit_code == 0

    unseen = tmp_path / "unseen.log"
    unseen.write_text("2026-08-15 10:00:00 INFO a log nobody recorded\n")
    result = runner.invoke(
        cli.main,
        ["parse", str(unseen), "--replay", str(replay), "--log-format", FORMAT],
    )
    assert result.exit_code == 2
    assert "no recorded response" in result.stderr


# ---- evaluate ----


def test_evaluate_closed_loop_scores_perfect(runner, dataset, tmp_path):
    spec, _ = dataset
    predicted = tmp_path / "predicted.csv"
    assert runner.invoke(
        cli.main, parse_args(spec, "--output", str(predicted))
    ).exit_code == 0

    json_path = tmp_path / "report.json"
    result = runner.invoke(
        cli.main,
        ["evaluate", str(predicted), str(spec.structured_path),
         "--name", "alpha", "--json", str(json_path)],
    )
    assert result.exit_code == 0, result.output
    assert "alpha" in result.output
    assert "1.0000" in result.output
    payload = json.loads(json_path.read_text())
    assert payload["grouping_accuracy"] == 1.0
    assert payload["pgd"] == 0


def test_evaluate_rejects_mismatched_line_sets(runner, dataset, tmp_path):
    spec, _ = dataset
    predicted = tmp_path / "predicted.csv"
    assert runner.invoke(
        cli.main, parse_args(spec, "--output", str(predicted))
    ).exit_code == 0
    # drop the last data row from the truth side
    truncated = tmp_path / "truth.csv"
    lines = spec.structured_path.read_text().splitlines(keepends=True)
    truncated.write_text("".join(lines[:-1]))
    result = runner.invoke(cli.main, ["evaluate", str(predicted), str(truncated)])
    assert result.exit_code == 2
    assert "error:" in result.stderr


# ---- bench ----


@pytest.fixture
def bench_config(tmp_path):
    for name, seed, count in (("alpha", 21, 40), ("beta", 22, 60)):
        lines = synth.make_stream(count, synth.make_templates(5), seed=seed)
        synth.write_loghub(tmp_path / name, name, lines)
    config = tmp_path / "bench.ini"
    config.write_text(
        "[bench]\n"
        "estimated_call_latency = 1.5\n"
        "\n"
        "[dataset.alpha]\n"
        "log = alpha/alpha.log\n"
        "structured = alpha/alpha_structured.csv\n"
        f"format = {FORMAT}\n"
        "templates = alpha/alpha_templates.csv\n"
        "\n"
        "[dataset.beta]\n"
        "log = beta/beta.log\n"
        "structured = beta/beta_structured.csv\n"
        f"format = {FORMAT}\n"
    )
    return config


def test_bench_all_datasets(runner, bench_config, tmp_path):
    json_path = tmp_path / "bench.json"
    out_dir = tmp_path / "parsed"
    result = runner.invoke(
        cli.main,
        ["--config", str(bench_config), "bench", "--all",
         "--json", str(json_path), "--output-dir", str(out_dir)],
    )
    assert result.exit_code == 0, result.output
    assert "alpha: 40 logs, 5 clusters, 5 extraction calls" in result.output
    assert "(est. 7.500s)" in result.output
    assert "1.0000" in result.output

    payload = json.loads(json_path.read_text())
    assert sorted(payload) == ["alpha", "beta"]
    assert payload["beta"]["metrics"]["grouping_accuracy"] == 1.0
    assert payload["alpha"]["logs"] == 40

    parsed = out_dir / "alpha_structured.csv"
    assert parsed.exists()
    assert len(parsed.read_text().splitlines()) == 41
    loaded = read_result_csv(parsed)
    assert len(loaded.assignment) == 40


def test_bench_single_dataset_selection(runner, bench_config, tmp_path):
    json_path = tmp_path / "one.json"
    result = runner.invoke(
        cli.main,
        ["--config", str(bench_config), "bench", "--dataset", "beta",
         "--json", str(json_path)],
    )
    assert result.exit_code == 0
    assert list(json.loads(json_path.read_text())) == ["beta"]

    unknown = runner.invoke(
        cli.main, ["--config", str(bench_config), "bench", "--dataset", "nope"]
    )
    assert unknown.exit_code == 2
    assert "unknown datasets" in unknown.stderr


def test_bench_requires_dataset_config(runner, bench_config):
    no_config = runner.invoke(cli.main, ["bench", "--all"])
    assert no_config.exit_code == 2
    assert "no [dataset.*] sections" in no_config.stderr

    no_selection = runner.invoke(cli.main, ["--config", str(bench_config), "bench"])
    assert no_selection.exit_code == 2
    assert "pass --dataset NAME or --all" in no_selection.stderr


# ---- config contract ----


@pytest.mark.parametrize(
    "text,needle",
    [
        ("[nope]\nkey = 1\n", "unknown config section"),
        ("[engine]\ndepth_cap = banana\n", "bad value"),
        ("[engine]\nwarp_drive = on\n", "unknown key"),
        ("[engine]\nmerge_policy = maybe\n", "unknown merge policy"),
        ("[dataset.x]\nlog = x.log\n", "missing"),
        ("not ini at all", "not valid INI"),
    ],
)
def test_bad_config_is_contract_error(runner, tmp_path, text, needle):
    config = tmp_path / "bad.ini"
    config.write_text(text)
    result = runner.invoke(cli.main, ["--config", str(config), "bench", "--all"])
    assert result.exit_code == 2
    assert needle in result.stderr


# ---- calibrate ----


def calibration_state(tmp_path, n_clusters=2):
    """Engine state whose clusters all share one embedding (score 1.0)."""
    labels = {
        f"evt{i} payload {i}": f"evt{i} payload <OBA>" for i in range(n_clusters)
    }
    engine = ParserEngine(
        TemplateExtractor(OracleBackend(labels)), merge_policy=NoMergePolicy()
    )
    for i, content in enumerate(labels, start=1):
        engine.process_line(i, content)
    vec = np.zeros(64)
    vec[0] = 1.0
    for cluster in engine.clusters.values():
        cluster.embedding = vec
    path = tmp_path / "state.json"
    engine.save_state(path)
    return path


def test_calibrate_list_prints_suggestions(runner, tmp_path):
    state = calibration_state(tmp_path)
    before = state.read_bytes()
    result = runner.invoke(
        cli.main, ["calibrate", "--state", str(state), "--list"]
    )
    assert result.exit_code == 0, result.output
    assert "[1.000] #1 ~ #2" in result.output
    assert "evt0 payload <*>" in result.output
    assert "sample: evt1 payload 1" in result.output
    assert state.read_bytes() == before  # list mode never writes


def test_calibrate_without_terminal_only_lists(runner, tmp_path):
    state = calibration_state(tmp_path)
    result = runner.invoke(cli.main, ["calibrate", "--state", str(state)])
    assert result.exit_code == 0
    assert "[1.000] #1 ~ #2" in result.output
    assert "not a terminal" in result.stderr


def test_calibrate_reports_empty_suggestions(runner, tmp_path):
    state = calibration_state(tmp_path)
    result = runner.invoke(
        cli.main, ["calibrate", "--state", str(state), "--floor", "1.5"]
    )
    assert result.exit_code == 0
    assert "no merge suggestions" in result.output


class FakeTtySys:
    """The cli module's view of sys, with a terminal on stdin."""

    class _Stdin:
        @staticmethod
        def isatty():
            return True

    stdin = _Stdin()

    def __getattr__(self, name):
        return getattr(sys, name)


def test_calibrate_applies_confirmed_merges(runner, tmp_path, monkeypatch):
    state = calibration_state(tmp_path, n_clusters=3)
    monkeypatch.setattr(cli, "sys", FakeTtySys())
    # approve (1,2) and (1,3) with the default unified template; the (2,3)
    # suggestion is consumed by then and must be skipped silently
    result = runner.invoke(
        cli.main,
        ["calibrate", "--state", str(state)],
        input="y\n\ny\n\n",
    )
    assert result.exit_code == 0, result.output
    assert "applied 2 merges" in result.output
    payload = json.loads(state.read_text())
    assert len(payload["clusters"]) == 1
    assert len(payload["clusters"][0]["member_ids"]) == 3


def test_calibrate_declined_merges_leave_state_alone(runner, tmp_path, monkeypatch):
    state = calibration_state(tmp_path)
    before = state.read_bytes()
    monkeypatch.setattr(cli, "sys", FakeTtySys())
    result = runner.invoke(
        cli.main, ["calibrate", "--state", str(state)], input="n\n"
    )
    assert result.exit_code == 0
    assert "applied 0 merges" in result.output
    assert state.read_bytes() == before


# ---- export-finetune ----


def test_export_finetune_writes_jsonl(runner, dataset, tmp_path):
    spec, lines = dataset
    out = tmp_path / "tuning.jsonl"
    result = runner.invoke(
        cli.main,
        ["export-finetune", "--labels", str(spec.structured_path),
         "--out", str(out)],
    )
    assert result.exit_code == 0
    assert "wrote 40 records" in result.output
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(rows) == 40
    assert rows[0]["text"] == build_finetune_record(
        lines[0].content, lines[0].template
    )


def test_export_finetune_sampled(runner, dataset, tmp_path):
    spec, _ = dataset
    out = tmp_path / "sampled.jsonl"
    result = runner.invoke(
        cli.main,
        ["export-finetune", "--labels", str(spec.structured_path),
         "--out", str(out), "--sample", "3"],
    )
    assert result.exit_code == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(rows) == 3
    assert all(row["text"].endswith("### End") for row in rows)
