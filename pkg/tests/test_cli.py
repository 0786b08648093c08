from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from taxoria.cli import cli
from taxoria.taxonomy import parse_taxonomy

from helpers import taxonomy_from, write_replay_fixtures


@pytest.fixture
def runner():
    return CliRunner()


def write(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def test_validate_ok(runner, tmp_path, store_doc):
    path = write(tmp_path / "t.json", store_doc)
    result = runner.invoke(cli, ["validate", path])
    assert result.exit_code == 0


def test_validate_duplicate_siblings_exits_1(runner, tmp_path):
    path = write(tmp_path / "t.json", {"name": "R", "children": [{"name": "A"}, {"name": "a"}]})
    result = runner.invoke(cli, ["validate", path])
    assert result.exit_code == 1
    assert "duplicate" in result.output


def test_validate_missing_file_exits_2(runner, tmp_path):
    result = runner.invoke(cli, ["validate", str(tmp_path / "absent.json")])
    assert result.exit_code == 2


def test_validate_lenient_accepts_unknown_keys(runner, tmp_path):
    path = write(tmp_path / "t.json", {"name": "R", "note": "extra"})
    assert runner.invoke(cli, ["validate", path]).exit_code == 1
    assert runner.invoke(cli, ["validate", "--lenient", path]).exit_code == 0


def test_stats_single_root(runner, tmp_path):
    path = write(tmp_path / "t.json", {"name": "Thing"})
    result = runner.invoke(cli, ["stats", path])
    assert result.exit_code == 0
    assert result.output.strip() == '{"classes":1,"max_depth":0}'


def test_stats_depth(runner, tmp_path, store_doc):
    path = write(tmp_path / "t.json", store_doc)
    result = runner.invoke(cli, ["stats", path])
    assert result.output.strip() == '{"classes":5,"max_depth":2}'


def _enrich_setup(tmp_path):
    seed_doc = {"name": "Thing"}
    seed_path = write(tmp_path / "seed.json", seed_doc)
    fixture_dir = tmp_path / "fixtures"
    write_replay_fixtures(fixture_dir, taxonomy_from(seed_doc), lambda p: ["A", "B", "C"])
    vectors = tmp_path / "vectors.txt"
    vectors.write_text("thing 1 0\na 1 0\nb 1 0\nc 1 0\n", encoding="utf-8")
    return seed_path, str(fixture_dir), str(vectors)


def test_enrich_replay_run(runner, tmp_path):
    seed_path, fixture_dir, vectors = _enrich_setup(tmp_path)
    out = tmp_path / "out.json"
    decisions = tmp_path / "decisions.jsonl"
    result = runner.invoke(
        cli,
        [
            "enrich",
            "--input", seed_path,
            "--model", "replay-model",
            "--replay-dir", fixture_dir,
            "--embeddings", vectors,
            "--output", str(out),
            "--decisions", str(decisions),
        ],
    )
    assert result.exit_code == 0, result.output
    enriched = parse_taxonomy(out.read_text("utf-8"))
    assert [c.name for c in enriched.root.children] == ["A", "B", "C"]
    report = json.loads(result.output)
    assert (
        report["original_class_count"],
        report["original_max_depth"],
        report["new_class_count"],
        report["new_max_depth"],
    ) == (1, 0, 3, 1)
    assert len(decisions.read_text("utf-8").splitlines()) == 3


def test_enrich_rho_out_of_range_exits_2(runner, tmp_path):
    seed_path, fixture_dir, vectors = _enrich_setup(tmp_path)
    result = runner.invoke(
        cli,
        [
            "enrich",
            "--input", seed_path,
            "--model", "m",
            "--replay-dir", fixture_dir,
            "--embeddings", vectors,
            "--rho", "2.0",
            "--output", str(tmp_path / "o.json"),
            "--decisions", str(tmp_path / "d.jsonl"),
        ],
    )
    assert result.exit_code == 2


def test_enrich_requires_a_backend(runner, tmp_path):
    seed_path, _fixture_dir, vectors = _enrich_setup(tmp_path)
    result = runner.invoke(
        cli,
        [
            "enrich",
            "--input", seed_path,
            "--model", "m",
            "--embeddings", vectors,
            "--output", str(tmp_path / "o.json"),
            "--decisions", str(tmp_path / "d.jsonl"),
        ],
    )
    assert result.exit_code == 2
    assert "replay-dir" in result.output


def test_enrich_run_failure_exits_1(runner, tmp_path):
    # empty replay dir: the very first prompt has no fixture
    seed_path, _f, vectors = _enrich_setup(tmp_path)
    empty = tmp_path / "empty"
    empty.mkdir()
    result = runner.invoke(
        cli,
        [
            "enrich",
            "--input", seed_path,
            "--model", "m",
            "--replay-dir", str(empty),
            "--embeddings", vectors,
            "--run-dir", str(tmp_path / "run"),
            "--output", str(tmp_path / "o.json"),
            "--decisions", str(tmp_path / "d.jsonl"),
        ],
    )
    assert result.exit_code == 1
    assert "checkpoint" in result.output


def test_merge_command(runner, tmp_path, store_doc):
    left = write(tmp_path / "left.json", store_doc)
    right = write(
        tmp_path / "right.json", {"name": "Store", "children": [{"name": "Kiosk"}]}
    )
    out = tmp_path / "merged.json"
    report_path = tmp_path / "report.json"
    result = runner.invoke(
        cli, ["merge", left, right, "--output", str(out), "--report", str(report_path)]
    )
    assert result.exit_code == 0, result.output
    merged = parse_taxonomy(out.read_text("utf-8"))
    assert merged.class_count == 6
    report = json.loads(report_path.read_text("utf-8"))
    assert report["counts"] == {"common": 1, "only-left": 4, "only-right": 1}
    summary = json.loads(result.output)
    assert summary["classes"] == 6


def test_merge_with_self_all_common(runner, tmp_path, store_doc):
    left = write(tmp_path / "left.json", store_doc)
    out, report_path = tmp_path / "m.json", tmp_path / "r.json"
    result = runner.invoke(
        cli, ["merge", left, left, "--output", str(out), "--report", str(report_path)]
    )
    assert result.exit_code == 0
    report = json.loads(report_path.read_text("utf-8"))
    assert report["counts"] == {"common": 5, "only-left": 0, "only-right": 0}


def test_merge_root_mismatch_exits_1(runner, tmp_path, store_doc):
    left = write(tmp_path / "left.json", store_doc)
    right = write(tmp_path / "right.json", {"name": "Warehouse"})
    result = runner.invoke(
        cli,
        ["merge", left, right, "--output", str(tmp_path / "o.json"),
         "--report", str(tmp_path / "r.json")],
    )
    assert result.exit_code == 1


def test_help_lists_commands(runner):
    result = runner.invoke(cli, ["--help"])
    assert result.exit_code == 0
    for command in ("validate", "stats", "enrich", "merge", "serve"):
        assert command in result.output
