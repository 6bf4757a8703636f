import csv
import json
import subprocess
import sys

import pytest

from conftest import GOLDEN
from pcts.cli import main
from pcts.verbalizer import MLM


def run(argv, capsys=None):
    code = main([str(a) for a in argv])
    out = capsys.readouterr() if capsys else None
    return code, out


@pytest.fixture
def resource_flags(mock_paths):
    return ["--embeddings", mock_paths["embeddings"], "--lexicon", mock_paths["lexicon"],
            "--concept-base", mock_paths["concepts"], "--scorer-fixture", mock_paths["scorer"]]


def read_jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def test_missing_dataset_exits_2_and_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    code, out = run(["summarize", "--dataset", missing, "--out", tmp_path], capsys)
    assert code == 2 and str(missing) in out.err


def test_missing_resource_exits_2(tmp_path, capsys, mock_paths):
    code, out = run(["build-verbalizer", "--lexicon", tmp_path / "absent.tsv",
                     "--scorer-fixture", mock_paths["scorer"], "--out", tmp_path], capsys)
    assert code == 2 and "absent.tsv" in out.err


def test_summarize_records_generator_tag(tmp_path, mock_paths):
    small = tmp_path / "three.csv"
    rows = list(csv.reader(open(mock_paths["dataset"], newline="")))
    with open(small, "w", newline="") as fh:
        csv.writer(fh).writerows(rows[:4])
    code, _ = run(["summarize", "--dataset", small, "--generator", "extractive_fallback", "--out", tmp_path])
    assert code == 0
    selections = read_jsonl(tmp_path / "summaries.jsonl")
    assert len(selections) == 3
    assert all(s["generator_tag"].startswith("extractive_fallback") for s in selections)
    assert all(r["generator_tag"] == selections[0]["generator_tag"]
               for r in read_jsonl(tmp_path / "candidates.jsonl"))


def test_build_verbalizer_all_strategies(tmp_path, resource_flags, mock_paths, capsys):
    code, out = run(["build-verbalizer", *resource_flags, "--dataset", mock_paths["dataset"],
                     "--mode", "-summary", "--out", tmp_path], capsys)
    assert code == 0 and "concepts=" in out.out
    doc = json.loads((tmp_path / "verbalizer.json").read_text())
    for label in ("news", "clickbait"):
        words = [e for e in doc["entries"] if e["label"] == label]
        assert 1 < len(words) <= 5 * 15 + 2


def test_strategy_subset_provenance(tmp_path, resource_flags):
    code, _ = run(["build-verbalizer", *resource_flags, "--strategies", "mlm_prediction", "--out", tmp_path])
    assert code == 0
    entries = json.loads((tmp_path / "verbalizer.json").read_text())["entries"]
    assert all(set(e["provenance"]) <= {MLM} for e in entries)
    assert any(e["provenance"] == [MLM] for e in entries)


def test_unknown_strategy_is_usage_error(tmp_path, resource_flags, capsys):
    code, out = run(["build-verbalizer", *resource_flags, "--strategies", "telepathy", "--out", tmp_path], capsys)
    assert code == 2 and "telepathy" in out.err


def test_empty_concept_base_succeeds(tmp_path, resource_flags, capsys):
    empty = tmp_path / "empty.tsv"
    empty.write_text("")
    flags = list(resource_flags)
    flags[flags.index("--concept-base") + 1] = empty
    code, out = run(["build-verbalizer", *flags, "--out", tmp_path], capsys)
    assert code == 0 and "concepts=0" in out.out


def pipeline(tmp_path, mock_paths, resource_flags, extra=()):
    ds = ["--dataset", mock_paths["dataset"], "--out", tmp_path]
    assert run(["summarize", *ds]) == (0, None)
    assert run(["build-verbalizer", *resource_flags, *ds, "--summaries", tmp_path / "summaries.jsonl"]) == (0, None)
    common = [*ds, "--scorer-fixture", mock_paths["scorer"], "--verbalizer", tmp_path / "verbalizer.json",
              "--summaries", tmp_path / "summaries.jsonl", *extra]
    assert run(["detect", *common]) == (0, None)
    assert run(["eval", *ds, "--detections", tmp_path / "detections.jsonl"]) == (0, None)


def test_full_mock_run_is_perfect(tmp_path, mock_paths, resource_flags):
    pipeline(tmp_path, mock_paths, resource_flags)
    rows = list(csv.DictReader(open(tmp_path / "metrics.tsv"), delimiter="\t"))
    assert {k: rows[0][k] for k in ("accuracy", "precision", "recall", "f1")} == \
        {"accuracy": "1.0000", "precision": "1.0000", "recall": "1.0000", "f1": "1.0000"}


def test_outputs_are_idempotent(tmp_path, mock_paths, resource_flags):
    a, b = tmp_path / "a", tmp_path / "b"
    pipeline(a, mock_paths, resource_flags)
    pipeline(b, mock_paths, resource_flags)
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        if name != "pcts-run.log":
            assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_template_flag_matches_golden(tmp_path, mock_paths):
    headline = "If you have ever used Google Docs for anything important, you should know about this"
    summary = "Chrome extension allows users to see all edits made to Google Docs."
    ds = tmp_path / "one.csv"
    with open(ds, "w", newline="") as fh:
        csv.writer(fh).writerows([["id", "headline", "body", "label"], ["g1", headline, "Body text.", "1"]])
    (tmp_path / "s.jsonl").write_text(json.dumps({"id": "g1", "summary": summary}) + "\n")
    (tmp_path / "v.json").write_text(
        '{"format": "pcts-verbalizer/1", "labels": ["news", "clickbait"], "n_a": 15, "entries": ['
        '{"label": "news", "word": "news", "rank": 0, "provenance": []},'
        '{"label": "clickbait", "word": "clickbait", "rank": 0, "provenance": []}]}')
    code, _ = run(["detect", "--dataset", ds, "--summaries", tmp_path / "s.jsonl", "--verbalizer",
                   tmp_path / "v.json", "--scorer-fixture", mock_paths["scorer"], "--template", 3,
                   "--out", tmp_path])
    assert code == 0
    (rec,) = read_jsonl(tmp_path / "prompts.jsonl")
    assert rec["prompt"] == (GOLDEN / "template_3.txt").read_text().rstrip("\n")


def test_headline_only_mode_row_label(tmp_path, mock_paths, resource_flags):
    code, _ = run(["eval", "--dataset", mock_paths["dataset"], *resource_flags, "--mode", "-summary",
                   "--seeds", 0, "--out", tmp_path])
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "report.tsv"), delimiter="\t"))
    assert [r["mode"] for r in rows] == ["-summary"]


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("shots: 10\ntemplate: 2\ntrain:\n  epochs: 4\n")
    code, out = run(["train", "--config", cfg, "--template", 1, "--show-config"], capsys)
    assert code == 0
    eff = json.loads(out.out)
    assert eff["template"] == 1          # flag beats file
    assert eff["shots"] == 10            # file beats default
    assert eff["train"]["epochs"] == 4 and eff["train"]["batch_size"] == 32  # nested merge keeps defaults
    assert eff["n_a"] == 15              # default


def test_resource_root_env(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("PCTS_RESOURCE_ROOT", str(tmp_path))
    code, out = run(["detect", "--dataset", "corpus.csv", "--show-config"], capsys)
    assert json.loads(out.out)["dataset"] == str(tmp_path / "corpus.csv")


def test_stage_failure_exit_1(tmp_path, mock_paths, capsys):
    det = tmp_path / "d.jsonl"
    det.write_text(json.dumps({"id": "cb00", "predicted": "sarcasm"}) + "\n")
    code, out = run(["eval", "--dataset", mock_paths["dataset"], "--detections", det, "--out", tmp_path], capsys)
    assert code == 1 and "eval" in out.err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "pcts", "eval", "--dataset", tmp_path / "none.csv"],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "none.csv" in proc.stderr
