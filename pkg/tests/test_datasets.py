import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcts.datasets import (Document, FewShotSplit, LoadReport, corpus_statistics, label_from_truth_mean,
                           load_dataset, load_news_clickbait, load_rerank_corpus, load_webis, read_summaries,
                           sample_few_shot)


def write_jsonl(path, rows):
    path.write_text("".join((r if isinstance(r, str) else json.dumps(r)) + "\n" for r in rows))


def test_truth_mean_threshold():
    assert label_from_truth_mean(0.6) == 1
    assert label_from_truth_mean(0.5) == 0
    assert label_from_truth_mean(0.0) == 0


def test_webis_directory_with_truth(tmp_path):
    write_jsonl(tmp_path / "instances.jsonl", [
        {"id": "1", "postText": ["Ten things you need"], "targetParagraphs": ["One.", "Two."]},
        {"id": "2", "postText": ["Budget passed"], "targetParagraphs": ["The council voted."]},
        "{not json",
        {"id": "3", "postText": [""], "targetParagraphs": ["orphan"]},
    ])
    write_jsonl(tmp_path / "truth.jsonl", [{"id": "1", "truthMean": 0.6}, {"id": "2", "truthMean": 0.5}])
    report = LoadReport()
    docs = load_webis(tmp_path, report)
    assert [(d.id, d.label) for d in docs] == [("1", 1), ("2", 0)]
    assert docs[0].content == "One. Two."
    assert report.loaded == 2 and report.skipped == 2


def test_webis_truth_class_fallback(tmp_path):
    f = tmp_path / "inline.jsonl"
    write_jsonl(f, [{"id": 5, "postText": "Shocking", "targetParagraphs": [], "truthClass": "clickbait"}])
    (doc,) = load_dataset(f)
    assert doc.label == 1 and doc.truth_mean is None and doc.content == ""


def test_news_clickbait_csv(tmp_path):
    f = tmp_path / "nc.csv"
    f.write_text("Title,Text,Class\nA headline,Body text,clickbait\n,no headline,news\nOther,More,news\n"
                 "Odd,Row,maybe\n")
    report = LoadReport()
    docs = load_news_clickbait(f, report)
    assert [(d.headline, d.label) for d in docs] == [("A headline", 1), ("Other", 0)]
    assert report.skipped == 2 and report.reasons["empty headline"] == 1


def test_fixture_corpus(fixtures_dir):
    docs = load_dataset(fixtures_dir / "mock_corpus.csv")
    stats = corpus_statistics(docs)
    assert stats["total"] == 20 and stats["clickbait"] == 10


def test_missing_path():
    with pytest.raises(FileNotFoundError):
        load_dataset("/nonexistent/data.csv")


def test_empty_headline_document_rejected():
    with pytest.raises(ValueError):
        Document("x", "   ", "body")


def corpus(n_pos=10, n_neg=12):
    return [Document(f"d{i}", f"headline {i}", "body", int(i < n_pos)) for i in range(n_pos + n_neg)]


@settings(max_examples=40)
@given(st.integers(1, 10), st.integers(0, 1000))
def test_few_shot_counts_and_disjoint(k, seed):
    docs = corpus()
    split = sample_few_shot(docs, k, seed)
    assert sum(d.label for d in split.train) == k
    assert len(split.train) == 2 * k
    train_ids = {d.id for d in split.train}
    assert train_ids.isdisjoint(d.id for d in split.test)
    assert len(split.train) + len(split.test) == len(docs)


def test_few_shot_deterministic_and_seed_sensitive():
    docs = corpus()
    a, b = sample_few_shot(docs, 5, 3), sample_few_shot(docs, 5, 3)
    assert a.manifest() == b.manifest()
    others = {tuple(sample_few_shot(docs, 5, s).manifest()["train"]) for s in range(10)}
    assert len(others) > 1


def test_few_shot_insufficient_class():
    with pytest.raises(ValueError, match="fewer than"):
        sample_few_shot(corpus(n_pos=3), 5, 0)
    with pytest.raises(ValueError):
        sample_few_shot(corpus(), 0, 0)


def test_manifest_round_trip():
    docs = corpus()
    split = sample_few_shot(docs, 4, 9)
    back = FewShotSplit.from_manifest(json.loads(json.dumps(split.manifest())), docs)
    assert back == split


def test_auxiliary_files(tmp_path):
    write_jsonl(tmp_path / "r.jsonl", [
        {"document": "A b c. D e f.", "candidates": ["A b c.", "D e f."], "reference": "A b c."},
        {"document": "x", "candidates": []},
    ])
    assert len(load_rerank_corpus(tmp_path / "r.jsonl")) == 1
    write_jsonl(tmp_path / "s.jsonl", [{"id": 3, "summary": "S."}])
    assert read_summaries(tmp_path / "s.jsonl") == {"3": "S."}
