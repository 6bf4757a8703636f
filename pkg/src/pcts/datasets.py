"""Corpus loaders and few-shot sampling."""

from __future__ import annotations

import csv
import json
import logging
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .reranker import RerankTrainingExample

log = logging.getLogger(__name__)

CLICKBAIT_THRESHOLD = 0.5
STANDARD_SHOTS = (5, 10, 20)

# Published corpus statistics used to validate full loads.
CORPUS_SIZES = {
    "news_clickbait": {"total": 28_423, "train": 24_871, "test": 3_552, "avg_words": 499, "avg_summary_words": 41},
    "webis17": {"total": 38_517, "train": 19_538, "test": 18_979, "avg_words": 634, "avg_summary_words": 24},
}


@dataclass(frozen=True)
class Document:
    id: str
    headline: str
    content: str
    label: int | None = None
    truth_mean: float | None = None

    def __post_init__(self):
        if not self.headline or not self.headline.strip():
            raise ValueError(f"document {self.id}: empty headline")
        if self.label not in (None, 0, 1):
            raise ValueError(f"document {self.id}: label must be 0, 1 or None")


def label_from_truth_mean(truth_mean: float) -> int:
    """Clickbait iff the mean annotator score is strictly above 0.5."""
    return int(truth_mean > CLICKBAIT_THRESHOLD)


@dataclass
class LoadReport:
    loaded: int = 0
    skipped: int = 0
    reasons: Counter = field(default_factory=Counter)

    def skip(self, where: str, reason: str) -> None:
        self.skipped += 1
        self.reasons[reason] += 1
        log.warning("skipping %s: %s", where, reason)


# --- Webis-Clickbait-17 ----------------------------------------------------

def _read_jsonl(path: Path, report: LoadReport) -> Iterable[dict]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                report.skip(f"{path}:{lineno}", "invalid json")
                continue
            if not isinstance(rec, dict):
                report.skip(f"{path}:{lineno}", "record is not an object")
                continue
            yield rec


def _text(value) -> str:
    if isinstance(value, list):
        return " ".join(str(v) for v in value if v)
    return str(value or "")


def _webis_label(rec: Mapping) -> tuple[int | None, float | None]:
    mean = rec.get("truthMean")
    if mean is not None:
        mean = float(mean)
        return label_from_truth_mean(mean), mean
    cls = rec.get("truthClass")
    if cls is not None:
        return int(str(cls).strip().lower() == "clickbait"), None
    return None, None


def _load_webis_file(instances: Path, truth: dict[str, dict], report: LoadReport) -> list[Document]:
    docs = []
    for rec in _read_jsonl(instances, report):
        rid = rec.get("id")
        headline = _text(rec.get("postText")).strip()
        if rid is None or not headline:
            report.skip(f"{instances} id={rid}", "missing id or post text")
            continue
        merged = {**rec, **truth.get(str(rid), {})}
        try:
            label, mean = _webis_label(merged)
        except (TypeError, ValueError):
            report.skip(f"{instances} id={rid}", "unparseable truth value")
            continue
        docs.append(Document(str(rid), headline, _text(rec.get("targetParagraphs")), label, mean))
        report.loaded += 1
    return docs


def load_webis(path: str | Path, report: LoadReport | None = None) -> list[Document]:
    """Load Webis-Clickbait-17 ``instances.jsonl`` (+ ``truth.jsonl``).

    ``path`` may be a single jsonl file with inline truth fields, or a
    directory; every ``instances.jsonl`` below it is read together with the
    ``truth.jsonl`` next to it.
    """
    path = Path(path)
    report = report if report is not None else LoadReport()
    if not path.exists():
        raise FileNotFoundError(path)
    files = sorted(path.rglob("instances.jsonl")) if path.is_dir() else [path]
    if not files:
        raise FileNotFoundError(f"no instances.jsonl under {path}")
    docs = []
    for inst in files:
        truth_file = inst.with_name("truth.jsonl")
        truth = {}
        if truth_file.exists() and truth_file != inst:
            truth = {str(r["id"]): r for r in _read_jsonl(truth_file, LoadReport()) if "id" in r}
        docs.extend(_load_webis_file(inst, truth, report))
    if report.skipped:
        log.warning("%s: skipped %d malformed records", path, report.skipped)
    return docs


# --- News_Clickbait --------------------------------------------------------

_HEADLINE_COLS = ("headline", "title", "headlines")
_BODY_COLS = ("body", "content", "text", "article")
_LABEL_COLS = ("label", "clickbait", "class", "is_clickbait")
_POSITIVE = {"1", "clickbait", "true", "yes"}
_NEGATIVE = {"0", "news", "not-clickbait", "no-clickbait", "false", "no"}


def _pick(fieldnames: Sequence[str], options: Sequence[str]) -> str | None:
    lower = {f.lower().strip(): f for f in fieldnames}
    return next((lower[o] for o in options if o in lower), None)


def _load_delimited(path: Path, report: LoadReport) -> list[Document]:
    with open(path, encoding="utf-8", newline="") as fh:
        sample = fh.read(8192)
        fh.seek(0)
        dialect = csv.excel_tab if path.suffix == ".tsv" or sample.count("\t") > sample.count(",") else csv.excel
        reader = csv.DictReader(fh, dialect=dialect)
        cols = reader.fieldnames or []
        head_col, body_col, label_col = _pick(cols, _HEADLINE_COLS), _pick(cols, _BODY_COLS), _pick(cols, _LABEL_COLS)
        if head_col is None:
            raise ValueError(f"{path}: no headline column among {cols}")
        id_col = _pick(cols, ("id",))
        docs = []
        for i, row in enumerate(reader):
            where = f"{path}:{i + 2}"
            headline = (row.get(head_col) or "").strip()
            if not headline:
                report.skip(where, "empty headline")
                continue
            label = None
            if label_col is not None:
                raw = (row.get(label_col) or "").strip().lower()
                if raw in _POSITIVE:
                    label = 1
                elif raw in _NEGATIVE:
                    label = 0
                else:
                    report.skip(where, f"unrecognised label {raw!r}")
                    continue
            doc_id = (row.get(id_col) or "").strip() if id_col else ""
            docs.append(Document(doc_id or f"{path.stem}-{i}", headline,
                                 (row.get(body_col) or "").strip() if body_col else "", label))
            report.loaded += 1
    return docs


def load_news_clickbait(path: str | Path, report: LoadReport | None = None) -> list[Document]:
    """Load delimited headline/body/label rows; a directory loads every
    ``.csv``/``.tsv`` file in it, in name order."""
    path = Path(path)
    report = report if report is not None else LoadReport()
    if not path.exists():
        raise FileNotFoundError(path)
    files = sorted(p for p in path.iterdir() if p.suffix in (".csv", ".tsv")) if path.is_dir() else [path]
    docs = []
    for f in files:
        docs.extend(_load_delimited(f, report))
    if report.skipped:
        log.warning("%s: skipped %d malformed rows", path, report.skipped)
    return docs


def load_dataset(path: str | Path, kind: str | None = None, report: LoadReport | None = None) -> list[Document]:
    """Dispatch on ``kind`` ('webis17' / 'news_clickbait') or guess from the path."""
    path = Path(path)
    if kind is None:
        kind = "webis17" if path.suffix == ".jsonl" or (path.is_dir() and any(path.rglob("instances.jsonl"))) \
            else "news_clickbait"
    if kind == "webis17":
        return load_webis(path, report)
    if kind == "news_clickbait":
        return load_news_clickbait(path, report)
    raise ValueError(f"unknown dataset kind {kind!r}")


def corpus_statistics(docs: Sequence[Document]) -> dict:
    labeled = [d for d in docs if d.label is not None]
    n = len(docs)
    return {
        "total": n,
        "labeled": len(labeled),
        "clickbait": sum(d.label for d in labeled),
        "avg_words": sum(len(d.content.split()) for d in docs) / n if n else 0.0,
        "avg_headline_words": sum(len(d.headline.split()) for d in docs) / n if n else 0.0,
    }


# --- few-shot sampling -----------------------------------------------------

@dataclass(frozen=True)
class FewShotSplit:
    k_shot: int
    seed: int
    train: tuple[Document, ...]
    test: tuple[Document, ...]

    def manifest(self) -> dict:
        return {"k_shot": self.k_shot, "seed": self.seed,
                "train": [d.id for d in self.train], "test": [d.id for d in self.test]}

    @classmethod
    def from_manifest(cls, manifest: Mapping, docs: Sequence[Document]) -> "FewShotSplit":
        by_id = {d.id: d for d in docs}
        return cls(int(manifest["k_shot"]), int(manifest["seed"]),
                   tuple(by_id[i] for i in manifest["train"]), tuple(by_id[i] for i in manifest["test"]))


def sample_few_shot(docs: Sequence[Document], k_shot: int, seed: int) -> FewShotSplit:
    """Draw ``k_shot`` documents per class without replacement; every other
    labeled document goes to the test side."""
    if k_shot < 1:
        raise ValueError("k_shot must be >= 1")
    labeled = [d for d in docs if d.label is not None]
    ids = [d.id for d in labeled]
    if len(set(ids)) != len(ids):
        raise ValueError("document ids are not unique")
    by_class: dict[int, list[Document]] = {}
    for d in labeled:
        by_class.setdefault(d.label, []).append(d)
    if not by_class:
        raise ValueError("no labeled documents to sample from")
    rng = random.Random(seed)
    chosen: set[str] = set()
    train = []
    for label in sorted(by_class):
        pool = by_class[label]
        if len(pool) < k_shot:
            raise ValueError(f"class {label} has {len(pool)} documents, fewer than k_shot={k_shot}")
        picked = rng.sample(pool, k_shot)
        train.extend(picked)
        chosen.update(d.id for d in picked)
    test = tuple(d for d in labeled if d.id not in chosen)
    return FewShotSplit(k_shot, seed, tuple(train), test)


# --- auxiliary corpora -----------------------------------------------------

def load_rerank_corpus(path: str | Path) -> list[RerankTrainingExample]:
    """JSONL with ``document``, ``candidates`` and ``reference`` fields."""
    report = LoadReport()
    out = []
    for rec in _read_jsonl(Path(path), report):
        try:
            out.append(RerankTrainingExample(rec["document"], tuple(rec["candidates"]), rec["reference"]))
        except (KeyError, ValueError, TypeError) as exc:
            report.skip(f"{path} record", str(exc))
    return out


def read_summaries(path: str | Path) -> dict[str, str]:
    """Selected-summary records (``id``, ``summary``) keyed by document id."""
    with open(path, encoding="utf-8") as fh:
        return {str(r["id"]): r["summary"] for r in map(json.loads, filter(str.strip, fh))}
