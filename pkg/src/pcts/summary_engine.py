"""Candidate summary generation behind a pluggable backend registry."""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Protocol, runtime_checkable

from .text_metrics import tokenize

_SENTENCE = re.compile(r"[^.!?]+[.!?]*")


class DecodingMode(str, Enum):
    BEAM = "beam"
    DIVERSE_BEAM = "diverse_beam"
    EXTRACTIVE_FALLBACK = "extractive_fallback"


class ContentEmptyError(ValueError):
    pass


class BackendError(RuntimeError):
    def __init__(self, tag: str, cause: BaseException):
        super().__init__(f"summary backend {tag!r} failed: {cause}")
        self.tag = tag


@dataclass(frozen=True)
class GeneratorConfig:
    num_candidates: int = 8
    decoding_mode: DecodingMode = DecodingMode.EXTRACTIVE_FALLBACK
    max_summary_words: int = 41
    seed: int = 0

    def __post_init__(self):
        if self.num_candidates < 1:
            raise ValueError("num_candidates must be >= 1")
        if self.max_summary_words < 1:
            raise ValueError("max_summary_words must be >= 1")
        object.__setattr__(self, "decoding_mode", DecodingMode(self.decoding_mode))


@dataclass(frozen=True)
class SummaryCandidateSet:
    source_id: str
    candidates: tuple[str, ...]
    generator_tag: str

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("a candidate set needs at least one candidate")
        if len(set(self.candidates)) != len(self.candidates):
            raise ValueError("candidates must be distinct")

    def to_record(self) -> dict:
        return {"id": self.source_id, "generator_tag": self.generator_tag,
                "candidates": list(self.candidates)}

    @classmethod
    def from_record(cls, record: dict) -> "SummaryCandidateSet":
        return cls(str(record["id"]), tuple(record["candidates"]), record["generator_tag"])


@runtime_checkable
class SummaryGenerator(Protocol):
    name: str
    concurrent_safe: bool

    def generate(self, content: str, m: int, mode: DecodingMode, seed: int,
                 max_words: int) -> list[str]:
        ...


def split_sentences(content: str) -> list[str]:
    return [s.strip() for s in _SENTENCE.findall(content) if s.strip()]


def extractive_fallback(content: str, m: int, max_words: int) -> list[str]:
    """Lead-window extracts: candidate ``i`` starts at sentence ``i``.

    Each window is extended sentence by sentence while the total stays within
    ``max_words``; the first sentence is always kept.
    """
    if m < 1 or max_words < 1:
        raise ValueError("m and max_words must be >= 1")
    sentences = split_sentences(content)
    if not sentences:
        raise ContentEmptyError("content has no sentences")
    lengths = [len(s.split()) for s in sentences]
    out = []
    for start in range(min(m, len(sentences))):
        end = start + 1
        used = lengths[start]
        while end < len(sentences) and used + lengths[end] <= max_words:
            used += lengths[end]
            end += 1
        out.append(" ".join(sentences[start:end]))
    return out


class ExtractiveGenerator:
    name = "extractive_fallback"
    concurrent_safe = True

    def generate(self, content, m, mode, seed, max_words):
        return extractive_fallback(content, m, max_words)


class PegasusGenerator:
    """Seq2seq adapter around a Hugging Face summarization checkpoint.

    Loaded lazily; requires the optional ``transformers`` and ``torch``
    packages and a locally available checkpoint.
    """

    name = "pegasus"
    concurrent_safe = False

    def __init__(self, checkpoint: str = "google/pegasus-cnn_dailymail", num_beam_groups: int = 4):
        self.checkpoint = checkpoint
        self.num_beam_groups = num_beam_groups
        self._model = None
        self._tokenizer = None

    def _load(self):
        if self._model is None:
            from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

            self._tokenizer = AutoTokenizer.from_pretrained(self.checkpoint)
            self._model = AutoModelForSeq2SeqLM.from_pretrained(self.checkpoint)
            self._model.eval()

    def generate(self, content, m, mode, seed, max_words):
        import torch

        self._load()
        torch.manual_seed(seed)
        batch = self._tokenizer([content], truncation=True, return_tensors="pt")
        kwargs = dict(num_beams=m, num_return_sequences=m, max_new_tokens=2 * max_words)
        if mode == DecodingMode.DIVERSE_BEAM:
            groups = max(g for g in range(1, self.num_beam_groups + 1) if m % g == 0)
            kwargs.update(num_beam_groups=groups, diversity_penalty=1.0)
        with torch.no_grad():
            out = self._model.generate(**batch, **kwargs)
        return self._tokenizer.batch_decode(out, skip_special_tokens=True)


_REGISTRY: dict[str, Callable[[], SummaryGenerator]] = {
    "extractive_fallback": ExtractiveGenerator,
    "pegasus": PegasusGenerator,
}
_LOCKS: dict[int, threading.Lock] = {}
_LOCKS_GUARD = threading.Lock()


def register_backend(name: str, factory: Callable[[], SummaryGenerator]) -> None:
    _REGISTRY[name] = factory


def get_backend(name: str) -> SummaryGenerator:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise KeyError(f"unknown summary backend {name!r}; known: {sorted(_REGISTRY)}") from None


def _lock_for(backend) -> threading.Lock:
    with _LOCKS_GUARD:
        return _LOCKS.setdefault(id(backend), threading.Lock())


def generate_candidates(content: str, config: GeneratorConfig, backend: SummaryGenerator,
                        source_id: str = "") -> SummaryCandidateSet:
    if not tokenize(content):
        raise ContentEmptyError(f"content of {source_id or 'document'} is empty")
    tag = f"{backend.name}:{config.decoding_mode.value}"
    try:
        if getattr(backend, "concurrent_safe", False):
            raw = backend.generate(content, config.num_candidates, config.decoding_mode,
                                   config.seed, config.max_summary_words)
        else:
            with _lock_for(backend):
                raw = backend.generate(content, config.num_candidates, config.decoding_mode,
                                       config.seed, config.max_summary_words)
    except ContentEmptyError:
        raise
    except Exception as exc:
        raise BackendError(tag, exc) from exc
    seen = dict.fromkeys(s for s in (c.strip() for c in raw) if s)
    candidates = tuple(seen)[:config.num_candidates]
    if not candidates:
        raise BackendError(tag, RuntimeError("backend returned no candidates"))
    return SummaryCandidateSet(source_id, candidates, tag)


def write_candidate_sets(sets: Iterable[SummaryCandidateSet], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sets:
            fh.write(json.dumps(s.to_record(), ensure_ascii=False) + "\n")


def read_candidate_sets(path: str | Path) -> list[SummaryCandidateSet]:
    with open(path, encoding="utf-8") as fh:
        return [SummaryCandidateSet.from_record(json.loads(line)) for line in fh if line.strip()]
