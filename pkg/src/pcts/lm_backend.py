"""Resource providers: mask scorers, embeddings, Zipf lexicon, concept base.

Every external model or data dump sits behind a small interface here so the
rest of the pipeline runs against table-driven test doubles.
"""

from __future__ import annotations

import csv
import json
import math
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from .prompt_templates import RenderedPrompt

NORMALIZATION_TOL = 1e-6
MIN_PROB = 1e-12


class ScorerError(RuntimeError):
    pass


class ZeroVectorError(ValueError):
    pass


@dataclass(frozen=True)
class MaskDistribution:
    word_probs: Mapping[str, float]

    def __post_init__(self):
        total = 0.0
        for w, p in self.word_probs.items():
            if not p >= 0:
                raise ValueError(f"negative or NaN probability for {w!r}: {p}")
            total += p
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"mask distribution sums to {total:.9f}, not 1")

    def prob(self, word: str) -> float:
        return float(self.word_probs.get(word, 0.0))

    def restrict(self, words: Iterable[str]) -> dict[str, float]:
        return {w: self.prob(w) for w in words}

    def top(self, k: int) -> list[tuple[str, float]]:
        return sorted(self.word_probs.items(), key=lambda kv: (-kv[1], kv[0]))[:k]


@runtime_checkable
class MaskScorer(Protocol):
    """Masked-LM scorer.

    ``predict`` receives a token list whose ``mask_index`` entry is the mask
    token and returns the distribution over the vocabulary at that slot.
    """

    mask_token: str
    concurrent_safe: bool

    def predict(self, tokens: Sequence[str], mask_index: int) -> MaskDistribution:
        ...


def mask_distribution(prompt: RenderedPrompt, scorer: MaskScorer) -> MaskDistribution:
    try:
        dist = scorer.predict(prompt.tokens, prompt.mask_position)
    except Exception as exc:
        pid = prompt.key or f"template-{prompt.template_id}"
        raise ScorerError(f"scorer failed on prompt {pid!r}: {exc}") from exc
    if not isinstance(dist, MaskDistribution):
        dist = MaskDistribution(dict(dist))
    return dist


def masked_window_loss(prompt_tokens: Sequence[str], center_index: int, c: int,
                       scorer: MaskScorer) -> float:
    """Sum of -log p(true token) masking each position of the window in turn.

    The window is ``[center - c, center + c]`` clipped to the sequence.
    Probabilities are floored at ``MIN_PROB`` so the loss stays finite.
    """
    if c < 1:
        raise ValueError("window size must be >= 1")
    if not 0 <= center_index < len(prompt_tokens):
        raise IndexError(f"center index {center_index} outside sequence of length {len(prompt_tokens)}")
    tokens = list(prompt_tokens)
    loss = 0.0
    for pos in range(max(0, center_index - c), min(len(tokens), center_index + c + 1)):
        masked = tokens.copy()
        masked[pos] = scorer.mask_token
        try:
            dist = scorer.predict(masked, pos)
        except Exception as exc:
            raise ScorerError(f"scorer failed at window position {pos}: {exc}") from exc
        loss -= math.log(max(dist.prob(tokens[pos]), MIN_PROB))
    return loss


class TableScorer:
    """Deterministic scorer driven by a fixture table.

    Rules are checked in order against the lowercased masked text; the first
    rule whose ``contains`` substrings are all present supplies the
    distribution, otherwise ``default`` does.
    """

    concurrent_safe = True

    def __init__(self, default: Mapping[str, float], rules: Sequence[Mapping] = (),
                 mask_token: str = "[MASK]", normalize: bool = False):
        self.mask_token = mask_token
        self.rules = [(tuple(s.lower() for s in r["contains"]), self._dist(r["probs"], normalize))
                      for r in rules]
        self.default = self._dist(default, normalize)

    @staticmethod
    def _dist(probs: Mapping[str, float], normalize: bool) -> MaskDistribution:
        probs = {str(w): float(p) for w, p in probs.items()}
        if normalize:
            total = sum(probs.values())
            probs = {w: p / total for w, p in probs.items()}
        return MaskDistribution(probs)

    @classmethod
    def from_file(cls, path: str | Path) -> "TableScorer":
        spec = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(spec["default"], spec.get("rules", ()), spec.get("mask_token", "[MASK]"),
                   spec.get("normalize", False))

    @property
    def vocabulary(self) -> list[str]:
        words = set(self.default.word_probs)
        for _, d in self.rules:
            words.update(d.word_probs)
        return sorted(words)

    def predict(self, tokens, mask_index):
        if tokens[mask_index] != self.mask_token:
            raise ScorerError(f"position {mask_index} does not hold the mask token")
        text = " ".join(tokens).lower()
        for needles, dist in self.rules:
            if all(n in text for n in needles):
                return dist
        return self.default


class UniformScorer:
    concurrent_safe = True

    def __init__(self, vocabulary: Sequence[str], mask_token: str = "[MASK]"):
        self.mask_token = mask_token
        words = sorted(set(vocabulary))
        self._dist = MaskDistribution({w: 1.0 / len(words) for w in words})

    def predict(self, tokens, mask_index):
        return self._dist


class TransformersMaskScorer:
    """Adapter over a Hugging Face masked LM (e.g. ``roberta-base``).

    Returns the distribution restricted to whole-word vocabulary entries,
    renormalised. Needs the optional ``transformers``/``torch`` packages.
    """

    concurrent_safe = False

    def __init__(self, model_name: str = "roberta-base"):
        from transformers import AutoModelForMaskedLM, AutoTokenizer

        self.tokenizer = AutoTokenizer.from_pretrained(model_name)
        self.model = AutoModelForMaskedLM.from_pretrained(model_name).eval()
        self.mask_token = self.tokenizer.mask_token
        words, ids = [], []
        for tok, idx in self.tokenizer.get_vocab().items():
            word = tok.lstrip("Ġ▁")
            if tok != word and word.isalpha():
                words.append(word.lower())
                ids.append(idx)
        self._words, self._ids = words, np.asarray(ids)

    def predict(self, tokens, mask_index):
        import torch

        batch = self.tokenizer(" ".join(tokens), return_tensors="pt", truncation=True)
        with torch.no_grad():
            logits = self.model(**batch).logits[0]
        where = (batch["input_ids"][0] == self.tokenizer.mask_token_id).nonzero()
        probs = torch.softmax(logits[where[0, 0]], dim=-1).numpy()[self._ids]
        probs = probs / probs.sum()
        out: dict[str, float] = defaultdict(float)
        for w, p in zip(self._words, probs):
            out[w] += float(p)
        return MaskDistribution(dict(out))


class SerializedScorer:
    """Wraps a scorer that is not safe for concurrent calls behind a lock."""

    concurrent_safe = True

    def __init__(self, inner: MaskScorer):
        self.inner = inner
        self.mask_token = inner.mask_token
        self._lock = threading.Lock()

    def predict(self, tokens, mask_index):
        with self._lock:
            return self.inner.predict(tokens, mask_index)


def guarded(scorer: MaskScorer) -> MaskScorer:
    return scorer if getattr(scorer, "concurrent_safe", False) else SerializedScorer(scorer)


# --- embeddings ------------------------------------------------------------

def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVectorError("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


@dataclass
class EmbeddingTable:
    dim: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for w, v in self.vectors.items():
            v = np.asarray(v, dtype=float)
            if v.shape != (self.dim,) or not np.all(np.isfinite(v)):
                raise ValueError(f"bad vector for {w!r}")
            self.vectors[w] = v

    def __contains__(self, word: str) -> bool:
        return word in self.vectors

    def __getitem__(self, word: str) -> np.ndarray:
        return self.vectors[word]

    def similarity(self, a: str, b: str) -> float:
        return cosine_similarity(self.vectors[a], self.vectors[b])


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Read the word2vec/fastText text format (``.vec``)."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: first line must be 'word_count dim'")
        count, dim = int(header[0]), int(header[1])
        vectors = {}
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip().split(" ")
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            vectors[parts[0]] = np.asarray(parts[1:], dtype=float)
    if len(vectors) != count:
        raise ValueError(f"{path}: header announces {count} words, found {len(vectors)}")
    return EmbeddingTable(dim, vectors)


# --- Zipf lexicon ----------------------------------------------------------

@dataclass
class FrequencyLexicon:
    zipf: dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_counts(cls, counts: Mapping[str, int], corpus_words: int) -> "FrequencyLexicon":
        """Zipf value = log10(occurrences per billion words)."""
        return cls({w: math.log10(n * 1e9 / corpus_words) for w, n in counts.items() if n > 0})


def zipf_of(word: str, lexicon: FrequencyLexicon) -> float:
    return lexicon.zipf.get(word, 0.0)


def _rows(path: str | Path, ncols: int) -> Iterable[list[str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        sample = fh.read(4096)
        fh.seek(0)
        delim = "\t" if "\t" in sample else ","
        for row in csv.reader(fh, delimiter=delim):
            if len(row) >= ncols and row[0].strip():
                yield [c.strip() for c in row[:ncols]]


def load_lexicon(path: str | Path) -> FrequencyLexicon:
    zipf = {}
    for word, value in _rows(path, 2):
        try:
            zipf[word.lower()] = float(value)
        except ValueError:
            continue  # header row
    return FrequencyLexicon(zipf)


# --- concept base ----------------------------------------------------------

class ConceptBase:
    """isA triples (instance, concept, probability) indexed both ways."""

    def __init__(self, triples: Iterable[tuple[str, str, float]] = ()):
        self.triples: list[tuple[str, str, float]] = []
        self._by_instance: dict[str, list[tuple[str, float]]] = defaultdict(list)
        self._by_concept: dict[str, list[tuple[str, float]]] = defaultdict(list)
        for inst, concept, p in triples:
            p = float(p)
            if not 0 < p <= 1:
                raise ValueError(f"probability for ({inst}, {concept}) outside (0, 1]: {p}")
            self.triples.append((inst, concept, p))
            self._by_instance[inst].append((concept, p))
            self._by_concept[concept].append((inst, p))

    def __len__(self):
        return len(self.triples)

    @staticmethod
    def _ranked(items):
        return sorted(items, key=lambda kv: (-kv[1], kv[0]))

    def concepts_of(self, instance: str) -> list[tuple[str, float]]:
        return self._ranked(self._by_instance.get(instance, ()))

    def instances_of(self, concept: str) -> list[tuple[str, float]]:
        return self._ranked(self._by_concept.get(concept, ()))


def load_concept_base(path: str | Path) -> ConceptBase:
    triples = []
    for inst, concept, p in _rows(path, 3):
        try:
            triples.append((inst.lower(), concept.lower(), float(p)))
        except ValueError:
            continue  # header row
    return ConceptBase(triples)
