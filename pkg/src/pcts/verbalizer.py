"""Knowledge-expanded verbalizer construction.

Five strategies propose ranked label words; ``integrate`` merges them into a
per-label word list with provenance. Concept retrieval and MLM prediction
generate new words; the embedding, frequency and context strategies re-rank
the pool those two produce.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .lm_backend import (
    ConceptBase,
    EmbeddingTable,
    FrequencyLexicon,
    MaskScorer,
    cosine_similarity,
    mask_distribution,
    masked_window_loss,
    zipf_of,
)
from .prompt_templates import RenderedPrompt

CONCEPTS = "concepts"
MLM = "mlm_prediction"
EMBEDDING = "embedding_similarity"
FREQUENCY = "frequency"
CONTEXT = "context"
STRATEGIES = (CONCEPTS, MLM, EMBEDDING, FREQUENCY, CONTEXT)

DEFAULT_N_A = 15
DEFAULT_WINDOW = 5

_SUFFIXES = (
    ("ingly", ""), ("edly", ""), ("ness", ""), ("ment", ""), ("ings", ""), ("ing", ""),
    ("ies", "y"), ("ied", "y"), ("ers", ""), ("er", ""), ("es", ""), ("ed", ""), ("ly", ""), ("s", ""),
)


def stem(word: str) -> str:
    """Crude suffix stripper; enough to equate inflections of a label name."""
    w = word.lower().replace("-", "").replace("_", "")
    for suffix, repl in _SUFFIXES:
        if w.endswith(suffix) and len(w) - len(suffix) >= 3:
            return w[: len(w) - len(suffix)] + repl
    return w


def is_derivation(word: str, label: str) -> bool:
    """True when ``word`` shares a 4-character prefix or a stem with ``label``."""
    w, lab = word.lower(), label.lower()
    k = min(4, len(lab))
    return w[:k] == lab[:k] or stem(w) == stem(lab)


def _check_cap(n_a: int) -> None:
    if n_a < 1:
        raise ValueError(f"per-strategy cap must be >= 1, got {n_a}")


def _keep(word: str, exclude: Sequence[str]) -> bool:
    return not any(is_derivation(word, lab) for lab in exclude)


@dataclass(frozen=True)
class StrategyResult:
    strategy: str
    ranked_words: tuple[tuple[str, float], ...]

    @property
    def words(self) -> list[str]:
        return [w for w, _ in self.ranked_words]

    def __len__(self):
        return len(self.ranked_words)


def _result(strategy, scored, n_a, exclude=()) -> StrategyResult:
    kept = [(w, float(s)) for w, s in scored if _keep(w, exclude)]
    return StrategyResult(strategy, tuple(kept[:n_a]))


def _dedup(words: Iterable[str]) -> list[str]:
    return list(dict.fromkeys(words))


# --- strategies ------------------------------------------------------------

def _concept_ranking(label, kb, embeddings, direction="concepts"):
    if label not in embeddings:
        raise KeyError(f"label {label!r} has no embedding vector")
    retrieved = kb.concepts_of(label) if direction == "concepts" else kb.instances_of(label)
    anchor = embeddings[label]
    scored = [(w, cosine_similarity(embeddings[w], anchor)) for w, _ in retrieved
              if w in embeddings and not is_derivation(w, label)]
    # Stable: ties keep retrieval (probability) order.
    return sorted(scored, key=lambda ws: -ws[1])


def strategy_concepts(label_name: str, kb: ConceptBase, embeddings: EmbeddingTable,
                      n_a: int = DEFAULT_N_A, exclude: Sequence[str] = (),
                      direction: str = "concepts") -> StrategyResult:
    """Concepts retrieved for the label, re-ranked by cosine to the label vector."""
    _check_cap(n_a)
    return _result(CONCEPTS, _concept_ranking(label_name, kb, embeddings, direction), n_a, exclude)


def _average_distribution(prompts, scorer) -> dict[str, float]:
    if isinstance(prompts, RenderedPrompt):
        prompts = [prompts]
    acc: dict[str, float] = {}
    for p in prompts:
        for w, pr in mask_distribution(p, scorer).word_probs.items():
            acc[w] = acc.get(w, 0.0) + pr
    return {w: v / len(prompts) for w, v in acc.items()}


def _mlm_ranking(prompts, scorer):
    return sorted(_average_distribution(prompts, scorer).items(), key=lambda kv: (-kv[1], kv[0]))


def strategy_mlm(prompt: RenderedPrompt | Sequence[RenderedPrompt], scorer: MaskScorer,
                 n_a: int = DEFAULT_N_A, exclude: Sequence[str] = ()) -> StrategyResult:
    """Top words at the mask; several prompts are averaged first."""
    _check_cap(n_a)
    return _result(MLM, _mlm_ranking(prompt, scorer), n_a, exclude)


def strategy_embedding(label_name: str, pool: Sequence[str], embeddings: EmbeddingTable,
                       n_a: int = DEFAULT_N_A, exclude: Sequence[str] = ()) -> StrategyResult:
    _check_cap(n_a)
    if label_name not in embeddings:
        raise KeyError(f"label {label_name!r} has no embedding vector")
    anchor = embeddings[label_name]
    scored = [(w, cosine_similarity(embeddings[w], anchor)) for w in _dedup(pool) if w in embeddings]
    return _result(EMBEDDING, sorted(scored, key=lambda ws: (-ws[1], ws[0])), n_a, exclude)


def strategy_frequency(pool: Sequence[str], lexicon: FrequencyLexicon,
                       n_a: int = DEFAULT_N_A, exclude: Sequence[str] = ()) -> StrategyResult:
    _check_cap(n_a)
    scored = [(w, zipf_of(w, lexicon)) for w in _dedup(pool)]
    return _result(FREQUENCY, sorted(scored, key=lambda ws: -ws[1]), n_a, exclude)


def context_losses(contexts: Sequence[tuple[Sequence[str], int]], pool: Sequence[str],
                   scorer: MaskScorer, c: int = DEFAULT_WINDOW) -> dict[str, float]:
    """Mean window loss of each pool word substituted at the mask of each context."""
    out = {}
    for word in _dedup(pool):
        total = 0.0
        for tokens, mask_index in contexts:
            filled = list(tokens)
            filled[mask_index] = word
            total += masked_window_loss(filled, mask_index, c, scorer)
        out[word] = total / len(contexts)
    return out


def strategy_context(prompt_tokens: Sequence[str], mask_index: int, pool: Sequence[str],
                     scorer: MaskScorer, c: int = DEFAULT_WINDOW, n_a: int = DEFAULT_N_A,
                     exclude: Sequence[str] = ()) -> StrategyResult:
    """Rank pool words by ascending window loss; scores are negated losses."""
    _check_cap(n_a)
    if not 0 <= mask_index < len(prompt_tokens):
        raise IndexError(f"mask index {mask_index} out of range")
    losses = context_losses([(prompt_tokens, mask_index)], pool, scorer, c)
    ranked = sorted(losses.items(), key=lambda kv: (kv[1], kv[0]))
    return _result(CONTEXT, [(w, -loss) for w, loss in ranked], n_a, exclude)


# --- verbalizer ------------------------------------------------------------

@dataclass
class Verbalizer:
    label_words: dict[str, list[str]]
    provenance: dict[tuple[str, str], frozenset[str]] = field(default_factory=dict)
    n_a: int = DEFAULT_N_A

    @property
    def labels(self) -> list[str]:
        return list(self.label_words)

    @classmethod
    def from_label_names(cls, labels: Sequence[str]) -> "Verbalizer":
        return cls({lab: [lab] for lab in labels})

    def to_json(self) -> str:
        entries = [
            {"label": lab, "word": w, "rank": i,
             "provenance": sorted(self.provenance.get((lab, w), ()))}
            for lab, words in self.label_words.items() for i, w in enumerate(words)
        ]
        doc = {"format": "pcts-verbalizer/1", "n_a": self.n_a, "labels": self.labels, "entries": entries}
        return json.dumps(doc, indent=1, sort_keys=True, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Verbalizer":
        doc = json.loads(text)
        label_words: dict[str, list[tuple[int, str]]] = {lab: [] for lab in doc["labels"]}
        provenance = {}
        for e in doc["entries"]:
            label_words[e["label"]].append((e["rank"], e["word"]))
            provenance[(e["label"], e["word"])] = frozenset(e["provenance"])
        words = {lab: [w for _, w in sorted(ws)] for lab, ws in label_words.items()}
        return cls(words, provenance, doc.get("n_a", DEFAULT_N_A))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Verbalizer":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()[:16]


def integrate(results: Mapping[str, Sequence[StrategyResult]], label_names: Sequence[str],
              n_a: int = DEFAULT_N_A, mode: str = "union", min_votes: int = 2) -> Verbalizer:
    """Merge strategy outputs per label.

    ``union`` keeps every word; ``vote`` keeps words proposed by at least
    ``min_votes`` strategies. The label name always leads its list; the rest
    is ordered by number of contributing strategies, then best rank, then
    alphabetically. Derivations of any other label name are dropped.
    """
    if mode not in ("union", "vote"):
        raise ValueError(f"unknown integration mode {mode!r}")
    label_words, provenance = {}, {}
    for label in label_names:
        others = [lab for lab in label_names if lab != label]
        votes: dict[str, set[str]] = {}
        best: dict[str, int] = {}
        for res in results.get(label, ()):
            for rank, word in enumerate(res.words):
                if not _keep(word, others):
                    continue
                votes.setdefault(word, set()).add(res.strategy)
                best[word] = min(best.get(word, rank), rank)
        if mode == "vote":
            votes = {w: s for w, s in votes.items() if len(s) >= min_votes}
        rest = sorted((w for w in votes if w != label), key=lambda w: (-len(votes[w]), best[w], w))
        label_words[label] = [label] + rest
        for w in label_words[label]:
            provenance[(label, w)] = frozenset(votes.get(w, ()))
    return Verbalizer(label_words, provenance, n_a)


@dataclass
class VerbalizerResources:
    concept_base: ConceptBase | None = None
    embeddings: EmbeddingTable | None = None
    lexicon: FrequencyLexicon | None = None
    scorer: MaskScorer | None = None


@dataclass
class BuilderConfig:
    n_a: int = DEFAULT_N_A
    window: int = DEFAULT_WINDOW
    strategies: tuple[str, ...] = STRATEGIES
    pool_size: int | None = None  # per generative source; defaults to 3 * n_a
    mode: str = "union"
    min_votes: int = 2
    concept_direction: str = "concepts"
    max_context_prompts: int = 4

    def __post_init__(self):
        _check_cap(self.n_a)
        unknown = set(self.strategies) - set(STRATEGIES)
        if unknown:
            raise ValueError(f"unknown strategies: {sorted(unknown)}")


def _require(resource, name, strategy):
    if resource is None:
        raise ValueError(f"strategy {strategy!r} needs a {name}")
    return resource


def build_verbalizer(label_names: Sequence[str], resources: VerbalizerResources,
                     prompts_by_label: Mapping[str, Sequence[RenderedPrompt]],
                     config: BuilderConfig = BuilderConfig()):
    """Run the selected strategies for every label and integrate them.

    Returns ``(verbalizer, {label: [StrategyResult, ...]})``.
    """
    chosen = set(config.strategies)
    pool_cap = config.pool_size or 3 * config.n_a
    results: dict[str, list[StrategyResult]] = {}
    for label in label_names:
        exclude = [lab for lab in label_names if lab != label]
        prompts = list(prompts_by_label.get(label, ()))
        concept_rank: list = []
        mlm_rank: list = []
        if (resources.concept_base is not None and resources.embeddings is not None
                and (CONCEPTS in chosen or label in resources.embeddings)):
            concept_rank = _concept_ranking(label, resources.concept_base, resources.embeddings,
                                            config.concept_direction)
        elif CONCEPTS in chosen:
            _require(resources.concept_base, "concept base", CONCEPTS)
            _require(resources.embeddings, "embedding table", CONCEPTS)
        if resources.scorer is not None and prompts:
            mlm_rank = _mlm_ranking(prompts, resources.scorer)
        elif MLM in chosen:
            _require(resources.scorer, "mask scorer", MLM)
        pool = _dedup([w for w, _ in concept_rank if _keep(w, exclude)][:pool_cap]
                      + [w for w, _ in mlm_rank if _keep(w, exclude)][:pool_cap])

        out = []
        if CONCEPTS in chosen:
            out.append(_result(CONCEPTS, concept_rank, config.n_a, exclude))
        if MLM in chosen:
            out.append(_result(MLM, mlm_rank, config.n_a, exclude))
        if EMBEDDING in chosen:
            emb = _require(resources.embeddings, "embedding table", EMBEDDING)
            out.append(strategy_embedding(label, pool, emb, config.n_a, exclude))
        if FREQUENCY in chosen:
            lex = _require(resources.lexicon, "frequency lexicon", FREQUENCY)
            out.append(strategy_frequency(pool, lex, config.n_a, exclude))
        if CONTEXT in chosen:
            scorer = _require(resources.scorer, "mask scorer", CONTEXT)
            contexts = [(p.tokens, p.mask_position) for p in prompts[: config.max_context_prompts]]
            if contexts and pool:
                losses = context_losses(contexts, pool, scorer, config.window)
                ranked = sorted(losses.items(), key=lambda kv: (kv[1], kv[0]))
                out.append(_result(CONTEXT, [(w, -v) for w, v in ranked], config.n_a, exclude))
            else:
                out.append(StrategyResult(CONTEXT, ()))
        results[label] = out
    verbalizer = integrate(results, label_names, config.n_a, config.mode, config.min_votes)
    return verbalizer, results
