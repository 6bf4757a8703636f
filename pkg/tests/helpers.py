"""Synthetic data builders shared by several test modules."""

import random

from pcts.reranker import RerankTrainingExample

VOCAB = [f"w{i}" for i in range(300)]


def synthetic_rerank_example(rng: random.Random, m: int = 6) -> RerankTrainingExample:
    """A document, its reference summary and m candidates, one being a copy
    of the reference; the others are corrupted versions of it."""
    doc_vocab = rng.sample(VOCAB[:200], 40)
    sentences = [" ".join(rng.choices(doc_vocab, k=8)) + "." for _ in range(6)]
    document = " ".join(sentences)
    start = rng.randrange(0, 5)
    reference = " ".join(sentences[start:start + 2])
    ref_tokens = reference.replace(".", "").split()
    candidates = {reference}
    while len(candidates) < m:
        toks = list(ref_tokens)
        kind = rng.random()
        if kind < 0.5:
            for i in rng.sample(range(len(toks)), rng.randint(2, 6)):
                toks[i] = rng.choice(VOCAB[200:])
        else:
            i = rng.randrange(0, len(toks) - 4)
            window = toks[i:i + 5]
            rng.shuffle(window)
            toks[i:i + 5] = window
            toks[rng.randrange(len(toks))] = rng.choice(VOCAB[200:])
        candidates.add(" ".join(toks) + ".")
    ordered = sorted(candidates)
    rng.shuffle(ordered)
    return RerankTrainingExample(document, tuple(ordered), reference)


def synthetic_rerank_corpus(n: int, seed: int, m: int = 6):
    rng = random.Random(seed)
    return [synthetic_rerank_example(rng, m) for _ in range(n)]
