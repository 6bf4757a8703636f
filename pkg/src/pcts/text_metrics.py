"""ROUGE-1, ROUGE-2 and ROUGE-L on lowercase word tokens.

Scores are computed from clipped n-gram multiset overlap and from the
longest common subsequence. No stemming is applied.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

_PUNCT = re.compile(r"[^\w\s]+")

METRICS = ("R1", "R2", "RL")


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_pr(cls, precision: float, recall: float) -> "RougeScore":
        if precision + recall == 0:
            return cls(precision, recall, 0.0)
        return cls(precision, recall, 2 * precision * recall / (precision + recall))


ZERO = RougeScore(0.0, 0.0, 0.0)


def tokenize(text: str) -> list[str]:
    """Lowercase, delete punctuation and split on whitespace."""
    return _PUNCT.sub("", text.lower()).split()


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: Sequence[str], reference: Sequence[str], n: int) -> RougeScore:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    cand = ngrams(candidate, n)
    ref = ngrams(reference, n)
    cand_total = sum(cand.values())
    ref_total = sum(ref.values())
    if cand_total == 0 or ref_total == 0:
        return ZERO
    overlap = sum((cand & ref).values())
    return RougeScore.from_pr(overlap / cand_total, overlap / ref_total)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> RougeScore:
    if not candidate or not reference:
        return ZERO
    lcs = lcs_length(candidate, reference)
    return RougeScore.from_pr(lcs / len(candidate), lcs / len(reference))


def rouge(candidate: Sequence[str], reference: Sequence[str], metric: str) -> RougeScore:
    """Dispatch on a metric name from ``METRICS``."""
    if metric == "R1":
        return rouge_n(candidate, reference, 1)
    if metric == "R2":
        return rouge_n(candidate, reference, 2)
    if metric == "RL":
        return rouge_l(candidate, reference)
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
