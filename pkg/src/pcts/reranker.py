"""Multi-metric summary re-ranker.

A shared tanh encoder maps hand-built candidate features to a hidden vector;
one logistic head per ROUGE metric predicts whether the candidate is the
best under that metric. Training minimises the mean of the per-metric binary
cross-entropies with Adam.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .summary_engine import SummaryCandidateSet
from .text_metrics import METRICS, rouge, rouge_l, rouge_n, tokenize

log = logging.getLogger(__name__)

EPS = 1e-7
FEATURE_NAMES = (
    "r1_p", "r1_r", "r1_f", "r2_p", "r2_r", "r2_f", "rl_p", "rl_r", "rl_f",
    "length_ratio", "position",
)
FEATURE_DIM = len(FEATURE_NAMES)


class RerankerDivergence(RuntimeError):
    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True)
class RerankTrainingExample:
    document: str
    candidates: tuple[str, ...]
    reference_summary: str

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.candidates:
            raise ValueError("example has no candidates")
        if not self.reference_summary.strip():
            raise ValueError("reference summary is empty")


@dataclass
class RerankerConfig:
    hidden_dim: int = 16
    learning_rate: float = 0.01
    epochs: int = 300
    seed: int = 0
    init_scale: float = 0.5
    metrics: tuple[str, ...] = METRICS


@dataclass
class RerankerModel:
    # encoder_weights: (hidden, feature_dim + 1), last column is the bias
    encoder_weights: np.ndarray
    # each head: (hidden + 1,), last entry is the bias
    heads: dict[str, np.ndarray]
    feature_dim: int
    history: list[float] = field(default_factory=list, compare=False, repr=False)

    @property
    def metrics(self) -> tuple[str, ...]:
        return tuple(self.heads)

    @property
    def hidden_dim(self) -> int:
        return self.encoder_weights.shape[0]

    @classmethod
    def initialise(cls, feature_dim: int, hidden_dim: int, metrics: Sequence[str],
                   seed: int = 0, scale: float = 0.5) -> "RerankerModel":
        rng = np.random.default_rng(seed)
        enc = rng.normal(0.0, scale, size=(hidden_dim, feature_dim + 1))
        enc[:, -1] = 0.0
        heads = {m: np.concatenate([rng.normal(0.0, scale, hidden_dim), [0.0]]) for m in metrics}
        return cls(enc, heads, feature_dim)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.encoder_weights.ravel()] + [self.heads[m] for m in self.heads])

    def with_flat(self, theta: np.ndarray) -> "RerankerModel":
        n_enc = self.encoder_weights.size
        enc = theta[:n_enc].reshape(self.encoder_weights.shape).copy()
        heads, k = {}, n_enc
        for m in self.heads:
            heads[m] = theta[k:k + self.hidden_dim + 1].copy()
            k += self.hidden_dim + 1
        return RerankerModel(enc, heads, self.feature_dim)

    def probabilities(self, features: np.ndarray) -> dict[str, np.ndarray]:
        hidden = _encode(self.encoder_weights, features)
        return {m: _sigmoid(hidden @ h[:-1] + h[-1]) for m, h in self.heads.items()}


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _encode(enc: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.tanh(x @ enc[:, :-1].T + enc[:, -1])


# --- labels and losses -----------------------------------------------------

def labels_from_scores(scores: Sequence[float]) -> list[int]:
    if len(scores) == 0:
        raise ValueError("no candidates to label")
    best = max(scores)
    return [int(s == best) for s in scores]


def metric_scores(example: RerankTrainingExample, metric: str) -> list[float]:
    ref = tokenize(example.reference_summary)
    return [rouge(tokenize(c), ref, metric).f1 for c in example.candidates]


def label_candidates(example: RerankTrainingExample, metric: str) -> list[int]:
    """1 for every candidate attaining the best ``metric`` F1, else 0."""
    return labels_from_scores(metric_scores(example, metric))


def bce_loss(prediction, label):
    p = np.clip(prediction, EPS, 1 - EPS)
    return -label * np.log(p) - (1 - label) * np.log(1 - p)


def _loss_and_grad(model: RerankerModel, x: np.ndarray, labels: Mapping[str, np.ndarray]):
    n = x.shape[0]
    n_heads = len(model.heads)
    hidden = _encode(model.encoder_weights, x)
    d_hidden = np.zeros_like(hidden)
    head_grads = {}
    total = 0.0
    for m, h in model.heads.items():
        p = _sigmoid(hidden @ h[:-1] + h[-1])
        y = labels[m]
        total += bce_loss(p, y).mean() / n_heads
        inside = (p > EPS) & (p < 1 - EPS)
        d_logit = np.where(inside, p - y, 0.0) / (n * n_heads)
        head_grads[m] = np.concatenate([hidden.T @ d_logit, [d_logit.sum()]])
        d_hidden += np.outer(d_logit, h[:-1])
    d_pre = d_hidden * (1 - hidden ** 2)
    d_enc = np.concatenate([d_pre.T @ x, d_pre.sum(axis=0)[:, None]], axis=1)
    grad = np.concatenate([d_enc.ravel()] + [head_grads[m] for m in model.heads])
    return total, grad


def head_loss_terms(model: RerankerModel, x: np.ndarray, labels: Mapping[str, np.ndarray]) -> dict[str, float]:
    probs = model.probabilities(x)
    return {m: float(bce_loss(probs[m], labels[m]).mean()) for m in model.heads}


def average_metric_loss(per_metric: Mapping[str, float]) -> float:
    return sum(per_metric.values()) / len(per_metric)


def multi_metric_loss(model: RerankerModel, batch: Sequence[RerankTrainingExample]) -> float:
    if not batch:
        raise ValueError("empty batch")
    x, labels = corpus_arrays(batch, model.metrics)
    return average_metric_loss(head_loss_terms(model, x, labels))


def loss_gradient(model: RerankerModel, x: np.ndarray, labels: Mapping[str, np.ndarray]):
    """Return (loss, gradient w.r.t. ``model.flat()``)."""
    return _loss_and_grad(model, x, labels)


# --- features --------------------------------------------------------------

def candidate_features(document_tokens: Sequence[str], candidate_tokens: Sequence[str],
                       index: int, m: int) -> np.ndarray:
    r1 = rouge_n(candidate_tokens, document_tokens, 1)
    r2 = rouge_n(candidate_tokens, document_tokens, 2)
    rl = rouge_l(candidate_tokens, document_tokens)
    ratio = min(len(candidate_tokens) / max(len(document_tokens), 1), 1.0)
    position = index / (m - 1) if m > 1 else 0.0
    return np.array([r1.precision, r1.recall, r1.f1, r2.precision, r2.recall, r2.f1,
                     rl.precision, rl.recall, rl.f1, ratio, position])


def candidate_matrix(document: str, candidates: Sequence[str]) -> np.ndarray:
    doc = tokenize(document)
    m = len(candidates)
    return np.stack([candidate_features(doc, tokenize(c), i, m) for i, c in enumerate(candidates)])


def corpus_arrays(corpus: Sequence[RerankTrainingExample], metrics: Sequence[str]):
    feats, labels = [], {m: [] for m in metrics}
    for ex in corpus:
        feats.append(candidate_matrix(ex.document, ex.candidates))
        for m in metrics:
            labels[m].extend(label_candidates(ex, m))
    return np.concatenate(feats), {m: np.asarray(v, dtype=float) for m, v in labels.items()}


# --- training --------------------------------------------------------------

def train_on_features(x: np.ndarray, labels: Mapping[str, np.ndarray],
                      config: RerankerConfig = RerankerConfig()) -> RerankerModel:
    model = RerankerModel.initialise(x.shape[1], config.hidden_dim, tuple(labels),
                                     seed=config.seed, scale=config.init_scale)
    theta = model.flat()
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    b1, b2 = 0.9, 0.999
    loss, grad = _loss_and_grad(model, x, labels)
    history = [loss]
    best_loss, best_theta = loss, theta.copy()
    for step in range(1, config.epochs + 1):
        m1 = b1 * m1 + (1 - b1) * grad
        m2 = b2 * m2 + (1 - b2) * grad ** 2
        theta = theta - config.learning_rate * (m1 / (1 - b1 ** step)) / (np.sqrt(m2 / (1 - b2 ** step)) + 1e-8)
        model = model.with_flat(theta)
        loss, grad = _loss_and_grad(model, x, labels)
        if not np.isfinite(loss) or not np.all(np.isfinite(theta)):
            raise RerankerDivergence(f"non-finite loss at epoch {step}", history)
        history.append(loss)
        if loss < best_loss:
            best_loss, best_theta = loss, theta.copy()
    best = model.with_flat(best_theta)
    best.history = history
    log.debug("reranker trained: loss %.4f -> %.4f", history[0], best_loss)
    return best


def train_reranker(corpus: Sequence[RerankTrainingExample],
                   config: RerankerConfig = RerankerConfig()) -> RerankerModel:
    """Fit the re-ranker; the returned parameters never have higher training
    loss than the initialisation."""
    if not corpus:
        raise ValueError("empty training corpus")
    x, labels = corpus_arrays(corpus, config.metrics)
    return train_on_features(x, labels, config)


# --- inference -------------------------------------------------------------

def select_from_probabilities(head_probs: np.ndarray) -> int:
    """``head_probs`` is (m, n_heads); returns argmax of the row means, first on ties."""
    return int(np.argmax(np.asarray(head_probs, dtype=float).mean(axis=1)))


def select_best(model: RerankerModel, candidates: SummaryCandidateSet | Sequence[str],
                document: str) -> tuple[int, str]:
    texts = candidates.candidates if isinstance(candidates, SummaryCandidateSet) else tuple(candidates)
    if not texts:
        raise ValueError("no candidates")
    probs = model.probabilities(candidate_matrix(document, texts))
    idx = select_from_probabilities(np.stack([probs[m] for m in model.metrics], axis=1))
    return idx, texts[idx]


# --- checkpoints -----------------------------------------------------------

def save_model(model: RerankerModel, path: str | Path) -> None:
    payload = {
        "format": "pcts-reranker/1",
        "feature_dim": model.feature_dim,
        "hidden_dim": model.hidden_dim,
        "metrics": list(model.metrics),
        "feature_names": list(FEATURE_NAMES),
        "encoder_weights": model.encoder_weights.ravel().tolist(),
        "heads": {m: h.tolist() for m, h in model.heads.items()},
    }
    Path(path).write_text(json.dumps(payload, indent=1))


def load_model(path: str | Path) -> RerankerModel:
    payload = json.loads(Path(path).read_text())
    f, h = int(payload["feature_dim"]), int(payload["hidden_dim"])
    enc = np.asarray(payload["encoder_weights"], dtype=float)
    if enc.size != h * (f + 1):
        raise ValueError(f"encoder has {enc.size} weights, expected {h * (f + 1)}")
    heads = {}
    for m in payload["metrics"]:
        vec = np.asarray(payload["heads"][m], dtype=float)
        if vec.size != h + 1:
            raise ValueError(f"head {m!r} has {vec.size} weights, expected {h + 1}")
        heads[m] = vec
    if not all(np.all(np.isfinite(v)) for v in [enc, *heads.values()]):
        raise ValueError("checkpoint contains non-finite parameters")
    return RerankerModel(enc.reshape(h, f + 1), heads, f)
