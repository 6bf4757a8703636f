"""Verbalizer-based clickbait scoring and detector training.

A label's score is the unweighted mean of the mask probabilities of its
label words. Trainable parameters are a per-label calibration head
``z_y = w_y * log(score_y) + b_y`` followed by a softmax; at ``w = 1, b = 0``
the head reproduces the raw averaged scores, normalised.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .lm_backend import MaskScorer, mask_distribution
from .prompt_templates import RenderedPrompt
from .verbalizer import Verbalizer

log = logging.getLogger(__name__)

LABEL_NAMES = ("news", "clickbait")  # index == gold label y
LOG_FLOOR = 1e-12


class DegenerateScoreWarning(UserWarning):
    pass


class DetectorDivergence(RuntimeError):
    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True)
class DetectionResult:
    per_label_score: dict[str, float]
    predicted: str
    mask_probs: dict[str, float]
    class_probs: dict[str, float] = field(default_factory=dict)
    template_id: int | None = None
    doc_id: str = ""

    def to_record(self, verbalizer_hash: str = "") -> dict:
        return {
            "id": self.doc_id,
            "scores": self.per_label_score,
            "class_probs": self.class_probs,
            "predicted": self.predicted,
            "template_id": self.template_id,
            "verbalizer": verbalizer_hash,
        }


@dataclass
class DetectorTrainConfig:
    learning_rate: float = 4e-5
    batch_size: int = 32
    epochs: int = 10
    dropout: float = 0.5
    weight_decay: float = 1e-5
    seed: int = 0
    loss: str = "squared"  # or "cross_entropy"

    def __post_init__(self):
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("learning rate and weight decay must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch size must be >= 1 and epochs >= 0")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.loss not in ("squared", "cross_entropy"):
            raise ValueError(f"unknown loss {self.loss!r}")


def label_scores(word_probs: Mapping[str, float], verbalizer: Verbalizer) -> dict[str, float]:
    out = {}
    for label, words in verbalizer.label_words.items():
        if not words:
            raise ValueError(f"label {label!r} has no label words")
        out[label] = sum(float(word_probs.get(w, 0.0)) for w in words) / len(words)
    return out


def argmax_label(scores: Mapping[str, float]) -> str:
    """First label in declaration order wins exact ties."""
    best = max(scores.values())
    winners = [lab for lab, s in scores.items() if s == best]
    if len(winners) > 1:
        log.debug("tie between %s broken in favour of %s", winners, winners[0])
    return winners[0]


def identity_head(n_labels: int) -> np.ndarray:
    return np.concatenate([np.ones(n_labels), np.zeros(n_labels)])


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def head_probabilities(theta: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Class probabilities for an (N, L) array of averaged label scores."""
    n_labels = scores.shape[-1]
    w, b = theta[:n_labels], theta[n_labels:]
    return _softmax(w * np.log(np.maximum(scores, LOG_FLOOR)) + b)


def score(prompt: RenderedPrompt, verbalizer: Verbalizer, scorer: MaskScorer,
          head: np.ndarray | None = None, doc_id: str = "") -> DetectionResult:
    dist = mask_distribution(prompt, scorer)
    words = {w for ws in verbalizer.label_words.values() for w in ws}
    restricted = dist.restrict(sorted(words))
    per_label = label_scores(restricted, verbalizer)
    if all(v == 0 for v in per_label.values()):
        warnings.warn(f"all label words of {doc_id or 'prompt'} have zero probability",
                      DegenerateScoreWarning, stacklevel=2)
    labels = verbalizer.labels
    if head is None:
        total = sum(per_label.values())
        class_probs = {lab: (s / total if total else 1 / len(labels)) for lab, s in per_label.items()}
        predicted = argmax_label(per_label)
    else:
        probs = head_probabilities(head, np.array([[per_label[lab] for lab in labels]]))[0]
        class_probs = dict(zip(labels, map(float, probs)))
        predicted = argmax_label(class_probs)
    return DetectionResult(per_label, predicted, restricted, class_probs, prompt.template_id,
                           doc_id or prompt.key)


# --- loss ------------------------------------------------------------------

def detection_loss(class_probs, labels: Sequence[int], params, weight_decay: float,
                   mode: str = "squared") -> float:
    """Mean of (1 - p(true class))^2 plus ``weight_decay * ||params||^2``.

    ``mode="cross_entropy"`` swaps the data term for -log p(true class).
    """
    probs = np.asarray(class_probs, dtype=float)
    p_true = probs[np.arange(len(labels)), np.asarray(labels)]
    if mode == "squared":
        data = np.mean((1.0 - p_true) ** 2)
    elif mode == "cross_entropy":
        data = np.mean(-np.log(np.maximum(p_true, LOG_FLOOR)))
    else:
        raise ValueError(f"unknown loss mode {mode!r}")
    theta = np.asarray(params, dtype=float)
    loss = float(data + weight_decay * np.dot(theta, theta))
    if not np.isfinite(loss):
        raise DetectorDivergence("non-finite detection loss", [])
    return loss


def head_loss_and_grad(theta: np.ndarray, scores: np.ndarray, labels: np.ndarray,
                       weight_decay: float, mode: str = "squared"):
    """Loss and gradient w.r.t. the calibration head for (N, L) label scores."""
    n, n_labels = scores.shape
    w, b = theta[:n_labels], theta[n_labels:]
    log_s = np.log(np.maximum(scores, LOG_FLOOR))
    p = _softmax(w * log_s + b)
    rows = np.arange(n)
    p_true = p[rows, labels]
    onehot = np.zeros_like(p)
    onehot[rows, labels] = 1.0
    if mode == "squared":
        data = np.mean((1 - p_true) ** 2)
        dz = (-2 * (1 - p_true) * p_true)[:, None] * (onehot - p)
    else:
        data = np.mean(-np.log(np.maximum(p_true, LOG_FLOOR)))
        dz = p - onehot
    dz /= n
    grad = np.concatenate([(dz * log_s).sum(axis=0), dz.sum(axis=0)]) + 2 * weight_decay * theta
    return float(data + weight_decay * theta @ theta), grad


# --- training --------------------------------------------------------------

@dataclass
class TrainedDetector:
    labels: list[str]
    head: np.ndarray
    history: list[float]
    best_epoch: int
    config: DetectorTrainConfig

    def to_json(self) -> str:
        return json.dumps({
            "labels": self.labels,
            "head": self.head.tolist(),
            "history": self.history,
            "best_epoch": self.best_epoch,
            "config": asdict(self.config),
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "TrainedDetector":
        d = json.loads(text)
        return cls(d["labels"], np.asarray(d["head"], dtype=float), d["history"], d["best_epoch"],
                   DetectorTrainConfig(**d["config"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "TrainedDetector":
        return cls.from_json(Path(path).read_text())


def word_probability_matrices(prompts: Sequence[RenderedPrompt], verbalizer: Verbalizer,
                              scorer: MaskScorer) -> list[np.ndarray]:
    """Per label, an (N, |V_y|) array of label-word mask probabilities."""
    dists = [mask_distribution(p, scorer) for p in prompts]
    return [np.array([[d.prob(w) for w in words] for d in dists]).reshape(len(dists), len(words))
            for words in verbalizer.label_words.values()]


def _averaged(mats: list[np.ndarray], rows, rng=None, dropout=0.0) -> np.ndarray:
    cols = []
    for mat in mats:
        sub = mat[rows]
        if rng is not None and dropout > 0:
            keep = rng.random(sub.shape) >= dropout
            keep[~keep.any(axis=1)] = True  # never drop every word of a label
            cols.append((sub * keep).sum(axis=1) / keep.sum(axis=1))
        else:
            cols.append(sub.mean(axis=1))
    return np.stack(cols, axis=1)


def train_detector(prompts: Sequence[RenderedPrompt], labels: Sequence[int], verbalizer: Verbalizer,
                   scorer: MaskScorer, config: DetectorTrainConfig = DetectorTrainConfig(),
                   init: np.ndarray | None = None) -> TrainedDetector:
    """Fit the calibration head with Adam on the regularised objective.

    Dropout removes label words at random during training steps; epoch losses
    in ``history`` are measured without dropout. The returned head is the
    best one seen, so its loss never exceeds the initial loss.
    """
    if not prompts:
        raise ValueError("no training prompts")
    if len(prompts) != len(labels):
        raise ValueError("prompts and labels differ in length")
    mats = word_probability_matrices(prompts, verbalizer, scorer)
    y = np.asarray(labels, dtype=int)
    n = len(y)
    theta = identity_head(len(mats)) if init is None else np.array(init, dtype=float)
    rng = np.random.default_rng(config.seed)
    full = _averaged(mats, np.arange(n))

    def epoch_loss(t):
        return head_loss_and_grad(t, full, y, config.weight_decay, config.loss)[0]

    history = [epoch_loss(theta)]
    best_loss, best_theta, best_epoch = history[0], theta.copy(), 0
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            rows = order[start:start + config.batch_size]
            batch = _averaged(mats, rows, rng, config.dropout)
            _, grad = head_loss_and_grad(theta, batch, y[rows], config.weight_decay, config.loss)
            step += 1
            m1 = 0.9 * m1 + 0.1 * grad
            m2 = 0.999 * m2 + 0.001 * grad ** 2
            theta = theta - config.learning_rate * (m1 / (1 - 0.9 ** step)) / (
                np.sqrt(m2 / (1 - 0.999 ** step)) + 1e-8)
        loss = epoch_loss(theta)
        history.append(loss)
        if not np.isfinite(loss) or not np.all(np.isfinite(theta)):
            raise DetectorDivergence(f"non-finite loss at epoch {epoch}", history)
        if loss < best_loss:
            best_loss, best_theta, best_epoch = loss, theta.copy(), epoch
    return TrainedDetector(verbalizer.labels, best_theta, history, best_epoch, config)


def write_results(results: Sequence[DetectionResult], path: str | Path, verbalizer_hash: str = "") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.to_record(verbalizer_hash), sort_keys=True) + "\n")


def read_results(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
