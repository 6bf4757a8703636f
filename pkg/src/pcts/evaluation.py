"""Metrics, few-shot experiments, ablations and parameter sweeps."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .datasets import Document, FewShotSplit, sample_few_shot
from .detector import LABEL_NAMES, DetectorTrainConfig, score, train_detector
from .lm_backend import MaskScorer
from .prompt_templates import NO_SUMMARY, PromptTemplate, RenderedPrompt, get_template, render
from .verbalizer import STRATEGIES, BuilderConfig, Verbalizer, VerbalizerResources, build_verbalizer

log = logging.getLogger(__name__)

METRIC_NAMES = ("accuracy", "precision", "recall", "f1")


class SummaryMode(str, Enum):
    SUMMARY = "summary"
    NO_SUMMARY = "no_summary"
    FULL_CONTENT = "full_content"

    @property
    def row_label(self) -> str:
        return {"summary": "Ours", "no_summary": "-summary", "full_content": "original news"}[self.value]

    @classmethod
    def parse(cls, value: "str | SummaryMode") -> "SummaryMode":
        if isinstance(value, cls):
            return value
        key = value.strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {"ours": "summary", "_summary": "no_summary", "headline": "no_summary",
                   "original_news": "full_content", "full": "full_content", "content": "full_content"}
        return cls(aliases.get(key, key))


# --- metrics ---------------------------------------------------------------

@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion_counts(predictions: Sequence[int], labels: Sequence[int], positive: int = 1) -> ConfusionCounts:
    if len(predictions) != len(labels):
        raise ValueError("predictions and labels differ in length")
    tp = fp = tn = fn = 0
    for p, y in zip(predictions, labels):
        if p == positive:
            tp, fp = (tp + 1, fp) if y == positive else (tp, fp + 1)
        else:
            fn, tn = (fn + 1, tn) if y == positive else (fn, tn + 1)
    return ConfusionCounts(tp, fp, tn, fn)


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def metrics(counts: ConfusionCounts) -> dict[str, float]:
    if counts.total == 0:
        raise ValueError("cannot compute metrics on zero documents")
    precision = _ratio(counts.tp, counts.tp + counts.fp)
    recall = _ratio(counts.tp, counts.tp + counts.fn)
    return {
        "accuracy": (counts.tp + counts.tn) / counts.total,
        "precision": precision,
        "recall": recall,
        "f1": _ratio(2 * precision * recall, precision + recall),
    }


def weighted_metrics(predictions: Sequence[int], labels: Sequence[int]) -> dict[str, float]:
    """Support-weighted average of per-class precision/recall/F1."""
    labels = list(labels)
    classes = sorted(set(labels))
    n = len(labels)
    out = {"accuracy": metrics(confusion_counts(predictions, labels)).get("accuracy")}
    for name in ("precision", "recall", "f1"):
        out[name] = sum(
            metrics(confusion_counts(predictions, labels, positive=c))[name] * labels.count(c) / n
            for c in classes
        ) if n else 0.0
    return out


# --- experiments -----------------------------------------------------------

@dataclass
class ExperimentSpec:
    dataset: str
    shots: int = 5
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    template_id: int = 3
    strategies: tuple[str, ...] = STRATEGIES
    mode: SummaryMode = SummaryMode.SUMMARY
    sweep_axis: str | None = None
    sweep_values: tuple[float, ...] = ()
    train: bool = True

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("at least one seed is required")
        self.seeds = tuple(self.seeds)
        self.mode = SummaryMode.parse(self.mode)
        if self.sweep_axis not in (None, "learning_rate", "batch_size"):
            raise ValueError(f"unknown sweep axis {self.sweep_axis!r}")


@dataclass
class PipelineComponents:
    documents: Sequence[Document]
    scorer: MaskScorer
    summaries: Mapping[str, str] | None = None
    verbalizer: Verbalizer | None = None
    resources: VerbalizerResources | None = None
    builder: BuilderConfig = field(default_factory=BuilderConfig)
    train_config: DetectorTrainConfig = field(default_factory=DetectorTrainConfig)
    templates: Sequence[PromptTemplate] | None = None
    label_names: tuple[str, ...] = LABEL_NAMES
    max_content_words: int = 256


def text_b_for(doc: Document, mode: SummaryMode, components: PipelineComponents):
    if mode is SummaryMode.NO_SUMMARY:
        return NO_SUMMARY
    if mode is SummaryMode.FULL_CONTENT:
        words = doc.content.split()[: components.max_content_words]
        return " ".join(words) if words else NO_SUMMARY
    if not doc.content.strip():
        return NO_SUMMARY  # nothing to summarise
    if components.summaries is None:
        raise KeyError("summary mode needs selected summaries")
    return components.summaries[doc.id]


def make_prompt(doc: Document, template: PromptTemplate, mode: SummaryMode,
                components: PipelineComponents) -> RenderedPrompt:
    return render(template, doc.headline, text_b_for(doc, mode, components),
                  components.scorer.mask_token, key=doc.id)


@dataclass
class SeedResult:
    seed: int
    metrics: dict[str, float] = field(default_factory=dict)
    weighted: dict[str, float] = field(default_factory=dict)
    n_test: int = 0
    error: str | None = None


@dataclass
class ExperimentReport:
    dataset: str
    shots: int
    mode: SummaryMode
    template_id: int
    seeds: list[SeedResult]
    setting: dict = field(default_factory=dict)

    @property
    def partial(self) -> bool:
        return any(s.error for s in self.seeds)

    @property
    def row_label(self) -> str:
        return self.mode.row_label

    def mean(self, which: str = "metrics") -> dict[str, float]:
        ok = [getattr(s, which) for s in self.seeds if s.error is None]
        if not ok:
            return {m: float("nan") for m in METRIC_NAMES}
        return {m: float(np.mean([r[m] for r in ok])) for m in METRIC_NAMES}

    def records(self) -> list[dict]:
        key = {"dataset": self.dataset, "shots": self.shots, "mode": self.row_label,
               "template": self.template_id, **self.setting}
        out = [{**key, "seed": s.seed, "n_test": s.n_test, "error": s.error,
                **s.metrics, **{f"weighted_{k}": v for k, v in s.weighted.items()}} for s in self.seeds]
        out.append({**key, "seed": "mean", "partial": self.partial, **self.mean(),
                    **{f"weighted_{k}": v for k, v in self.mean("weighted").items()}})
        return out


def _split_prompts(split: FewShotSplit, template, mode, components):
    train = [make_prompt(d, template, mode, components) for d in split.train]
    test = [make_prompt(d, template, mode, components) for d in split.test]
    return train, test


def _verbalizer_for(split, train_prompts, spec, components) -> Verbalizer:
    if components.verbalizer is not None:
        return components.verbalizer
    if components.resources is None:
        return Verbalizer.from_label_names(components.label_names)
    by_label: dict[str, list[RenderedPrompt]] = {lab: [] for lab in components.label_names}
    for doc, prompt in zip(split.train, train_prompts):
        by_label[components.label_names[doc.label]].append(prompt)
    builder = replace(components.builder, strategies=tuple(spec.strategies))
    verbalizer, _ = build_verbalizer(components.label_names, components.resources, by_label, builder)
    return verbalizer


def run_seed(spec: ExperimentSpec, components: PipelineComponents, seed: int) -> SeedResult:
    template = get_template(spec.template_id, list(components.templates) if components.templates else None)
    split = sample_few_shot(components.documents, spec.shots, seed)
    train_prompts, test_prompts = _split_prompts(split, template, spec.mode, components)
    verbalizer = _verbalizer_for(split, train_prompts, spec, components)
    head = None
    if spec.train:
        config = replace(components.train_config, seed=seed)
        trained = train_detector(train_prompts, [d.label for d in split.train], verbalizer,
                                 components.scorer, config)
        head = trained.head
    index = {lab: i for i, lab in enumerate(components.label_names)}
    preds = [index[score(p, verbalizer, components.scorer, head).predicted] for p in test_prompts]
    gold = [d.label for d in split.test]
    return SeedResult(seed, metrics(confusion_counts(preds, gold)), weighted_metrics(preds, gold), len(gold))


def run_experiment(spec: ExperimentSpec, components: PipelineComponents) -> ExperimentReport:
    """Few-shot train/evaluate once per seed; failures are recorded per seed."""
    results = []
    for seed in spec.seeds:
        try:
            results.append(run_seed(spec, components, seed))
        except Exception as exc:  # recorded, not raised: the report is flagged partial
            log.error("seed %s failed: %s", seed, exc)
            results.append(SeedResult(seed, error=f"{type(exc).__name__}: {exc}"))
    return ExperimentReport(spec.dataset, spec.shots, spec.mode, spec.template_id, results)


def run_ablation(spec: ExperimentSpec, components: PipelineComponents,
                 modes: Sequence[SummaryMode] = tuple(SummaryMode)) -> list[ExperimentReport]:
    return [run_experiment(replace(spec, mode=m), components) for m in modes]


def sweep(spec: ExperimentSpec, components: PipelineComponents,
          grid: Sequence[float] | None = None) -> list[ExperimentReport]:
    """One experiment per grid value of ``spec.sweep_axis``, all else fixed."""
    axis = spec.sweep_axis
    grid = tuple(grid if grid is not None else spec.sweep_values)
    if axis is None:
        raise ValueError("spec has no sweep axis")
    if not grid:
        raise ValueError("sweep grid is empty")
    reports = []
    for value in grid:
        value = int(value) if axis == "batch_size" else float(value)
        comps = replace(components, train_config=replace(components.train_config, **{axis: value}))
        report = run_experiment(spec, comps)
        report.setting = {axis: value}
        reports.append(report)
    return reports


# --- output ----------------------------------------------------------------

def report_table(reports: Sequence[ExperimentReport], weighted: bool = False) -> list[dict]:
    """One mean row per report."""
    rows = []
    for r in reports:
        means = r.mean("weighted" if weighted else "metrics")
        rows.append({"dataset": r.dataset, "shots": r.shots, "mode": r.row_label,
                     "template": r.template_id, **r.setting, **means, "partial": r.partial})
    return rows


def to_tsv(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    fields = list(dict.fromkeys(k for row in rows for k in row))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, delimiter="\t", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.4f}" if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def write_records(reports: Sequence[ExperimentReport], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in reports:
            for rec in r.records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def plot_data(reports: Sequence[ExperimentReport], metric: str = "accuracy") -> list[tuple[float, float]]:
    out = []
    for r in reports:
        (axis, value), = r.setting.items()
        out.append((value, r.mean()[metric]))
    return out


def write_plot_data(reports: Sequence[ExperimentReport], path: str | Path, metric: str = "accuracy") -> None:
    axis = next(iter(reports[0].setting))
    lines = [f"# {axis}\t{metric}"] + [f"{v:g}\t{m:.6f}" for v, m in plot_data(reports, metric)]
    Path(path).write_text("\n".join(lines) + "\n")
