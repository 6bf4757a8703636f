"""``pcts`` command line: summarize, rerank-train, build-verbalizer, detect,
train, eval, sweep.

Settings come from built-in defaults, then an optional JSON/YAML config file,
then flags. Relative resource paths resolve against ``$PCTS_RESOURCE_ROOT``
when it is set. Exit codes: 0 success, 1 stage failure, 2 usage or missing
resource.
"""

from __future__ import annotations

import argparse
import copy
import datetime as _dt
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import yaml

from . import detector as det
from .datasets import Document, LoadReport, load_dataset, load_rerank_corpus, \
    read_summaries, sample_few_shot
from .evaluation import (ExperimentSpec, PipelineComponents, SummaryMode, confusion_counts, make_prompt,
                         metrics, report_table, run_ablation, run_experiment, sweep, to_tsv,
                         weighted_metrics, write_plot_data, write_records)
from .lm_backend import (TableScorer, TransformersMaskScorer, load_concept_base, load_embeddings,
                         load_lexicon)
from .prompt_templates import get_template, load_templates, render
from .reranker import RerankerConfig, load_model, save_model, select_best, train_reranker
from .summary_engine import (ContentEmptyError, GeneratorConfig, generate_candidates, get_backend,
                             write_candidate_sets)
from .text_metrics import METRICS, rouge, tokenize
from .verbalizer import STRATEGIES, BuilderConfig, Verbalizer, VerbalizerResources, build_verbalizer

log = logging.getLogger("pcts")

RESOURCE_ROOT_ENV = "PCTS_RESOURCE_ROOT"
PATH_KEYS = ("dataset", "embeddings", "lexicon", "concept_base", "scorer_fixture", "templates_file",
             "summaries", "verbalizer", "detections", "reranker_model", "rerank_corpus", "detector_model")

DEFAULTS: dict[str, Any] = {
    "dataset": None,
    "dataset_kind": None,
    "embeddings": None,
    "lexicon": None,
    "concept_base": None,
    "scorer_fixture": None,
    "backend": None,
    "templates_file": None,
    "template": 3,
    "labels": ["news", "clickbait"],
    "n_a": 15,
    "window": 5,
    "strategies": list(STRATEGIES),
    "integration": "union",
    "generator": {"name": "extractive_fallback", "num_candidates": 8,
                  "decoding_mode": "extractive_fallback", "max_summary_words": 41},
    "reranker": {"hidden_dim": 16, "learning_rate": 0.01, "epochs": 300},
    "train": {"learning_rate": 4e-5, "batch_size": 32, "epochs": 10, "dropout": 0.5,
              "weight_decay": 1e-5, "loss": "squared"},
    "shots": 5,
    "seed": 0,
    "seeds": [0, 1, 2, 3, 4],
    "mode": "summary",
    "max_content_words": 256,
    "sweep_axis": None,
    "sweep_values": [],
    "summaries": None,
    "verbalizer": None,
    "detections": None,
    "reranker_model": None,
    "rerank_corpus": None,
    "detector_model": None,
    "out": None,
}


class UsageError(Exception):
    pass


# --- configuration ---------------------------------------------------------

def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config_file(path: str | Path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    data = yaml.safe_load(text) if Path(path).suffix in (".yml", ".yaml") else json.loads(text)
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a mapping")
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        raise UsageError(f"config {path}: unknown keys {sorted(unknown)}")
    return data


def _flag_overrides(args: argparse.Namespace) -> dict:
    over: dict[str, Any] = {}
    simple = ("dataset", "dataset_kind", "embeddings", "lexicon", "concept_base", "scorer_fixture",
              "backend", "templates_file", "template", "shots", "seed", "mode", "summaries", "verbalizer",
              "detections", "reranker_model", "rerank_corpus", "detector_model", "out", "n_a", "window",
              "sweep_axis", "integration")
    for key in simple:
        val = getattr(args, key, None)
        if val is not None:
            over[key] = val
    if getattr(args, "seeds", None):
        over["seeds"] = args.seeds
    if getattr(args, "strategies", None):
        over["strategies"] = [s.strip() for s in args.strategies.split(",") if s.strip()]
    if getattr(args, "values", None):
        over["sweep_values"] = args.values
    if getattr(args, "generator", None):
        over["generator"] = {"name": args.generator}
        if args.generator == "extractive_fallback":
            over["generator"]["decoding_mode"] = "extractive_fallback"
    if getattr(args, "num_candidates", None):
        over.setdefault("generator", {})["num_candidates"] = args.num_candidates
    train = {k: getattr(args, k) for k in ("learning_rate", "batch_size", "epochs")
             if getattr(args, k, None) is not None}
    if train:
        over["train"] = train
    return over


def resolve_path(value: str | None) -> Path | None:
    if value is None:
        return None
    p = Path(value).expanduser()
    root = os.environ.get(RESOURCE_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


def effective_config(args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if getattr(args, "config", None):
        cfg = _merge(cfg, load_config_file(args.config))
    cfg = _merge(cfg, _flag_overrides(args))
    for key in PATH_KEYS:
        if cfg.get(key) is not None:
            cfg[key] = str(resolve_path(cfg[key]))
    unknown = set(cfg["strategies"]) - set(STRATEGIES)
    if unknown:
        raise UsageError(f"unknown strategies {sorted(unknown)}; choose from {', '.join(STRATEGIES)}")
    return cfg


def _require_path(cfg: dict, key: str) -> Path:
    if not cfg.get(key):
        raise UsageError(f"--{key.replace('_', '-')} is required for this command")
    p = Path(cfg[key])
    if not p.exists():
        raise UsageError(f"{key.replace('_', ' ')} not found: {p}")
    return p


def _optional_path(cfg: dict, key: str) -> Path | None:
    return _require_path(cfg, key) if cfg.get(key) else None


# --- resources -------------------------------------------------------------

def _documents(cfg: dict) -> list[Document]:
    path = _require_path(cfg, "dataset")
    report = LoadReport()
    docs = load_dataset(path, cfg.get("dataset_kind"), report)
    if report.skipped:
        print(f"warning: skipped {report.skipped} malformed records in {path}", file=sys.stderr)
    return docs


def _scorer(cfg: dict):
    if cfg.get("scorer_fixture"):
        return TableScorer.from_file(_require_path(cfg, "scorer_fixture"))
    backend = cfg.get("backend")
    if backend:
        name = backend.split(":", 1)[1] if backend.startswith("hf:") else backend
        return TransformersMaskScorer(name)
    raise UsageError("a mask scorer is required: pass --scorer-fixture or --backend")


def _template(cfg: dict):
    templates = load_templates(_require_path(cfg, "templates_file")) if cfg.get("templates_file") else None
    return get_template(int(cfg["template"]), templates), templates


def _mode(cfg: dict) -> SummaryMode:
    try:
        return SummaryMode.parse(cfg["mode"])
    except ValueError:
        raise UsageError(f"unknown mode {cfg['mode']!r}") from None


def _components(cfg: dict, docs, scorer, need_summaries: bool) -> PipelineComponents:
    summaries = read_summaries(_require_path(cfg, "summaries")) if need_summaries else None
    verbalizer = Verbalizer.load(_require_path(cfg, "verbalizer")) if cfg.get("verbalizer") else None
    resources = None
    if verbalizer is None:
        resources = _resources(cfg, scorer)
    _, templates = _template(cfg)
    return PipelineComponents(
        documents=docs, scorer=scorer, summaries=summaries, verbalizer=verbalizer, resources=resources,
        builder=_builder(cfg), train_config=_train_config(cfg), templates=templates,
        label_names=tuple(cfg["labels"]), max_content_words=int(cfg["max_content_words"]))


def _resources(cfg: dict, scorer) -> VerbalizerResources:
    return VerbalizerResources(
        concept_base=load_concept_base(p) if (p := _optional_path(cfg, "concept_base")) else None,
        embeddings=load_embeddings(p) if (p := _optional_path(cfg, "embeddings")) else None,
        lexicon=load_lexicon(p) if (p := _optional_path(cfg, "lexicon")) else None,
        scorer=scorer,
    )


def _builder(cfg: dict) -> BuilderConfig:
    return BuilderConfig(n_a=int(cfg["n_a"]), window=int(cfg["window"]),
                         strategies=tuple(cfg["strategies"]), mode=cfg["integration"])


def _train_config(cfg: dict, seed: int | None = None) -> det.DetectorTrainConfig:
    t = cfg["train"]
    return det.DetectorTrainConfig(
        learning_rate=float(t["learning_rate"]), batch_size=int(t["batch_size"]), epochs=int(t["epochs"]),
        dropout=float(t["dropout"]), weight_decay=float(t["weight_decay"]), loss=t.get("loss", "squared"),
        seed=int(cfg["seed"] if seed is None else seed))


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"] or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sidecar(out: Path, command: str, cfg: dict) -> None:
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    with open(out / "pcts-run.log", "a", encoding="utf-8") as fh:
        fh.write(json.dumps({"time": stamp, "command": command, "config": cfg}, sort_keys=True) + "\n")


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")
    print(f"wrote {path}")


# --- commands --------------------------------------------------------------

def cmd_summarize(cfg: dict) -> int:
    docs = _documents(cfg)
    gen = cfg["generator"]
    config = GeneratorConfig(num_candidates=int(gen["num_candidates"]), decoding_mode=gen["decoding_mode"],
                             max_summary_words=int(gen["max_summary_words"]), seed=int(cfg["seed"]))
    try:
        backend = get_backend(gen["name"])
    except KeyError as exc:
        raise UsageError(str(exc)) from None
    model = load_model(_require_path(cfg, "reranker_model")) if cfg.get("reranker_model") else None
    sets, selections = [], []
    for doc in docs:
        try:
            cands = generate_candidates(doc.content, config, backend, source_id=doc.id)
        except ContentEmptyError:
            log.warning("document %s has no content; no summary produced", doc.id)
            continue
        sets.append(cands)
        if model is not None:
            idx, text = select_best(model, cands, doc.content)
            selector = "reranker"
        else:
            idx, text = _overlap_select(cands.candidates, doc.content)
            selector = "content_overlap"
        selections.append({"id": doc.id, "index": idx, "summary": text, "selector": selector,
                           "generator_tag": cands.generator_tag})
    out = _out_dir(cfg)
    write_candidate_sets(sets, out / "candidates.jsonl")
    _write(out / "summaries.jsonl", "".join(json.dumps(s, sort_keys=True) + "\n" for s in selections))
    _sidecar(out, "summarize", cfg)
    return 0


def _overlap_select(candidates: Sequence[str], content: str) -> tuple[int, str]:
    doc = tokenize(content)
    scores = [sum(rouge(tokenize(c), doc, m).f1 for m in METRICS) for c in candidates]
    idx = max(range(len(candidates)), key=lambda i: (scores[i], -i))
    return idx, candidates[idx]


def cmd_rerank_train(cfg: dict) -> int:
    corpus = load_rerank_corpus(_require_path(cfg, "rerank_corpus"))
    if not corpus:
        raise UsageError("re-ranking corpus holds no valid examples")
    r = cfg["reranker"]
    model = train_reranker(corpus, RerankerConfig(hidden_dim=int(r["hidden_dim"]),
                                                  learning_rate=float(r["learning_rate"]),
                                                  epochs=int(r["epochs"]), seed=int(cfg["seed"])))
    out = _out_dir(cfg)
    save_model(model, out / "reranker.json")
    print(f"loss {model.history[0]:.4f} -> {min(model.history):.4f}; wrote {out / 'reranker.json'}")
    _sidecar(out, "rerank-train", cfg)
    return 0


def _label_prompts(cfg: dict, scorer, template) -> dict[str, list]:
    labels = cfg["labels"]
    if not cfg.get("dataset"):
        return {lab: [render(template, lab, lab, scorer.mask_token, key=f"anchor-{lab}")] for lab in labels}
    docs = _documents(cfg)
    mode = _mode(cfg)
    comps = PipelineComponents(docs, scorer,
                               summaries=read_summaries(_require_path(cfg, "summaries"))
                               if mode is SummaryMode.SUMMARY else None,
                               max_content_words=int(cfg["max_content_words"]))
    split = sample_few_shot(docs, int(cfg["shots"]), int(cfg["seed"]))
    by_label = {lab: [] for lab in labels}
    for d in split.train:
        by_label[labels[d.label]].append(make_prompt(d, template, mode, comps))
    return by_label


def cmd_build_verbalizer(cfg: dict) -> int:
    scorer = _scorer(cfg) if (cfg.get("scorer_fixture") or cfg.get("backend")) else None
    resources = _resources(cfg, scorer)
    template, _ = _template(cfg)
    prompts = _label_prompts(cfg, scorer, template) if scorer is not None else {}
    try:
        verbalizer, results = build_verbalizer(cfg["labels"], resources, prompts, _builder(cfg))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    for label, res in results.items():
        counts = ", ".join(f"{r.strategy}={len(r)}" for r in res)
        print(f"{label}: {len(verbalizer.label_words[label])} words ({counts})")
    out = _out_dir(cfg)
    _write(out / "verbalizer.json", verbalizer.to_json())
    _sidecar(out, "build-verbalizer", cfg)
    return 0


def cmd_detect(cfg: dict) -> int:
    docs = _documents(cfg)
    scorer = _scorer(cfg)
    verbalizer = Verbalizer.load(_require_path(cfg, "verbalizer"))
    template, _ = _template(cfg)
    mode = _mode(cfg)
    head = None
    if cfg.get("detector_model"):
        head = det.TrainedDetector.load(_require_path(cfg, "detector_model")).head
    comps = PipelineComponents(docs, scorer,
                               summaries=read_summaries(_require_path(cfg, "summaries"))
                               if mode is SummaryMode.SUMMARY else None,
                               max_content_words=int(cfg["max_content_words"]))
    prompts = [make_prompt(d, template, mode, comps) for d in docs]
    results = [det.score(p, verbalizer, scorer, head, doc_id=d.id) for d, p in zip(docs, prompts)]
    out = _out_dir(cfg)
    path = out / "detections.jsonl"
    det.write_results(results, path, verbalizer.digest())
    (out / "prompts.jsonl").write_text("".join(
        json.dumps({"id": p.key, "template": p.template_id, "prompt": p.text}, ensure_ascii=False) + "\n"
        for p in prompts), encoding="utf-8")
    print(f"wrote {path} ({len(results)} documents, mode {mode.row_label})")
    _sidecar(out, "detect", cfg)
    return 0


def cmd_train(cfg: dict) -> int:
    docs = _documents(cfg)
    scorer = _scorer(cfg)
    verbalizer = Verbalizer.load(_require_path(cfg, "verbalizer"))
    template, _ = _template(cfg)
    mode = _mode(cfg)
    comps = PipelineComponents(docs, scorer,
                               summaries=read_summaries(_require_path(cfg, "summaries"))
                               if mode is SummaryMode.SUMMARY else None,
                               max_content_words=int(cfg["max_content_words"]))
    split = sample_few_shot(docs, int(cfg["shots"]), int(cfg["seed"]))
    prompts = [make_prompt(d, template, mode, comps) for d in split.train]
    trained = det.train_detector(prompts, [d.label for d in split.train], verbalizer, scorer, _train_config(cfg))
    out = _out_dir(cfg)
    trained.save(out / "detector.json")
    _write(out / "split.json", json.dumps(split.manifest(), indent=1) + "\n")
    print("loss history: " + " ".join(f"{v:.4f}" for v in trained.history))
    _sidecar(out, "train", cfg)
    return 0


def _experiment_spec(cfg: dict, mode: SummaryMode) -> ExperimentSpec:
    return ExperimentSpec(
        dataset=Path(cfg["dataset"]).stem, shots=int(cfg["shots"]), seeds=tuple(int(s) for s in cfg["seeds"]),
        template_id=int(cfg["template"]), strategies=tuple(cfg["strategies"]), mode=mode,
        sweep_axis=cfg.get("sweep_axis"), sweep_values=tuple(cfg.get("sweep_values") or ()))


def cmd_eval(cfg: dict) -> int:
    docs = _documents(cfg)
    out = _out_dir(cfg)
    if cfg.get("detections"):
        labels = cfg["labels"]
        gold = {d.id: d.label for d in docs if d.label is not None}
        recs = [r for r in det.read_results(_require_path(cfg, "detections")) if r["id"] in gold]
        if not recs:
            raise UsageError("no detection records match labeled documents")
        preds = [labels.index(r["predicted"]) for r in recs]
        ys = [gold[r["id"]] for r in recs]
        row = {"dataset": Path(cfg["dataset"]).stem, "n": len(ys), **metrics(confusion_counts(preds, ys))}
        wrow = {"dataset": row["dataset"], "n": len(ys), **weighted_metrics(preds, ys)}
        table = to_tsv([row])
        _write(out / "metrics.tsv", table)
        _write(out / "metrics_weighted.tsv", to_tsv([wrow]))
        print(table, end="")
        _sidecar(out, "eval", cfg)
        return 0
    scorer = _scorer(cfg)
    modes = tuple(SummaryMode) if str(cfg["mode"]).lower() == "all" else (_mode(cfg),)
    comps = _components(cfg, docs, scorer, need_summaries=SummaryMode.SUMMARY in modes)
    spec = _experiment_spec(cfg, modes[0])
    reports = run_ablation(spec, comps, modes) if len(modes) > 1 else [run_experiment(spec, comps)]
    table = to_tsv(report_table(reports))
    _write(out / "report.tsv", table)
    _write(out / "report_weighted.tsv", to_tsv(report_table(reports, weighted=True)))
    write_records(reports, out / "report.jsonl")
    print(table, end="")
    _sidecar(out, "eval", cfg)
    return 1 if any(r.partial for r in reports) else 0


def cmd_sweep(cfg: dict) -> int:
    if cfg.get("sweep_axis") not in ("learning_rate", "batch_size"):
        raise UsageError("--axis must be learning_rate or batch_size")
    if not cfg.get("sweep_values"):
        raise UsageError("--values needs at least one grid value")
    docs = _documents(cfg)
    scorer = _scorer(cfg)
    mode = _mode(cfg)
    comps = _components(cfg, docs, scorer, need_summaries=mode is SummaryMode.SUMMARY)
    reports = sweep(_experiment_spec(cfg, mode), comps)
    out = _out_dir(cfg)
    table = to_tsv(report_table(reports))
    _write(out / "sweep.tsv", table)
    write_records(reports, out / "sweep.jsonl")
    for metric in ("accuracy", "f1"):
        write_plot_data(reports, out / f"sweep_{cfg['sweep_axis']}_{metric}.dat", metric)
    print(table, end="")
    _sidecar(out, "sweep", cfg)
    return 1 if any(r.partial for r in reports) else 0


COMMANDS = {
    "summarize": cmd_summarize,
    "rerank-train": cmd_rerank_train,
    "build-verbalizer": cmd_build_verbalizer,
    "detect": cmd_detect,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
}


# --- argument parsing ------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or YAML settings file")
    common.add_argument("--dataset", help="corpus file or directory")
    common.add_argument("--dataset-kind", choices=("webis17", "news_clickbait"))
    common.add_argument("--embeddings")
    common.add_argument("--lexicon")
    common.add_argument("--concept-base")
    common.add_argument("--scorer-fixture", help="table-driven mask scorer (JSON)")
    common.add_argument("--backend", help="masked LM backend, e.g. hf:roberta-base")
    common.add_argument("--templates-file")
    common.add_argument("--template", type=int)
    common.add_argument("--shots", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--seeds", type=int, nargs="+")
    common.add_argument("--strategies", help="comma-separated subset of " + ",".join(STRATEGIES))
    common.add_argument("--integration", choices=("union", "vote"))
    common.add_argument("--n-a", type=int)
    common.add_argument("--window", type=int)
    common.add_argument("--mode", help="summary | -summary | original-news | all (eval)")
    common.add_argument("--generator")
    common.add_argument("--num-candidates", type=int)
    common.add_argument("--summaries")
    common.add_argument("--verbalizer")
    common.add_argument("--detections")
    common.add_argument("--reranker-model")
    common.add_argument("--rerank-corpus")
    common.add_argument("--detector-model")
    common.add_argument("--learning-rate", type=float)
    common.add_argument("--batch-size", type=int)
    common.add_argument("--epochs", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--show-config", action="store_true", help="print the effective config and exit")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="pcts", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "sweep":
            p.add_argument("--axis", dest="sweep_axis", choices=("learning_rate", "batch_size"))
            p.add_argument("--values", type=float, nargs="+")
    return parser


def _fix_dash_values(argv: Sequence[str]) -> list[str]:
    # `--mode -summary` would otherwise be parsed as an unknown option.
    out = list(argv)
    for i, tok in enumerate(out[:-1]):
        if tok == "--mode" and out[i + 1].startswith("-"):
            out[i:i + 2] = [f"--mode={out[i + 1]}", ""]
    return [t for t in out if t != ""]


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(_fix_dash_values(sys.argv[1:] if argv is None else argv))
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = effective_config(args)
        if args.show_config:
            print(json.dumps(cfg, indent=1, sort_keys=True))
            return 0
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"pcts {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"pcts {args.command}: error: file not found: {exc.filename or exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # any other stage failure
        print(f"pcts {args.command}: stage failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
