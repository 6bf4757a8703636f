
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pcts.lm_backend import (ConceptBase, EmbeddingTable, FrequencyLexicon, MaskDistribution, TableScorer,
                             UniformScorer, load_concept_base, load_embeddings, load_lexicon)
from pcts.prompt_templates import get_template, render
from pcts.verbalizer import (CONCEPTS, CONTEXT, EMBEDDING, FREQUENCY, MLM, STRATEGIES, BuilderConfig,
                             StrategyResult, Verbalizer, VerbalizerResources, build_verbalizer, integrate,
                             is_derivation, strategy_concepts, strategy_context, strategy_embedding,
                             strategy_frequency, strategy_mlm)

LABELS = ["news", "clickbait"]


def small_kb():
    kb = ConceptBase([("clickbait", "hyperlink", 0.9), ("clickbait", "misleading", 0.6),
                      ("clickbait", "clickbaits", 0.5), ("clickbait", "novector", 0.4)])
    emb = EmbeddingTable(2, {"clickbait": [1.0, 0.0], "hyperlink": [0.2, 1.0],
                             "misleading": [1.0, 0.3], "clickbaits": [1.0, 0.0]})
    return kb, emb


def test_concepts_reranked_by_cosine():
    kb, emb = small_kb()
    res = strategy_concepts("clickbait", kb, emb)
    # the inflection of the label and the vectorless concept are dropped
    assert res.words == ["misleading", "hyperlink"]
    assert strategy_concepts("clickbait", kb, emb, n_a=1).words == ["misleading"]


def test_concepts_unknown_label_empty():
    kb, emb = small_kb()
    emb.vectors["mystery"] = emb.vectors["hyperlink"]
    assert strategy_concepts("mystery", kb, emb).words == []


def test_concepts_instance_direction(fixtures_dir):
    kb = load_concept_base(fixtures_dir / "mock_concepts.tsv")
    emb = load_embeddings(fixtures_dir / "mock_embeddings.vec")
    assert strategy_concepts("media", kb, emb, direction="instances").words == ["news"]


def prompt():
    return render(get_template(3), "Headline", "Body text.")


def test_mlm_top_words():
    scorer = TableScorer({"a": 0.5, "b": 0.3, "c": 0.2})
    assert strategy_mlm(prompt(), scorer, n_a=2).words == ["a", "b"]


def test_mlm_uniform_ties_lexicographic():
    scorer = UniformScorer(["d", "b", "a", "c"])
    assert strategy_mlm(prompt(), scorer, n_a=4).words == ["a", "b", "c", "d"]


def test_mlm_averages_prompts():
    class Two:
        mask_token = "[MASK]"
        concurrent_safe = True

        def predict(self, tokens, idx):
            if "first" in tokens:
                return MaskDistribution({"x": 0.9, "y": 0.1})
            return MaskDistribution({"x": 0.0, "y": 1.0})

    ps = [render(get_template(3), "first", "S."), render(get_template(3), "second", "S.")]
    assert strategy_mlm(ps, Two(), n_a=2).words == ["y", "x"]


def test_embedding_strategy():
    emb = EmbeddingTable(2, {"label": [1.0, 0.0], "w1": [0.9, 0.435889894], "w2": [0.4, 0.916515139],
                             "w3": [0.7, 0.714142843]})
    res = strategy_embedding("label", ["w1", "w2", "w3", "label", "oov"], emb)
    assert res.words == ["label", "w1", "w3", "w2"]
    assert [round(s, 3) for _, s in res.ranked_words[1:]] == [0.9, 0.7, 0.4]


def test_frequency_strategy():
    lex = FrequencyLexicon({"common": 6.0, "rare": 1.0})
    assert strategy_frequency(["rare", "common"], lex).words == ["common", "rare"]
    # unknown words score 0 and keep their pool order
    assert strategy_frequency(["zz", "aa", "common"], lex).words == ["common", "zz", "aa"]
    assert strategy_frequency([], lex).words == []


class FillAware:
    """Neighbours of the mask are easy to predict after 'good', harder after 'ok'."""

    mask_token = "[MASK]"
    concurrent_safe = True

    def predict(self, tokens, idx):
        vocab = ["good", "bad", "ok", "the", "cat"]
        confidence = 0.9 if "good" in tokens else 0.5 if "ok" in tokens else 0.2
        rest = (1 - confidence) / 4
        target = {0: "the", 2: "cat"}.get(idx)
        if target is None:
            return MaskDistribution({w: 0.2 for w in vocab})
        return MaskDistribution({w: confidence if w == target else rest for w in vocab})


def test_context_strategy_orders_by_loss():
    toks = ["the", "[MASK]", "cat"]
    res = strategy_context(toks, 1, ["bad", "ok", "good"], FillAware(), c=1, n_a=3)
    assert res.words == ["good", "ok", "bad"]
    assert all(s <= 0 for _, s in res.ranked_words)


def test_caps_must_be_positive():
    for fn in (lambda: strategy_context(["[MASK]"], 0, ["a"], UniformScorer(["a"]), n_a=0),
               lambda: strategy_mlm(prompt(), UniformScorer(["a"]), n_a=0),
               lambda: BuilderConfig(n_a=0)):
        with pytest.raises(ValueError):
            fn()


def test_derivation_filter():
    assert is_derivation("clickbaits", "clickbait")
    assert is_derivation("clickbaiting", "clickbait")
    assert is_derivation("newsy", "news")
    assert not is_derivation("misleading", "clickbait")


def test_integrate_union_of_disjoint_lists():
    a = StrategyResult(CONCEPTS, tuple((f"a{i}", 1.0) for i in range(15)))
    b = StrategyResult(MLM, tuple((f"b{i}", 1.0) for i in range(15)))
    v = integrate({"clickbait": [a, b]}, ["clickbait"])
    assert len(v.label_words["clickbait"]) == 31
    assert v.label_words["clickbait"][0] == "clickbait"


def test_integrate_empty_gives_label_only():
    empty = [StrategyResult(s, ()) for s in STRATEGIES]
    v = integrate({lab: empty for lab in LABELS}, LABELS)
    assert v.label_words == {"news": ["news"], "clickbait": ["clickbait"]}


def test_integrate_dedup_with_provenance():
    res = [StrategyResult(s, (("misleading", 1.0),)) for s in (CONCEPTS, MLM, EMBEDDING)]
    v = integrate({"clickbait": res}, ["clickbait"])
    assert v.label_words["clickbait"].count("misleading") == 1
    assert v.provenance[("clickbait", "misleading")] == {CONCEPTS, MLM, EMBEDDING}


def test_integrate_vote_mode():
    res = [StrategyResult(CONCEPTS, (("x", 1.0), ("y", 1.0))), StrategyResult(MLM, (("x", 1.0),))]
    v = integrate({"clickbait": res}, ["clickbait"], mode="vote", min_votes=2)
    assert v.label_words["clickbait"] == ["clickbait", "x"]


words = st.lists(st.sampled_from([f"w{i}" for i in range(30)]), max_size=10, unique=True)


@given(st.lists(words, min_size=1, max_size=5), words)
def test_integrate_monotone(lists, extra):
    base = [StrategyResult(STRATEGIES[i], tuple((w, 1.0) for w in ws)) for i, ws in enumerate(lists)]
    v1 = integrate({"label": base}, ["label"])
    more = base + [StrategyResult("extra", tuple((w, 1.0) for w in extra))]
    v2 = integrate({"label": more}, ["label"])
    assert set(v1.label_words["label"]) <= set(v2.label_words["label"])


@given(st.lists(st.sampled_from(["news", "newsy", "newsroom", "clickbait", "clickbaity", "press", "hype"]),
                max_size=7))
def test_no_cross_label_leakage(ws):
    res = [StrategyResult(MLM, tuple((w, 1.0) for w in ws))]
    v = integrate({lab: res for lab in LABELS}, LABELS)
    for label in LABELS:
        other = [lab for lab in LABELS if lab != label][0]
        assert not any(is_derivation(w, other) for w in v.label_words[label])


def fixture_resources(paths):
    return VerbalizerResources(load_concept_base(paths["concepts"]), load_embeddings(paths["embeddings"]),
                               load_lexicon(paths["lexicon"]), TableScorer.from_file(paths["scorer"]))


def fixture_prompts():
    t = get_template(3)
    return {"clickbait": [render(t, "You won't believe this trick", "A tease.")],
            "news": [render(t, "Council approves budget", "The council voted.")]}


def test_build_all_strategies(mock_paths):
    v, results = build_verbalizer(LABELS, fixture_resources(mock_paths), fixture_prompts())
    assert [r.strategy for r in results["clickbait"]] == list(STRATEGIES)
    assert all(len(r) <= 15 for rs in results.values() for r in rs)
    assert "misleading" in v.label_words["clickbait"]
    assert not any(is_derivation(w, "news") for w in v.label_words["clickbait"])


def test_build_single_strategy_provenance(mock_paths):
    cfg = BuilderConfig(strategies=(MLM,))
    v, _ = build_verbalizer(LABELS, fixture_resources(mock_paths), fixture_prompts(), cfg)
    for (label, word), prov in v.provenance.items():
        assert prov <= {MLM}
        assert prov or word == label


def test_build_empty_concept_base(mock_paths):
    res = fixture_resources(mock_paths)
    res.concept_base = ConceptBase([])
    v, results = build_verbalizer(LABELS, res, fixture_prompts())
    assert results["news"][0].words == []
    assert len(v.label_words["news"]) > 1


def test_build_missing_resource_is_an_error(mock_paths):
    res = fixture_resources(mock_paths)
    res.lexicon = None
    with pytest.raises(ValueError, match="lexicon"):
        build_verbalizer(LABELS, res, fixture_prompts(), BuilderConfig(strategies=(FREQUENCY,)))


def test_deterministic_and_round_trip(mock_paths, tmp_path):
    v1, _ = build_verbalizer(LABELS, fixture_resources(mock_paths), fixture_prompts())
    v2, _ = build_verbalizer(LABELS, fixture_resources(mock_paths), fixture_prompts())
    assert v1.to_json() == v2.to_json() and v1.digest() == v2.digest()
    v1.save(tmp_path / "v.json")
    v3 = Verbalizer.load(tmp_path / "v.json")
    assert v3.label_words == v1.label_words and v3.provenance == v1.provenance
    assert v3.digest() == v1.digest()


def test_context_uses_window(mock_paths):
    cfg = BuilderConfig(strategies=(CONTEXT,), window=2)
    _, results = build_verbalizer(LABELS, fixture_resources(mock_paths), fixture_prompts(), cfg)
    assert results["clickbait"][0].strategy == CONTEXT
