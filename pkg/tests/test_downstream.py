"""Retrieval, clone detection, attention analysis, and corpus filtering."""

import numpy as np
import pytest

from codeflow.downstream import (
    CloneExample,
    DimensionMismatch,
    EmptyInput,
    ParseFailure,
    RankingResult,
    clone_metrics,
    clone_probability,
    cls_attention_split,
    encode_code,
    encode_code_example,
    encode_query_example,
    encode_text,
    evaluate_search,
    filter_search_corpus,
    finetune_clone,
    finetune_search,
    mrr,
    prepare_search_examples,
    rank_candidates,
)
from codeflow.dfg import extract_dfg
from codeflow.encoding import additive_mask, build_attention_mask, build_vocab, encode_example
from codeflow.model import ModelConfig, forward, init_params
from codeflow.pretrain import CorpusItem
from helpers import clone_corpus, search_pairs

MAX_POSITIONS = 128


def tiny_config(**kw):
    base = dict(
        num_layers=1, hidden_dim=16, num_heads=2, ffn_dim=32,
        vocab_size=128, max_positions=MAX_POSITIONS, seed=13,
    )
    base.update(kw)
    return ModelConfig(**base)


def search_fixture(n=8, **cfg_kw):
    pairs = search_pairs(n)
    cfg = tiny_config(**cfg_kw)
    vocab = build_vocab([(q, c) for q, c in pairs], cfg.vocab_size)
    params = init_params(cfg)
    examples = prepare_search_examples(pairs, vocab, max_positions=MAX_POSITIONS)
    return pairs, cfg, vocab, params, examples


# -- ranking -------------------------------------------------------------------


class TestRanking:
    def test_hand_example(self):
        r = rank_candidates(np.array([1.0, 0.0]), [np.array([0.0, 1.0]), np.array([2.0, 0.0]), np.array([1.0, 0.0])], gold_id=0)
        assert r.ordering == (1, 2, 0)
        assert r.gold_rank == 3

    def test_ties_break_by_ascending_id(self):
        q = np.array([1.0, 0.0])
        cands = [np.array([1.0, 9.0]), np.array([1.0, -4.0]), np.array([1.0, 0.0])]
        r = rank_candidates(q, cands, gold_id=2)
        assert r.ordering == (0, 1, 2)
        assert r.gold_rank == 3

    def test_ordering_properties_fuzz(self):
        rng = np.random.default_rng(19)
        for _ in range(50):
            q = rng.normal(size=8)
            cands = [rng.normal(size=8) for _ in range(12)]
            gold = int(rng.integers(0, 12))
            r = rank_candidates(q, cands, gold_id=gold, query_id=3)
            assert sorted(r.ordering) == list(range(12))
            scores = [float(q @ c) for c in cands]
            along = [scores[i] for i in r.ordering]
            assert all(a >= b for a, b in zip(along, along[1:]))
            assert r.ordering[r.gold_rank - 1] == gold
            assert r.query_id == 3

    def test_query_scaling_keeps_ordering(self):
        rng = np.random.default_rng(21)
        q = rng.normal(size=4)
        cands = [rng.normal(size=4) for _ in range(6)]
        a = rank_candidates(q, cands, gold_id=0)
        b = rank_candidates(3.0 * q, cands, gold_id=0)
        assert a.ordering == b.ordering

    def test_validation(self):
        with pytest.raises(EmptyInput):
            rank_candidates(np.zeros(3), [], gold_id=0)
        with pytest.raises(DimensionMismatch):
            rank_candidates(np.zeros(3), [np.zeros(4)], gold_id=0)


class TestMrr:
    def test_hand_values(self):
        assert mrr([2, 4]) == pytest.approx(0.375)
        assert mrr([1, 1, 1]) == 1.0
        assert mrr([RankingResult(0, (1, 0), 2), 4]) == pytest.approx(0.375)

    def test_empty(self):
        with pytest.raises(EmptyInput):
            mrr([])


# -- encoding vectors -----------------------------------------------------------


class TestVectorEncoders:
    def test_query_encoding_layout(self):
        _, _, vocab, _, _ = search_fixture()
        ex = encode_query_example("find the maximum value", vocab, max_positions=MAX_POSITIONS)
        assert ex.code_positions == ()
        assert ex.node_positions == ()
        assert len(ex.comment_positions) == 4

    def test_code_encoding_layout(self):
        _, _, vocab, _, _ = search_fixture()
        ex = encode_code_example("a = 1\nb = a\n", vocab, max_positions=MAX_POSITIONS)
        assert ex.comment_positions == ()
        assert len(ex.node_positions) == 3
        nodeless = encode_code_example("a = 1\nb = a\n", vocab, max_positions=MAX_POSITIONS, use_dataflow=False)
        assert nodeless.node_positions == ()

    def test_vector_shapes_and_determinism(self):
        _, cfg, vocab, params, _ = search_fixture()
        v = encode_text("find the maximum", params, vocab)
        w = encode_code("a = 1\nb = a\n", params, vocab)
        assert v.shape == w.shape == (cfg.hidden_dim,)
        assert v.dtype == np.float32
        assert np.array_equal(v, encode_text("find the maximum", params, vocab))
        assert np.array_equal(w, encode_code("a = 1\nb = a\n", params, vocab))

    def test_dataflow_changes_code_vector(self):
        _, _, vocab, params, _ = search_fixture()
        with_flow = encode_code("a = 1\nb = a\n", params, vocab, use_dataflow=True)
        without = encode_code("a = 1\nb = a\n", params, vocab, use_dataflow=False)
        assert not np.array_equal(with_flow, without)

    def test_empty_query(self):
        _, _, vocab, params, _ = search_fixture()
        with pytest.raises(EmptyInput):
            encode_text("   ", params, vocab)

    def test_unparseable_code(self):
        _, _, vocab, params, _ = search_fixture()
        with pytest.raises(ParseFailure):
            encode_code("def f(:\n", params, vocab)


# -- search ----------------------------------------------------------------------


class TestSearch:
    def test_prepare_and_evaluate(self):
        _, _, _, params, examples = search_fixture()
        score = evaluate_search(params, examples)
        assert 1.0 / len(examples) <= score <= 1.0
        assert score == evaluate_search(params, examples)

    def test_evaluate_empty(self):
        _, _, _, params, _ = search_fixture()
        with pytest.raises(EmptyInput):
            evaluate_search(params, [])

    def test_finetune_overfits_small_set(self):
        _, _, _, params, examples = search_fixture(n=4)
        before = evaluate_search(params, examples)
        finetune_search(examples, params, rng=0, lr=3e-3, batch_size=4, epochs=12)
        after = evaluate_search(params, examples)
        assert after >= before
        assert after >= 0.75

    def test_finetune_needs_two_pairs(self):
        _, _, _, params, examples = search_fixture(n=4)
        with pytest.raises(EmptyInput):
            finetune_search(examples[:1], params, rng=0)

    def test_finetune_with_validation_split(self):
        _, _, _, params, examples = search_fixture(n=6)
        tuned = finetune_search(
            examples[:4], params, rng=0, lr=3e-3, batch_size=4, epochs=6,
            val_examples=examples[4:], patience=2,
        )
        assert tuned is params
        for t in tuned.tensors.values():
            assert np.isfinite(t.data).all()

    def test_no_dataflow_variant(self):
        pairs = search_pairs(4)
        cfg = tiny_config()
        vocab = build_vocab([(q, c) for q, c in pairs], cfg.vocab_size)
        params = init_params(cfg)
        examples = prepare_search_examples(pairs, vocab, max_positions=MAX_POSITIONS, use_dataflow=False)
        assert all(ex.code_encoded.node_positions == () for ex in examples)
        score = evaluate_search(params, examples, use_dataflow=False)
        assert 0.0 < score <= 1.0


# -- clone detection --------------------------------------------------------------


def clone_fixture():
    tuples = clone_corpus()
    cfg = tiny_config()
    corpus = [(f"pair {i}", a + b) for i, (a, b, _) in enumerate(tuples)]
    vocab = build_vocab(corpus, cfg.vocab_size)
    params = init_params(cfg)
    return tuples, vocab, params


class TestCloneDetection:
    def test_probability_symmetric_and_bounded(self):
        tuples, vocab, params = clone_fixture()
        for a, b, _ in tuples[:3]:
            p = clone_probability(a, b, params, vocab)
            q = clone_probability(b, a, params, vocab)
            assert 0.0 < p < 1.0
            assert p == pytest.approx(q, abs=1e-12)

    def test_self_pair_at_least_half(self):
        tuples, vocab, params = clone_fixture()
        code = tuples[0][0]
        assert clone_probability(code, code, params, vocab) >= 0.5

    def test_finetune_separates_labels(self):
        tuples, vocab, params = clone_fixture()
        pairs = [CloneExample(a, b, y) for a, b, y in tuples]
        finetune_clone(pairs, params, vocab, rng=0, lr=3e-3, batch_size=4, epochs=10)
        probs = [clone_probability(p.code_a, p.code_b, params, vocab) for p in pairs]
        pos = [p for p, ex in zip(probs, pairs) if ex.label == 1]
        neg = [p for p, ex in zip(probs, pairs) if ex.label == 0]
        assert min(pos) > max(neg)

    def test_finetune_empty(self):
        _, vocab, params = clone_fixture()
        with pytest.raises(EmptyInput):
            finetune_clone([], params, vocab, rng=0)


class TestCloneMetrics:
    def test_hand_example(self):
        p, r, f1 = clone_metrics([0.9, 0.2, 0.8, 0.4], [1, 0, 0, 1])
        assert (p, r, f1) == (0.5, 0.5, 0.5)

    def test_perfect(self):
        assert clone_metrics([0.9, 0.1], [1, 0]) == (1.0, 1.0, 1.0)

    def test_zero_denominators(self):
        assert clone_metrics([0.1, 0.2], [0, 0]) == (0.0, 0.0, 0.0)
        assert clone_metrics([0.1, 0.2], [1, 1]) == (0.0, 0.0, 0.0)

    def test_threshold_is_strict(self):
        # a prediction exactly at the threshold counts as negative
        p, r, f1 = clone_metrics([0.5], [1])
        assert (p, r, f1) == (0.0, 0.0, 0.0)
        p, r, f1 = clone_metrics([0.5], [1], threshold=0.4)
        assert (p, r, f1) == (1.0, 1.0, 1.0)

    def test_against_confusion_matrix_oracle(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            n = int(rng.integers(1, 30))
            preds = rng.random(n)
            labels = rng.integers(0, 2, size=n)
            p, r, f1 = clone_metrics(preds, labels)
            tp = int(np.sum((preds > 0.5) & (labels == 1)))
            fp = int(np.sum((preds > 0.5) & (labels == 0)))
            fn = int(np.sum((preds <= 0.5) & (labels == 1)))
            want_p = tp / (tp + fp) if tp + fp else 0.0
            want_r = tp / (tp + fn) if tp + fn else 0.0
            want_f = 2 * want_p * want_r / (want_p + want_r) if want_p + want_r else 0.0
            assert (p, r, f1) == (want_p, want_r, want_f)

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            clone_metrics([0.5], [1, 0])


# -- attention analysis ------------------------------------------------------------


class TestAttentionSplit:
    def forward_example(self, code="a = 1\nb = a\n", use_dataflow=True):
        cfg = tiny_config(num_layers=2)
        params = init_params(cfg)
        vocab = build_vocab([("query words here", code)], cfg.vocab_size)
        ex = encode_example(
            "query words here", code, extract_dfg(code), vocab,
            max_positions=MAX_POSITIONS, include_dataflow=use_dataflow,
        )
        acts = forward(params, ex.ids, ex.position_ids, additive_mask(build_attention_mask(ex, use_dataflow=use_dataflow)))
        return acts, ex

    def test_split_sums_to_one(self):
        acts, ex = self.forward_example()
        code_frac, node_frac = cls_attention_split(acts, ex)
        assert code_frac + node_frac == pytest.approx(1.0, abs=1e-6)
        assert 0.0 < node_frac < 1.0

    def test_zero_nodes(self):
        acts, ex = self.forward_example(use_dataflow=False)
        assert cls_attention_split(acts, ex) == (1.0, 0.0)

    def test_zero_layers_with_nodes_rejected(self):
        cfg = tiny_config(num_layers=0)
        params = init_params(cfg)
        code = "a = 1\nb = a\n"
        vocab = build_vocab([("query words here", code)], cfg.vocab_size)
        ex = encode_example("query words here", code, extract_dfg(code), vocab, max_positions=MAX_POSITIONS)
        acts = forward(params, ex.ids, ex.position_ids, additive_mask(build_attention_mask(ex)))
        with pytest.raises(ValueError):
            cls_attention_split(acts, ex)


# -- corpus filtering ----------------------------------------------------------------


def item(code="a = 1\n", docstring="set the value a"):
    return CorpusItem(code=code, docstring=docstring, lang="python")


class TestFilterSearchCorpus:
    def test_keeps_clean_item(self):
        assert filter_search_corpus([item()]) == [item()]

    def test_drops_unparseable_code(self):
        assert filter_search_corpus([item(code="def f(:\n")]) == []

    def test_drops_short_and_long_queries(self):
        assert filter_search_corpus([item(docstring="too short")]) == []
        assert filter_search_corpus([item(docstring=" ".join(["w"] * 257))]) == []
        assert filter_search_corpus([item(docstring=" ".join(["w"] * 256))]) != []
        assert filter_search_corpus([item(docstring="")]) == []

    def test_drops_urls(self):
        assert filter_search_corpus([item(docstring="see http://x.test for details")]) == []

    def test_drops_mostly_non_ascii(self):
        assert filter_search_corpus([item(docstring="укр мов тест")]) == []
        assert filter_search_corpus([item(docstring="abc où def")]) != []

    def test_order_preserving_and_idempotent(self):
        items = [
            item(docstring="first clean entry"),
            item(code="def f(:\n"),
            item(docstring="second clean entry"),
        ]
        kept = filter_search_corpus(items)
        assert kept == [items[0], items[2]]
        assert filter_search_corpus(kept) == kept
