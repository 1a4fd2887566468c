import math

import numpy as np
import pytest

from guidednmt.data import Vocabulary
from guidednmt.evaluation import EvaluationHead
from guidednmt.metrics import (
    MetricReport,
    bleu,
    compare_modules_teacher_forced,
    embedding_cosine,
    ngram_accuracy,
    perplexity_from_nll,
)
from guidednmt.model import TranslationModel
from conftest import tiny_config


class TestBleu:
    def test_identical_corpus_is_100(self):
        hyps = [["a", "b", "c", "d", "e"], ["x", "y", "z", "w"]]
        assert math.isclose(bleu(hyps, hyps), 100.0, rel_tol=1e-12)

    def test_short_hypothesis_brevity_penalty(self):
        # perfect precisions, 4 vs 5 tokens: 100 * exp(1 - 5/4) = 77.8800...
        got = bleu([["a", "b", "c", "d"]], [["a", "b", "c", "d", "e"]])
        assert abs(got - 77.88) <= 0.01
        assert math.isclose(got, 100.0 * math.exp(-0.25), rel_tol=1e-12)

    def test_no_bigram_overlap_is_zero(self):
        assert bleu([["the", "the", "the", "the", "the"]],
                    [["the", "cat", "sat", "down", "there"]]) == 0.0

    def test_clipping_limits_repeats(self):
        # 5x "the" vs one "the" in the reference: clipped 1-gram matches = 1
        got = ngram_accuracy([["the", "the", "the", "the", "the"]],
                             [["the", "cat"]], 1)
        assert math.isclose(got, 100.0 / 5, rel_tol=1e-12)

    def test_corpus_level_not_sentence_mean(self):
        # corpus BLEU pools counts; with unigram-only overlap in one pair and
        # full overlap in the other, pooled counts differ from a mean of 100 and 0
        hyps = [["a", "b", "c", "d", "e"], ["a", "x", "y", "z", "w"]]
        refs = [["a", "b", "c", "d", "e"], ["a", "q", "r", "s", "t"]]
        # pooled: p1=6/10, p2=4/8, p3=3/6, p4=2/4; lengths equal -> BP=1
        expect = 100.0 * (0.6 * 0.5 * 0.5 * 0.5) ** 0.25
        assert math.isclose(bleu(hyps, refs), expect, rel_tol=1e-12)

    def test_pair_order_invariance(self):
        hyps = [["a", "b"], ["c", "d", "e"], ["f"]]
        refs = [["a", "b"], ["c", "e", "d"], ["f"]]
        assert math.isclose(bleu(hyps, refs), bleu(hyps[::-1], refs[::-1]),
                            rel_tol=1e-12)

    def test_misaligned_raises(self):
        with pytest.raises(ValueError, match="align"):
            bleu([["a"]], [["a"], ["b"]])

    def test_empty_corpus_raises(self):
        with pytest.raises(ValueError, match="empty"):
            bleu([], [])


class TestNgramAccuracy:
    def test_one_substitution_ladder(self):
        hyp, ref = [["a", "b", "c", "d"]], [["a", "b", "c", "e"]]
        assert math.isclose(ngram_accuracy(hyp, ref, 1), 75.0, rel_tol=1e-12)
        assert abs(ngram_accuracy(hyp, ref, 2) - 66.67) <= 0.01
        assert math.isclose(ngram_accuracy(hyp, ref, 3), 50.0, rel_tol=1e-12)
        assert ngram_accuracy(hyp, ref, 4) == 0.0

    def test_order_matters_beyond_unigrams(self):
        hyp, ref = [["b", "a"]], [["a", "b"]]
        assert math.isclose(ngram_accuracy(hyp, ref, 1), 100.0, rel_tol=1e-12)
        assert ngram_accuracy(hyp, ref, 2) == 0.0

    def test_invalid_n(self):
        with pytest.raises(ValueError):
            ngram_accuracy([["a"]], [["a"]], 5)

    def test_no_ngrams_is_zero(self):
        assert ngram_accuracy([["a"]], [["a"]], 2) == 0.0


class TestEmbeddingCosine:
    def vocab_and_table(self):
        v = Vocabulary(["e1", "e2"])
        table = np.zeros((6, 2))
        table[4] = [1.0, 0.0]  # e1
        table[5] = [0.0, 1.0]  # e2
        return v, table

    def test_identical_sentences_give_one(self):
        v, table = self.vocab_and_table()
        got = embedding_cosine([["e1", "e2"]], [["e1", "e2"]], table, v)
        assert math.isclose(got, 1.0, rel_tol=1e-12)

    def test_opposite_embeddings_give_minus_one(self):
        v = Vocabulary(["p", "m"])
        table = np.zeros((6, 2))
        table[4] = [1.0, 1.0]
        table[5] = [-1.0, -1.0]
        got = embedding_cosine([["p"]], [["m"]], table, v)
        assert math.isclose(got, -1.0, rel_tol=1e-12)

    def test_hand_oracle_orthogonal_mix(self):
        # mean(hyp)=[1,0], mean(ref)=[0.5,0.5] -> cos = 0.5/(1*sqrt(0.5))
        v, table = self.vocab_and_table()
        got = embedding_cosine([["e1"]], [["e1", "e2"]], table, v)
        assert math.isclose(got, 0.5 / math.sqrt(0.5), rel_tol=1e-12)

    def test_unscorable_corpus_raises(self):
        v, table = self.vocab_and_table()
        with pytest.raises(ValueError, match="scorable"):
            embedding_cosine([[]], [["e1"]], table, v)


class TestPerplexity:
    def test_uniform_model(self):
        # 10 tokens, each -log(1/8) nats -> perplexity exactly 8
        nll = 10 * math.log(8.0)
        assert math.isclose(perplexity_from_nll(nll, 10), 8.0, rel_tol=1e-12)

    def test_zero_tokens_guard(self):
        assert perplexity_from_nll(0.0, 0) == 1.0


class TestMetricReport:
    def test_to_dict_keys_are_strings(self):
        r = MetricReport(bleu=50.0, ngram_accuracy={1: 75.0, 2: 50.0},
                         cosine_similarity=0.9)
        d = r.to_dict()
        assert set(d) == {"bleu", "ngram_accuracy", "cosine_similarity"}
        assert set(d["ngram_accuracy"]) == {"1", "2"}

    def test_optional_fields_appear_when_set(self):
        r = MetricReport(bleu=1.0, ngram_accuracy={}, cosine_similarity=0.0,
                         eval_module_bleu=2.0, perplexities={"evaluation": 3.0})
        d = r.to_dict()
        assert d["eval_module_bleu"] == 2.0
        assert d["perplexities"] == {"evaluation": 3.0}


class TestCompareModules:
    def test_report_shape_and_determinism(self):
        cfg = tiny_config()
        model = TranslationModel(cfg, np.random.default_rng(0))
        head = EvaluationHead(cfg, model, np.random.default_rng(1))
        tokens = [f"w{i}" for i in range(7)]
        vocab = Vocabulary(tokens)
        pairs = [(["w0", "w1"], ["w1", "w0"]), (["w2"], ["w2", "w3"])]
        a = compare_modules_teacher_forced(model, head, pairs, vocab, vocab)
        b = compare_modules_teacher_forced(model, head, pairs, vocab, vocab)
        assert a.to_dict() == b.to_dict()
        assert set(a.perplexities) == {"translation_teacher_forced", "evaluation"}
        assert a.eval_module_bleu is not None
        assert set(a.ngram_accuracy) == {1, 2, 3, 4}
        for v in a.perplexities.values():
            assert v >= 1.0
