"""Corpus BLEU, n-gram accuracy, embedding cosine, perplexity, and the
teacher-forced translation-vs-evaluation module comparison."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .evaluation import EvaluationHead
from .losses import pick_probabilities
from .model import TranslationModel, UNK


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _clipped_matches(hyp: list[str], ref: list[str], n: int) -> tuple[int, int]:
    hyp_counts = _ngrams(hyp, n)
    ref_counts = _ngrams(ref, n)
    matched = sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
    return matched, sum(hyp_counts.values())


def bleu(hypotheses, references, max_n: int = 4) -> float:
    """Corpus-level BLEU (multi-bleu definition, no smoothing), in [0, 100]."""
    if len(hypotheses) != len(references):
        raise ValueError("hypotheses and references must align")
    if not hypotheses:
        raise ValueError("empty corpus")
    matched = [0] * max_n
    total = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            m, t = _clipped_matches(hyp, ref, n)
            matched[n - 1] += m
            total[n - 1] += t
    if hyp_len == 0 or any(m == 0 for m in matched):
        return 0.0
    log_prec = sum(math.log(m / t) for m, t in zip(matched, total)) / max_n
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_prec)


def ngram_accuracy(hypotheses, references, n: int) -> float:
    """Clipped matched n-grams over total hypothesis n-grams, in [0, 100]."""
    if not 1 <= n <= 4:
        raise ValueError("n must be in 1..4")
    matched = total = 0
    for hyp, ref in zip(hypotheses, references):
        m, t = _clipped_matches(hyp, ref, n)
        matched += m
        total += t
    return 100.0 * matched / total if total else 0.0


def embedding_cosine(hypotheses, references, embed_table: np.ndarray, vocab) -> float:
    """Cosine between mean hypothesis and mean reference embeddings,
    averaged over the corpus; empty sentences are skipped."""
    sims = []
    for hyp, ref in zip(hypotheses, references):
        if not hyp or not ref:
            continue
        h = np.mean([embed_table[vocab.token_to_id.get(w, UNK)] for w in hyp], axis=0)
        r = np.mean([embed_table[vocab.token_to_id.get(w, UNK)] for w in ref], axis=0)
        denom = np.linalg.norm(h) * np.linalg.norm(r)
        if denom == 0.0:
            continue
        sims.append(float(h @ r / denom))
    if not sims:
        raise ValueError("no scorable sentence pairs")
    return float(np.mean(sims))


def perplexity_from_nll(total_nll: float, token_count: int) -> float:
    return math.exp(total_nll / max(1, token_count))


@dataclass
class MetricReport:
    bleu: float
    ngram_accuracy: dict[int, float]
    cosine_similarity: float
    eval_module_bleu: float | None = None
    perplexities: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "bleu": self.bleu,
            "ngram_accuracy": {str(k): v for k, v in self.ngram_accuracy.items()},
            "cosine_similarity": self.cosine_similarity,
        }
        if self.eval_module_bleu is not None:
            out["eval_module_bleu"] = self.eval_module_bleu
        if self.perplexities:
            out["perplexities"] = self.perplexities
        return out


def compare_modules_teacher_forced(model: TranslationModel, eval_head: EvaluationHead,
                                   pairs, src_vocab, tgt_vocab) -> MetricReport:
    """Feed ground truth to both modules: the translation module sees the
    gold prefix, the evaluation module the generated prefix and gold
    suffix. Report per-module argmax BLEU and gold-token perplexity."""
    from .data import encode_pair

    tran_hyps, eval_hyps, refs = [], [], []
    tran_nll = eval_nll = 0.0
    tokens = 0
    for pair in pairs:
        src_ids, gold_ids = encode_pair(pair, src_vocab, tgt_vocab)
        logits, src_states = model.teacher_forced_logits(src_ids, gold_ids)
        y_gen = np.argmax(logits.data, axis=-1)
        pe_logits = eval_head.forward_logits(y_gen, gold_ids, src_states)
        tran_nll += float(-np.log(pick_probabilities(logits.data, gold_ids)).sum())
        eval_nll += float(-np.log(pick_probabilities(pe_logits.data, gold_ids)).sum())
        tokens += len(gold_ids)
        tran_hyps.append(tgt_vocab.decode(y_gen))
        eval_hyps.append(tgt_vocab.decode(np.argmax(pe_logits.data, axis=-1)))
        refs.append(list(pair[1]))
    return MetricReport(
        bleu=bleu(tran_hyps, refs),
        ngram_accuracy={n: ngram_accuracy(tran_hyps, refs, n) for n in range(1, 5)},
        cosine_similarity=embedding_cosine(tran_hyps, refs, model.tgt_embed.data, tgt_vocab),
        eval_module_bleu=bleu(eval_hyps, refs),
        perplexities={
            "translation_teacher_forced": perplexity_from_nll(tran_nll, tokens),
            "evaluation": perplexity_from_nll(eval_nll, tokens),
        },
    )
