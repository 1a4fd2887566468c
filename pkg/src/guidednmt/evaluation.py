"""The evaluation head: judges each generated word for fluency (past +
future target context) and faithfulness (cross-attention over source),
yielding a guidance distribution over the target vocabulary.

Conditioning contract for row i: depends on generated tokens strictly
before i, gold tokens strictly after i, and the source. Realized by
feeding a BOS-shifted generated sequence to a causal past encoder and an
EOS-extended left-shifted gold sequence to an anti-causal future encoder,
so no residual path can leak position i into its own evaluation.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .model import (
    AddNorm,
    BOS,
    EOS,
    EncoderLayer,
    FeedForward,
    ModelConfig,
    MultiHeadAttention,
    ParamRegistry,
    SourceStates,
    TranslationModel,
    _maybe_dropout,
    anti_causal_mask,
    causal_mask,
    embed_sequence,
    pad_only_mask,
)
from .optim import Parameter

PAST_LABEL, FUTURE_LABEL = 0, 1


class EvaluationHead:
    """Past/future encoders, fluency fusion, faithfulness cross-attention,
    final fusion, and the evaluation output projection.

    Shares the target word-embedding table (and positional encoding) with
    the translation model; everything else is separate parameters.
    """

    def __init__(self, cfg: ModelConfig, model: TranslationModel,
                 rng: np.random.Generator, faithfulness: bool = True):
        if cfg.eval_layers < 1:
            raise ValueError("eval_layers must be >= 1")
        self.cfg = cfg
        self.model = model
        self.faithfulness = faithfulness
        reg = ParamRegistry(rng)
        self.registry = reg
        d = cfg.d_model
        self.past_layers = [
            EncoderLayer(reg, f"eval.past.layer{i}", cfg)
            for i in range(cfg.eval_layers)
        ]
        self.future_layers = [
            EncoderLayer(reg, f"eval.future.layer{i}", cfg)
            for i in range(cfg.eval_layers)
        ]
        self.label_embed = reg.embedding("eval.label_embed", 2, d)
        self.W_p = reg.xavier("eval.W_p", d, d)
        self.W_f = reg.xavier("eval.W_f", d, d)
        self.cross_attn = MultiHeadAttention(reg, "eval.cross.attn", d, cfg.n_heads)
        self.cross_ln = AddNorm(reg, "eval.cross.ln", d)
        self.W_a = reg.xavier("eval.W_a", d, d)
        self.W_c = reg.xavier("eval.W_c", d, d)
        self.ffn_out = FeedForward(reg, "eval.ffn", d, cfg.d_ffn)
        self.ln_out = AddNorm(reg, "eval.ln_out", d)
        if cfg.tie_eval_projection:
            self.W_e = None
        else:
            self.W_e = reg.xavier("eval.W_e", d, cfg.tgt_vocab_size)

    def parameters(self) -> list[Parameter]:
        return list(self.registry.params)

    # -- encoders ------------------------------------------------------------

    def past_encode(self, y_generated, rng: np.random.Generator | None = None) -> Tensor:
        """Row i is a function of generated tokens strictly before step i."""
        y = np.asarray(y_generated, dtype=np.int64)
        inputs = np.concatenate(([BOS], y[:-1]))
        labels = np.full(inputs.shape, PAST_LABEL)
        x = embed_sequence(inputs, self.model.tgt_embed, self.model._positions,
                           self.label_embed, labels)
        x = _maybe_dropout(x, self.cfg.dropout_rate, rng)
        mask = causal_mask(inputs.shape[0])
        for layer in self.past_layers:
            x = layer(x, mask, rng)
        return x

    def future_encode(self, y_gold, rng: np.random.Generator | None = None) -> Tensor:
        """Row i is a function of gold tokens strictly after step i; the
        empty-future boundary is an EOS sentinel."""
        y = np.asarray(y_gold, dtype=np.int64)
        inputs = np.concatenate((y[1:], [EOS]))
        labels = np.full(inputs.shape, FUTURE_LABEL)
        x = embed_sequence(inputs, self.model.tgt_embed, self.model._positions,
                           self.label_embed, labels)
        x = _maybe_dropout(x, self.cfg.dropout_rate, rng)
        mask = anti_causal_mask(inputs.shape[0])
        for layer in self.future_layers:
            x = layer(x, mask, rng)
        return x

    # -- fusion + faithfulness ----------------------------------------------

    def fuse_fluency(self, a_past: Tensor, a_future: Tensor) -> Tensor:
        if a_past.shape != a_future.shape:
            raise ad.ShapeError(f"fluency fusion shapes differ: {a_past.shape} vs {a_future.shape}")
        return a_past @ self.W_p.tensor + a_future @ self.W_f.tensor

    def faithfulness_attention(self, fused: Tensor, src: SourceStates,
                               rng: np.random.Generator | None = None) -> Tensor:
        mask = pad_only_mask(fused.shape[0], src.pad_mask)
        attended = self.cross_attn(fused, src.H, src.H, mask)
        return self.cross_ln(fused, _maybe_dropout(attended, self.cfg.dropout_rate, rng))

    def evaluation_logits(self, fused: Tensor, faithful: Tensor | None,
                          rng: np.random.Generator | None = None) -> Tensor:
        combined = fused @ self.W_a.tensor
        if faithful is not None:
            combined = combined + faithful @ self.W_c.tensor
        states = self.ln_out(combined, _maybe_dropout(
            self.ffn_out(combined), self.cfg.dropout_rate, rng))
        if self.W_e is None:
            return self.model.logits(states)
        return states @ self.W_e.tensor

    def evaluation_distribution(self, fused: Tensor, faithful: Tensor | None) -> Tensor:
        return ad.softmax(self.evaluation_logits(fused, faithful))

    def forward_logits(self, y_generated, y_gold, src: SourceStates,
                       rng: np.random.Generator | None = None) -> Tensor:
        """Full head: logits whose softmax row i is p_e(. | gold_>i, gen_<i, x)."""
        a_p = self.past_encode(y_generated, rng)
        a_f = self.future_encode(y_gold, rng)
        fused = self.fuse_fluency(a_p, a_f)
        faithful = self.faithfulness_attention(fused, src, rng) if self.faithfulness else None
        return self.evaluation_logits(fused, faithful, rng)


def generate_teacher_forced_sequence(model: TranslationModel, src_ids, gold_ids,
                                     src_states: SourceStates | None = None) -> np.ndarray:
    """Per-position argmax of the translation distribution under ground-truth
    context. Detached by construction: the result is a plain id array and no
    gradient flows through the argmax."""
    logits, _ = model.teacher_forced_logits(src_ids, gold_ids, src_states=src_states)
    return np.argmax(logits.data, axis=-1)
