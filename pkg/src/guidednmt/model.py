"""Shared encoder, translation decoder, and the blocks both are built from.

Post-norm base-style architecture: every sublayer is wrapped as
``LayerNorm(x + Sublayer(x))``, attention is scaled dot-product with
additive -inf masking, positions are sinusoidal unless configured learned.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .optim import Parameter

PAD, BOS, EOS, UNK = 0, 1, 2, 3


@dataclass
class ModelConfig:
    d_model: int = 32
    n_layers: int = 1
    n_heads: int = 2
    d_ffn: int = 64
    src_vocab_size: int = 8
    tgt_vocab_size: int = 8
    max_seq_len: int = 64
    dropout_rate: float = 0.0
    share_target_embeddings: bool = False
    learned_positions: bool = False
    eval_layers: int = 2
    tie_eval_projection: bool = False

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        if self.src_vocab_size < 5 or self.tgt_vocab_size < 5:
            raise ValueError("vocab sizes must be >= 5 (pad, bos, eos, unk, content)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class SourceStates:
    H: Tensor  # J x d_model
    pad_mask: np.ndarray  # bool (J,), True where PAD


@dataclass
class AttentionMask:
    allowed: np.ndarray  # bool rows x keys
    kind: str  # "causal" | "anti-causal" | "pad-only"

    def __post_init__(self):
        if not self.allowed.any(axis=-1).all():
            raise ad.MaskError(f"{self.kind} mask with an empty row")


def causal_mask(rows: int, key_pad: np.ndarray | None = None) -> AttentionMask:
    allowed = np.tril(np.ones((rows, rows), dtype=bool))
    if key_pad is not None:
        allowed &= ~key_pad[None, :]
    return AttentionMask(allowed, "causal")


def anti_causal_mask(rows: int, key_pad: np.ndarray | None = None) -> AttentionMask:
    allowed = np.triu(np.ones((rows, rows), dtype=bool))
    if key_pad is not None:
        allowed &= ~key_pad[None, :]
    return AttentionMask(allowed, "anti-causal")


def pad_only_mask(rows: int, key_pad: np.ndarray) -> AttentionMask:
    allowed = np.broadcast_to(~key_pad[None, :], (rows, key_pad.shape[0])).copy()
    return AttentionMask(allowed, "pad-only")


def sinusoidal_positions(max_len: int, d_model: int) -> np.ndarray:
    pos = np.arange(max_len)[:, None]
    dim = np.arange(0, d_model, 2)[None, :]
    angle = pos / np.power(10000.0, dim / d_model)
    pe = np.zeros((max_len, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


class ParamRegistry:
    """Creates named parameters with seeded init and keeps them in order."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.params: list[Parameter] = []
        self._names: set[str] = set()

    def _register(self, name: str, data) -> Parameter:
        if name in self._names:
            raise ValueError(f"duplicate parameter name {name!r}")
        p = Parameter(name, data)
        self._names.add(name)
        self.params.append(p)
        return p

    def xavier(self, name: str, fan_in: int, fan_out: int) -> Parameter:
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        return self._register(name, self.rng.uniform(-bound, bound, (fan_in, fan_out)))

    def embedding(self, name: str, vocab: int, d_model: int) -> Parameter:
        bound = 1.0 / math.sqrt(d_model)
        return self._register(name, self.rng.uniform(-bound, bound, (vocab, d_model)))

    def zeros(self, name: str, shape) -> Parameter:
        return self._register(name, np.zeros(shape))

    def ones(self, name: str, shape) -> Parameter:
        return self._register(name, np.ones(shape))


class AddNorm:
    def __init__(self, reg: ParamRegistry, prefix: str, d_model: int):
        self.gain = reg.ones(f"{prefix}.gain", (d_model,))
        self.bias = reg.zeros(f"{prefix}.bias", (d_model,))

    def __call__(self, residual: Tensor, sublayer_out: Tensor) -> Tensor:
        return ad.layer_norm(residual + sublayer_out, self.gain.tensor, self.bias.tensor)


class MultiHeadAttention:
    def __init__(self, reg: ParamRegistry, prefix: str, d_model: int, n_heads: int):
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.Wq = reg.xavier(f"{prefix}.Wq", d_model, d_model)
        self.Wk = reg.xavier(f"{prefix}.Wk", d_model, d_model)
        self.Wv = reg.xavier(f"{prefix}.Wv", d_model, d_model)
        self.Wo = reg.xavier(f"{prefix}.Wo", d_model, d_model)

    def __call__(self, q_in: Tensor, k_in: Tensor, v_in: Tensor,
                 mask: AttentionMask) -> Tensor:
        q = q_in @ self.Wq.tensor
        k = k_in @ self.Wk.tensor
        v = v_in @ self.Wv.tensor
        scale = 1.0 / math.sqrt(self.d_head)
        heads = []
        for h in range(self.n_heads):
            a, b = h * self.d_head, (h + 1) * self.d_head
            qh = ad.slice_cols(q, a, b)
            kh = ad.slice_cols(k, a, b)
            vh = ad.slice_cols(v, a, b)
            scores = ad.scale(qh @ ad.transpose(kh), scale)
            weights = ad.softmax_masked(scores, mask.allowed)
            heads.append(weights @ vh)
        concat = heads[0] if len(heads) == 1 else ad.concat_cols(heads)
        return concat @ self.Wo.tensor


class FeedForward:
    def __init__(self, reg: ParamRegistry, prefix: str, d_model: int, d_ffn: int):
        self.W1 = reg.xavier(f"{prefix}.W1", d_model, d_ffn)
        self.b1 = reg.zeros(f"{prefix}.b1", (d_ffn,))
        self.W2 = reg.xavier(f"{prefix}.W2", d_ffn, d_model)
        self.b2 = reg.zeros(f"{prefix}.b2", (d_model,))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.relu(x @ self.W1.tensor + self.b1.tensor) @ self.W2.tensor + self.b2.tensor


class EncoderLayer:
    """Self-attention + FFN, each wrapped in AddNorm."""

    def __init__(self, reg: ParamRegistry, prefix: str, cfg: ModelConfig):
        self.attn = MultiHeadAttention(reg, f"{prefix}.attn", cfg.d_model, cfg.n_heads)
        self.ln1 = AddNorm(reg, f"{prefix}.ln1", cfg.d_model)
        self.ffn = FeedForward(reg, f"{prefix}.ffn", cfg.d_model, cfg.d_ffn)
        self.ln2 = AddNorm(reg, f"{prefix}.ln2", cfg.d_model)
        self.dropout_rate = cfg.dropout_rate

    def __call__(self, x: Tensor, mask: AttentionMask,
                 rng: np.random.Generator | None = None) -> Tensor:
        z = self.ln1(x, _maybe_dropout(self.attn(x, x, x, mask), self.dropout_rate, rng))
        return self.ln2(z, _maybe_dropout(self.ffn(z), self.dropout_rate, rng))


class DecoderLayer:
    """Causal self-attention, cross-attention over source states, FFN."""

    def __init__(self, reg: ParamRegistry, prefix: str, cfg: ModelConfig):
        self.self_attn = MultiHeadAttention(reg, f"{prefix}.self_attn", cfg.d_model, cfg.n_heads)
        self.ln1 = AddNorm(reg, f"{prefix}.ln1", cfg.d_model)
        self.cross_attn = MultiHeadAttention(reg, f"{prefix}.cross_attn", cfg.d_model, cfg.n_heads)
        self.ln2 = AddNorm(reg, f"{prefix}.ln2", cfg.d_model)
        self.ffn = FeedForward(reg, f"{prefix}.ffn", cfg.d_model, cfg.d_ffn)
        self.ln3 = AddNorm(reg, f"{prefix}.ln3", cfg.d_model)
        self.dropout_rate = cfg.dropout_rate

    def __call__(self, x: Tensor, self_mask: AttentionMask, src: SourceStates,
                 cross_mask: AttentionMask, rng: np.random.Generator | None = None) -> Tensor:
        a = self.ln1(x, _maybe_dropout(self.self_attn(x, x, x, self_mask), self.dropout_rate, rng))
        c = self.ln2(a, _maybe_dropout(
            self.cross_attn(a, src.H, src.H, cross_mask), self.dropout_rate, rng))
        return self.ln3(c, _maybe_dropout(self.ffn(c), self.dropout_rate, rng))


def _maybe_dropout(x: Tensor, rate: float, rng) -> Tensor:
    if rng is None or rate <= 0.0:
        return x
    return ad.dropout(x, rate, rng)


def embed_sequence(ids, table: Parameter, positions: np.ndarray | Tensor | None,
                   label_table: Parameter | None = None, label_ids=None) -> Tensor:
    """Word embedding + position embedding (+ label embedding when given)."""
    ids = np.asarray(ids, dtype=np.int64)
    out = ad.embedding(table.tensor, ids)
    if positions is not None:
        n = ids.shape[0]
        if isinstance(positions, Tensor):
            pos = ad.embedding(positions, np.arange(n))
        else:
            pos = Tensor(positions[:n])
        out = out + pos
    if label_table is not None:
        if label_ids is None:
            raise ValueError("label_table given without label ids")
        out = out + ad.embedding(label_table.tensor, np.asarray(label_ids, dtype=np.int64))
    return out


class TranslationModel:
    """Shared encoder + translation decoder + output projection."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        reg = ParamRegistry(rng)
        self.registry = reg
        d = cfg.d_model
        self.src_embed = reg.embedding("src_embed", cfg.src_vocab_size, d)
        self.tgt_embed = reg.embedding("tgt_embed", cfg.tgt_vocab_size, d)
        if cfg.learned_positions:
            self.pos_embed = reg.embedding("pos_embed", cfg.max_seq_len, d)
            self._positions = self.pos_embed.tensor
        else:
            self.pos_embed = None
            self._positions = sinusoidal_positions(cfg.max_seq_len, d)
        self.encoder_layers = [
            EncoderLayer(reg, f"encoder.layer{i}", cfg) for i in range(cfg.n_layers)
        ]
        self.decoder_layers = [
            DecoderLayer(reg, f"decoder.layer{i}", cfg) for i in range(cfg.n_layers)
        ]
        if cfg.share_target_embeddings:
            self.W_o = None
        else:
            self.W_o = reg.xavier("W_o", d, cfg.tgt_vocab_size)

    def parameters(self) -> list[Parameter]:
        return list(self.registry.params)

    # -- forward -------------------------------------------------------------

    def encode(self, src_ids, pad_mask: np.ndarray | None = None,
               rng: np.random.Generator | None = None) -> SourceStates:
        src_ids = np.asarray(src_ids, dtype=np.int64)
        if src_ids.size == 0:
            raise ValueError("empty source sequence")
        if pad_mask is None:
            pad_mask = src_ids == PAD
        x = embed_sequence(src_ids, self.src_embed, self._positions)
        x = _maybe_dropout(x, self.cfg.dropout_rate, rng)
        mask = pad_only_mask(src_ids.shape[0], pad_mask)
        for layer in self.encoder_layers:
            x = layer(x, mask, rng)
        return SourceStates(H=x, pad_mask=pad_mask)

    def decode_states(self, tgt_input_ids, src: SourceStates,
                      rng: np.random.Generator | None = None) -> Tensor:
        tgt_input_ids = np.asarray(tgt_input_ids, dtype=np.int64)
        if tgt_input_ids.size == 0:
            raise ValueError("empty target input")
        n = tgt_input_ids.shape[0]
        x = embed_sequence(tgt_input_ids, self.tgt_embed, self._positions)
        x = _maybe_dropout(x, self.cfg.dropout_rate, rng)
        self_mask = causal_mask(n)
        cross_mask = pad_only_mask(n, src.pad_mask)
        for layer in self.decoder_layers:
            x = layer(x, self_mask, src, cross_mask, rng)
        return x

    def logits(self, states: Tensor) -> Tensor:
        if self.W_o is None:
            return states @ ad.transpose(self.tgt_embed.tensor)
        return states @ self.W_o.tensor

    def translation_distribution(self, states: Tensor) -> Tensor:
        return ad.softmax(self.logits(states))

    def teacher_forced_logits(self, src_ids, gold_ids, src_pad_mask=None,
                              rng: np.random.Generator | None = None,
                              src_states: SourceStates | None = None):
        """Logits over gold-shifted input: rows align with gold positions."""
        gold_ids = np.asarray(gold_ids, dtype=np.int64)
        tgt_input = np.concatenate(([BOS], gold_ids[:-1]))
        if src_states is None:
            src_states = self.encode(src_ids, src_pad_mask, rng)
        states = self.decode_states(tgt_input, src_states, rng)
        return self.logits(states), src_states
