"""Greedy and beam decoding with the translation module alone."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import softmax_rows
from .model import BOS, EOS, SourceStates, TranslationModel


@dataclass
class DecodeResult:
    tokens: list[int]  # decoded ids, EOS-terminated unless max_len hit
    log_probs: list[float]  # per-step log-probability of each chosen token
    score: float  # sum of log_probs

    @property
    def normalized_score(self) -> float:
        return self.score / max(1, len(self.tokens))


def _step_log_probs(model: TranslationModel, src: SourceStates, prefix: list[int]) -> np.ndarray:
    """Log-distribution of the next token after `prefix` (generated ids)."""
    tgt_input = np.array([BOS] + prefix, dtype=np.int64)
    states = model.decode_states(tgt_input, src)
    logits = model.logits(states).data[-1]
    probs = softmax_rows(logits[None, :])[0]
    with np.errstate(divide="ignore"):
        return np.log(probs)


def greedy_decode(model: TranslationModel, src_ids, max_len: int) -> DecodeResult:
    src = model.encode(src_ids)
    tokens: list[int] = []
    log_probs: list[float] = []
    for _ in range(max_len):
        lp = _step_log_probs(model, src, tokens)
        nxt = int(np.argmax(lp))  # argmax ties break toward the lowest id
        tokens.append(nxt)
        log_probs.append(float(lp[nxt]))
        if nxt == EOS:
            break
    return DecodeResult(tokens, log_probs, float(sum(log_probs)))


def _length_normalize(score: float, length: int, length_penalty: float) -> float:
    return score / (max(1, length) ** length_penalty)


def beam_decode(model: TranslationModel, src_ids, beam: int, max_len: int,
                length_penalty: float = 1.0) -> DecodeResult:
    """Standard beam search over length-normalized log-probability.

    Ties break deterministically by token id. beam=1 is exactly greedy.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    src = model.encode(src_ids)
    # hypotheses: (tokens tuple, per-step log probs tuple)
    alive: list[tuple[tuple[int, ...], tuple[float, ...]]] = [((), ())]
    finished: list[tuple[tuple[int, ...], tuple[float, ...]]] = []
    for _ in range(max_len):
        candidates = []
        for tokens, lps in alive:
            step_lp = _step_log_probs(model, src, list(tokens))
            for tok in range(step_lp.shape[0]):
                candidates.append((tokens + (tok,), lps + (float(step_lp[tok]),)))
        # rank by cumulative log-probability; token-id order breaks ties
        candidates.sort(key=lambda c: (-sum(c[1]), c[0]))
        alive = []
        for tokens, lps in candidates[:beam]:
            if tokens[-1] == EOS:
                finished.append((tokens, lps))
            else:
                alive.append((tokens, lps))
        if not alive:
            break
    finished.extend(alive)  # length-capped hypotheses compete too
    best = max(
        finished,
        key=lambda c: (_length_normalize(sum(c[1]), len(c[0]), length_penalty),
                       [-t for t in c[0]]),
    )
    tokens, lps = best
    return DecodeResult(list(tokens), list(lps), float(sum(lps)))
