"""Training losses: translation and evaluation cross-entropies plus the
two guidance variants (evaluator-weighted likelihood, masked KL).

The guidance losses always treat the evaluator's distribution as a frozen
teacher: probabilities enter as plain arrays, so no gradient can reach the
evaluation head through them.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .model import PAD


def loss_translation(logits: Tensor, gold, pad_mask=None, reduction: str = "mean") -> Tensor:
    """Cross-entropy of the gold tokens under teacher-forced logits."""
    gold = np.asarray(gold, dtype=np.int64)
    if pad_mask is None:
        pad_mask = gold == PAD
    targets = np.where(pad_mask, -1, gold)
    return ad.cross_entropy(logits, targets, ignore_index=-1, reduction=reduction)


def loss_evaluation(p_e_logits: Tensor, gold, pad_mask=None, reduction: str = "mean") -> Tensor:
    """Cross-entropy of the gold tokens under the evaluation distribution.
    Gradients reach the evaluation head and the shared encoder only."""
    return loss_translation(p_e_logits, gold, pad_mask, reduction)


def loss_guidance_c(p_logits: Tensor, y_generated, p_e_frozen, pad_mask=None,
                    reduction: str = "sum", literal_paper_sign: bool = False) -> Tensor:
    """Evaluator-weighted likelihood of the generated words.

    Default minimizes -sum_i p_e(y_i) * log p(y_i): a step on it raises the
    translation probability of each generated word in proportion to the
    evaluator's confidence. `literal_paper_sign` flips the sign.
    """
    y_generated = np.asarray(y_generated, dtype=np.int64)
    weights = np.asarray(p_e_frozen, dtype=np.float64)
    if pad_mask is not None:
        pad_mask = np.asarray(pad_mask, dtype=bool)
        weights = np.where(pad_mask, 0.0, weights)
    out = ad.weighted_nll(p_logits, y_generated, weights, reduction=reduction)
    if literal_paper_sign:
        out = ad.neg(out)
    return out


def loss_guidance_kl(p_logits: Tensor, p_e_frozen_rows, mismatch_mask,
                     reduction: str = "sum") -> Tensor:
    """KL(p_e || p) summed over positions where the generated word differs
    from the gold word; p_e is the frozen teacher."""
    out = ad.kl_from_logits(p_logits, p_e_frozen_rows, mismatch_mask)
    if reduction == "mean":
        count = int(np.asarray(mismatch_mask, dtype=bool).sum())
        if count:
            out = ad.scale(out, 1.0 / count)
    return out


def pick_probabilities(logits_data: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Softmax probability of `ids[i]` in row i (plain numpy, no graph)."""
    shifted = logits_data - logits_data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)
    return p[np.arange(len(ids)), np.asarray(ids, dtype=np.int64)]


def softmax_rows(logits_data: np.ndarray) -> np.ndarray:
    shifted = logits_data - logits_data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)
