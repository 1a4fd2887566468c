"""Central finite-difference verification of every loss path.

Each path's frozen context (generated sequence, evaluator probabilities)
is computed once and held constant, so the numeric gradient probes exactly
the differentiable surface the analytic gradient claims.
"""

from __future__ import annotations

import numpy as np

from .evaluation import EvaluationHead
from .losses import (
    loss_evaluation,
    loss_guidance_c,
    loss_guidance_kl,
    loss_translation,
    softmax_rows,
)
from .model import EOS, ModelConfig, TranslationModel
from .optim import Parameter

DEFAULT_TOLERANCE = 1e-4


def finite_difference_max_error(loss_fn, params: list[Parameter],
                                rng: np.random.Generator, h: float = 1e-5,
                                coords_per_param: int = 3) -> float:
    """Max relative error between analytic and central-difference gradients
    over randomly sampled coordinates of `params`."""
    for p in params:
        p.zero_grad()
    loss_fn().backward()
    analytic = {p.name: p.grad.copy() for p in params}
    worst = 0.0
    for p in params:
        flat = p.tensor.data.reshape(-1)
        n_coords = min(coords_per_param, flat.size)
        coords = rng.choice(flat.size, size=n_coords, replace=False)
        for c in coords:
            saved = flat[c]
            flat[c] = saved + h
            up = loss_fn().item()
            flat[c] = saved - h
            down = loss_fn().item()
            flat[c] = saved
            numeric = (up - down) / (2.0 * h)
            a = analytic[p.name].reshape(-1)[c]
            err = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-3)
            worst = max(worst, err)
    return worst


def build_tiny_setup(seed: int = 0):
    """d_model=8, one layer, two heads, vocab 11: the gradcheck instance."""
    cfg = ModelConfig(d_model=8, n_layers=1, n_heads=2, d_ffn=16,
                      src_vocab_size=11, tgt_vocab_size=11, max_seq_len=16,
                      eval_layers=1)
    rng = np.random.default_rng(seed)
    model = TranslationModel(cfg, rng)
    eval_head = EvaluationHead(cfg, model, rng)
    src_ids = np.append(rng.integers(4, 11, size=5), EOS)
    gold_ids = np.append(rng.integers(4, 11, size=6), EOS)
    return model, eval_head, src_ids, gold_ids


def run_gradcheck(seed: int = 0, h: float = 1e-5,
                  coords_per_param: int = 3) -> dict[str, float]:
    """Max relative gradient error for the L_t, L_e, L_c, and L_KL paths."""
    model, eval_head, src_ids, gold_ids = build_tiny_setup(seed)
    model_params = model.parameters()
    all_params = model_params + eval_head.parameters()
    rng = np.random.default_rng(seed + 1)

    def translation_logits():
        logits, _ = model.teacher_forced_logits(src_ids, gold_ids)
        return logits

    # frozen context for the evaluation and guidance paths
    y_gen = np.argmax(translation_logits().data, axis=-1)

    def evaluation_logits():
        logits, src_states = model.teacher_forced_logits(src_ids, gold_ids)
        return eval_head.forward_logits(y_gen, gold_ids, src_states)

    pe_rows = softmax_rows(evaluation_logits().data)
    pe_weights = pe_rows[np.arange(len(y_gen)), y_gen]
    mismatch = y_gen != gold_ids
    if not mismatch.any():
        mismatch = np.ones_like(mismatch)

    paths = {
        "L_t": (lambda: loss_translation(translation_logits(), gold_ids), model_params),
        "L_e": (lambda: loss_evaluation(evaluation_logits(), gold_ids), all_params),
        "L_c": (lambda: loss_guidance_c(translation_logits(), y_gen, pe_weights),
                model_params),
        "L_KL": (lambda: loss_guidance_kl(translation_logits(), pe_rows, mismatch),
                 model_params),
    }
    return {
        name: finite_difference_max_error(fn, params, rng, h, coords_per_param)
        for name, (fn, params) in paths.items()
    }
