"""Two-phase training loop: joint pretraining of the translation and
evaluation losses, then fine-tuning with a guidance term that pulls the
translation distribution toward the evaluator's judgment of the generated
words.

All randomness derives from one root seed split into independent,
consumer-named streams, so e.g. a baseline run is unaffected by whether an
evaluation head exists elsewhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import save_checkpoint
from .data import TokenBatch, Vocabulary, make_batches
from .decoding import greedy_decode
from .evaluation import EvaluationHead
from .losses import (
    loss_evaluation,
    loss_guidance_c,
    loss_guidance_kl,
    loss_translation,
    pick_probabilities,
    softmax_rows,
)
from .metrics import bleu
from .model import ModelConfig, TranslationModel
from .optim import Adam

PRETRAIN, FINETUNE = "PRETRAIN", "FINETUNE"
VARIANT_C, VARIANT_KL, VARIANT_NONE = "C", "KL", "NONE"
FULL, NO_FAITHFULNESS, NO_GUIDANCE, BASELINE = (
    "full", "no_faithfulness", "no_guidance", "baseline")

_STREAMS = {"model_init": 1, "eval_init": 2, "shuffle": 3, "dropout": 4}


def rng_stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), _STREAMS[name]]))


@dataclass
class TrainSchedule:
    pretrain_epochs: int = 10
    total_epochs: int = 30
    warmup_steps: int = 200
    peak_lr: float = 1e-3
    batch_size: int = 16
    switch_criterion: str = "fixed_epoch"  # or "valid_plateau"
    patience: int = 2

    def __post_init__(self):
        if not 0 <= self.pretrain_epochs < self.total_epochs:
            raise ValueError("need 0 <= pretrain_epochs < total_epochs")
        if self.switch_criterion not in ("fixed_epoch", "valid_plateau"):
            raise ValueError(f"unknown switch_criterion {self.switch_criterion!r}")


@dataclass
class LossBreakdown:
    L_t: float
    L_e: float
    L_guidance: float
    L_total: float
    token_accuracy: float
    mean_prob_of_generated_word: float
    guidance_variant: str
    phase: str


class Trainer:
    def __init__(self, cfg: ModelConfig, schedule: TrainSchedule, seed: int,
                 guidance_variant: str = VARIANT_C, ablation: str = FULL,
                 literal_paper_sign: bool = False):
        if ablation not in (FULL, NO_FAITHFULNESS, NO_GUIDANCE, BASELINE):
            raise ValueError(f"unknown ablation {ablation!r}")
        if guidance_variant not in (VARIANT_C, VARIANT_KL, VARIANT_NONE):
            raise ValueError(f"unknown guidance_variant {guidance_variant!r}")
        if ablation in (BASELINE, NO_GUIDANCE):
            guidance_variant = VARIANT_NONE
        self.cfg = cfg
        self.schedule = schedule
        self.seed = seed
        self.guidance_variant = guidance_variant
        self.ablation = ablation
        self.literal_paper_sign = literal_paper_sign
        self.model = TranslationModel(cfg, rng_stream(seed, "model_init"))
        if ablation == BASELINE:
            self.eval_head = None
        else:
            self.eval_head = EvaluationHead(
                cfg, self.model, rng_stream(seed, "eval_init"),
                faithfulness=ablation != NO_FAITHFULNESS)
        params = self.model.parameters()
        if self.eval_head is not None:
            params = params + self.eval_head.parameters()
        self.optimizer = Adam(params, lr=schedule.peak_lr)
        self.step = 0
        self._dropout_rng = rng_stream(seed, "dropout")

    # -- one optimization step ----------------------------------------------

    def learning_rate(self) -> float:
        s = max(1, self.step)
        w = self.schedule.warmup_steps
        if w <= 0:
            return self.schedule.peak_lr
        return self.schedule.peak_lr * min(s / w, (w / s) ** 0.5)

    def training_step(self, batch: TokenBatch, phase: str) -> LossBreakdown:
        drop = self._dropout_rng if self.cfg.dropout_rate > 0 else None
        guided = phase == FINETUNE and self.guidance_variant != VARIANT_NONE
        lt_terms, le_terms, lg_terms = [], [], []
        token_count = 0
        correct = 0
        gen_prob_sum = 0.0
        for src_ids, gold_ids in batch.rows():
            logits, src_states = self.model.teacher_forced_logits(
                src_ids, gold_ids, rng=drop)
            lt_terms.append(loss_translation(logits, gold_ids, reduction="sum"))
            y_gen = np.argmax(logits.data, axis=-1)
            token_count += len(gold_ids)
            correct += int((y_gen == gold_ids).sum())
            gen_prob_sum += float(pick_probabilities(logits.data, y_gen).sum())
            if self.eval_head is not None:
                pe_logits = self.eval_head.forward_logits(
                    y_gen, gold_ids, src_states, rng=drop)
                le_terms.append(loss_evaluation(pe_logits, gold_ids, reduction="sum"))
                if guided:
                    pe_rows = softmax_rows(pe_logits.data)  # frozen teacher
                    if self.guidance_variant == VARIANT_C:
                        weights = pe_rows[np.arange(len(y_gen)), y_gen]
                        lg_terms.append(loss_guidance_c(
                            logits, y_gen, weights, reduction="sum",
                            literal_paper_sign=self.literal_paper_sign))
                    else:
                        lg_terms.append(loss_guidance_kl(
                            logits, pe_rows, y_gen != gold_ids, reduction="sum"))

        inv = 1.0 / token_count
        L_t = ad.scale(_sum_terms(lt_terms), inv)
        total = L_t
        L_e = None
        if le_terms:
            L_e = ad.scale(_sum_terms(le_terms), inv)
            total = total + L_e
        L_g = None
        if lg_terms:
            L_g = ad.scale(_sum_terms(lg_terms), inv)
            total = total + L_g

        breakdown = LossBreakdown(
            L_t=L_t.item(),
            L_e=L_e.item() if L_e is not None else 0.0,
            L_guidance=L_g.item() if L_g is not None else 0.0,
            L_total=total.item(),
            token_accuracy=correct / token_count,
            mean_prob_of_generated_word=gen_prob_sum / token_count,
            guidance_variant=self.guidance_variant if guided else VARIANT_NONE,
            phase=phase,
        )
        for name, value in (("L_t", breakdown.L_t), ("L_e", breakdown.L_e),
                            ("L_guidance", breakdown.L_guidance)):
            if not np.isfinite(value):
                raise RuntimeError(f"non-finite loss term {name} at step {self.step}")

        self.optimizer.zero_grad()
        total.backward()
        self.step += 1
        self.optimizer.step(lr=self.learning_rate())
        return breakdown

    # -- evaluation helpers --------------------------------------------------

    def _teacher_forced_stats(self, pairs, src_vocab, tgt_vocab):
        """(token accuracy, mean prob of generated word, argmax hypotheses)."""
        from .data import encode_pair

        correct = tokens = 0
        prob_sum = 0.0
        hyps = []
        for pair in pairs:
            src_ids, gold_ids = encode_pair(pair, src_vocab, tgt_vocab)
            logits, _ = self.model.teacher_forced_logits(src_ids, gold_ids)
            y_gen = np.argmax(logits.data, axis=-1)
            correct += int((y_gen == gold_ids).sum())
            tokens += len(gold_ids)
            prob_sum += float(pick_probabilities(logits.data, y_gen).sum())
            hyps.append(tgt_vocab.decode(y_gen))
        return correct / tokens, prob_sum / tokens, hyps

    def _valid_pretrain_loss(self, pairs, src_vocab, tgt_vocab) -> float:
        """Mean per-token L_t (+ L_e when the head exists) on held-out pairs."""
        from .data import encode_pair

        total = 0.0
        tokens = 0
        for pair in pairs:
            src_ids, gold_ids = encode_pair(pair, src_vocab, tgt_vocab)
            logits, src_states = self.model.teacher_forced_logits(src_ids, gold_ids)
            total += float(-np.log(pick_probabilities(logits.data, gold_ids)).sum())
            if self.eval_head is not None:
                y_gen = np.argmax(logits.data, axis=-1)
                pe_logits = self.eval_head.forward_logits(y_gen, gold_ids, src_states)
                total += float(-np.log(pick_probabilities(pe_logits.data, gold_ids)).sum())
            tokens += len(gold_ids)
        return total / tokens

    def _decode_bleu(self, pairs, src_vocab, tgt_vocab):
        from .data import encode_pair

        hyps, refs = [], []
        for pair in pairs:
            src_ids, _ = encode_pair(pair, src_vocab, tgt_vocab)
            result = greedy_decode(self.model, src_ids, max_len=self.cfg.max_seq_len)
            hyps.append(tgt_vocab.decode(result.tokens))
            refs.append(list(pair[1]))
        return bleu(hyps, refs)

    # -- full schedule -------------------------------------------------------

    def train(self, train_pairs, valid_pairs, src_vocab: Vocabulary,
              tgt_vocab: Vocabulary, out_dir, sample_size: int = 200,
              extra_header: dict | None = None) -> list[dict]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        shuffle_rng = rng_stream(self.seed, "shuffle")
        sample = train_pairs[: min(sample_size, len(train_pairs))]
        sched = self.schedule
        records: list[dict] = []
        best_bleu = -1.0
        switched = False
        plateau_best = float("inf")
        plateau_age = 0
        metrics_path = out_dir / "metrics.jsonl"
        with open(metrics_path, "w", encoding="utf-8") as log:
            for epoch in range(1, sched.total_epochs + 1):
                if self.guidance_variant == VARIANT_NONE:
                    phase = PRETRAIN
                elif sched.switch_criterion == "fixed_epoch":
                    phase = FINETUNE if epoch > sched.pretrain_epochs else PRETRAIN
                else:
                    phase = FINETUNE if switched else PRETRAIN
                batches = make_batches(
                    train_pairs, src_vocab, tgt_vocab, sched.batch_size,
                    rng=shuffle_rng, max_seq_len=self.cfg.max_seq_len)
                steps = [self.training_step(b, phase) for b in batches]

                token_acc, _, _ = self._teacher_forced_stats(valid_pairs, src_vocab, tgt_vocab)
                _, sample_gen_prob, sample_hyps = self._teacher_forced_stats(
                    sample, src_vocab, tgt_vocab)
                sample_bleu = bleu(sample_hyps, [list(p[1]) for p in sample])
                valid_bleu = self._decode_bleu(valid_pairs, src_vocab, tgt_vocab)
                record = {
                    "epoch": epoch,
                    "phase": phase,
                    "L_t": float(np.mean([s.L_t for s in steps])),
                    "L_total": float(np.mean([s.L_total for s in steps])),
                    "valid_bleu": valid_bleu,
                    "train_sample_bleu": sample_bleu,
                    "token_acc": token_acc,
                    "train_token_acc": float(np.mean([s.token_accuracy for s in steps])),
                    "sample_gen_prob": sample_gen_prob,
                }
                if self.eval_head is not None:
                    record["L_e"] = float(np.mean([s.L_e for s in steps]))
                    if self.guidance_variant != VARIANT_NONE:
                        record["L_guidance"] = float(np.mean([s.L_guidance for s in steps]))
                records.append(record)
                log.write(json.dumps(record, sort_keys=True) + "\n")
                log.flush()

                if sched.switch_criterion == "valid_plateau" and not switched:
                    pretrain_valid = self._valid_pretrain_loss(
                        valid_pairs, src_vocab, tgt_vocab)
                    if pretrain_valid < plateau_best - 1e-9:
                        plateau_best = pretrain_valid
                        plateau_age = 0
                    else:
                        plateau_age += 1
                        if plateau_age >= sched.patience:
                            switched = True

                self._save(out_dir / "last.ckpt", src_vocab, tgt_vocab, extra_header)
                if valid_bleu > best_bleu:
                    best_bleu = valid_bleu
                    self._save(out_dir / "best.ckpt", src_vocab, tgt_vocab, extra_header)
        return records

    def _save(self, path, src_vocab, tgt_vocab, extra_header):
        params = self.model.parameters()
        if self.eval_head is not None:
            params = params + self.eval_head.parameters()
        save_checkpoint(path, self.cfg, src_vocab.tokens, tgt_vocab.tokens,
                        params, extra=extra_header)


def _sum_terms(terms):
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total
