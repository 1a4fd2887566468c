import json
import math

import numpy as np
import pytest

from guidednmt.data import build_vocab, make_batches, synth_corpus
from guidednmt.trainer import (
    BASELINE,
    FINETUNE,
    FULL,
    NO_FAITHFULNESS,
    NO_GUIDANCE,
    PRETRAIN,
    Trainer,
    TrainSchedule,
    VARIANT_C,
    VARIANT_KL,
    VARIANT_NONE,
    rng_stream,
)
from conftest import tiny_config


def copy_setup(n_pairs=20, seed=1):
    pairs, _ = synth_corpus("copy", n_pairs, 6, 2, 4, seed=seed)
    lines = [" ".join(s) for s, _ in pairs]
    vocab = build_vocab(lines)
    cfg = tiny_config(src_vocab_size=len(vocab), tgt_vocab_size=len(vocab))
    return pairs, vocab, cfg


def one_batch(pairs, vocab, cfg):
    return make_batches(pairs, vocab, vocab, batch_size=len(pairs),
                        max_seq_len=cfg.max_seq_len)[0]


class TestSchedule:
    def test_pretrain_must_precede_total(self):
        with pytest.raises(ValueError, match="pretrain_epochs"):
            TrainSchedule(pretrain_epochs=5, total_epochs=5)

    def test_unknown_switch_criterion(self):
        with pytest.raises(ValueError, match="switch_criterion"):
            TrainSchedule(switch_criterion="whenever")


class TestRngStreams:
    def test_named_streams_are_independent(self):
        a = rng_stream(7, "model_init").random(4)
        b = rng_stream(7, "eval_init").random(4)
        assert not np.allclose(a, b)

    def test_reproducible(self):
        assert np.array_equal(rng_stream(7, "shuffle").random(4),
                              rng_stream(7, "shuffle").random(4))

    def test_unknown_stream(self):
        with pytest.raises(KeyError):
            rng_stream(7, "weather")


class TestLearningRate:
    def test_inverse_sqrt_with_warmup(self):
        t = Trainer(tiny_config(), TrainSchedule(pretrain_epochs=1, total_epochs=2,
                                                 warmup_steps=100, peak_lr=2e-3),
                    seed=0, ablation=BASELINE)
        t.step = 50
        assert math.isclose(t.learning_rate(), 2e-3 * 0.5, rel_tol=1e-12)
        t.step = 100
        assert math.isclose(t.learning_rate(), 2e-3, rel_tol=1e-12)
        t.step = 400
        assert math.isclose(t.learning_rate(), 1e-3, rel_tol=1e-12)

    def test_zero_warmup_is_flat_peak(self):
        t = Trainer(tiny_config(), TrainSchedule(pretrain_epochs=1, total_epochs=2,
                                                 warmup_steps=0, peak_lr=5e-4),
                    seed=0, ablation=BASELINE)
        t.step = 123
        assert t.learning_rate() == 5e-4


class TestTrainerConstruction:
    def test_unknown_ablation(self):
        with pytest.raises(ValueError, match="ablation"):
            Trainer(tiny_config(), TrainSchedule(), seed=0, ablation="half")

    def test_unknown_variant(self):
        with pytest.raises(ValueError, match="guidance_variant"):
            Trainer(tiny_config(), TrainSchedule(), seed=0, guidance_variant="Z")

    def test_baseline_has_no_evaluation_parameters(self):
        t = Trainer(tiny_config(), TrainSchedule(), seed=0, ablation=BASELINE)
        assert t.eval_head is None
        assert all(not p.name.startswith("eval.") for p in t.optimizer.params)

    def test_guidance_forced_off_without_head(self):
        for ablation in (BASELINE, NO_GUIDANCE):
            t = Trainer(tiny_config(), TrainSchedule(), seed=0,
                        guidance_variant=VARIANT_C, ablation=ablation)
            assert t.guidance_variant == VARIANT_NONE

    def test_no_faithfulness_keeps_parameters_but_disables_block(self):
        t = Trainer(tiny_config(), TrainSchedule(), seed=0,
                    ablation=NO_FAITHFULNESS)
        assert t.eval_head.faithfulness is False
        assert any(p.name.startswith("eval.cross.")
                   for p in t.eval_head.parameters())

    def test_model_init_identical_across_ablations(self):
        """The translation model draws from its own stream, so adding or
        removing the evaluation head cannot move its initialization."""
        full = Trainer(tiny_config(), TrainSchedule(), seed=3, ablation=FULL)
        base = Trainer(tiny_config(), TrainSchedule(), seed=3, ablation=BASELINE)
        for p, q in zip(full.model.parameters(), base.model.parameters()):
            assert p.name == q.name
            assert np.array_equal(p.data, q.data)


class TestTrainingStep:
    def test_pretrain_has_no_guidance_term(self):
        pairs, vocab, cfg = copy_setup()
        t = Trainer(cfg, TrainSchedule(pretrain_epochs=1, total_epochs=2),
                    seed=0, guidance_variant=VARIANT_C)
        out = t.training_step(one_batch(pairs, vocab, cfg), PRETRAIN)
        assert out.phase == PRETRAIN
        assert out.guidance_variant == VARIANT_NONE
        assert out.L_guidance == 0.0
        assert out.L_e > 0.0

    def test_finetune_adds_guidance_term(self):
        pairs, vocab, cfg = copy_setup()
        for variant in (VARIANT_C, VARIANT_KL):
            t = Trainer(cfg, TrainSchedule(pretrain_epochs=1, total_epochs=2),
                        seed=0, guidance_variant=variant)
            out = t.training_step(one_batch(pairs, vocab, cfg), FINETUNE)
            assert out.guidance_variant == variant
            assert out.L_guidance != 0.0

    def test_total_is_sum_of_terms(self):
        pairs, vocab, cfg = copy_setup()
        t = Trainer(cfg, TrainSchedule(pretrain_epochs=1, total_epochs=2),
                    seed=0, guidance_variant=VARIANT_C)
        out = t.training_step(one_batch(pairs, vocab, cfg), FINETUNE)
        assert abs(out.L_total - (out.L_t + out.L_e + out.L_guidance)) < 1e-12

    def test_baseline_total_is_translation_only(self):
        pairs, vocab, cfg = copy_setup()
        t = Trainer(cfg, TrainSchedule(pretrain_epochs=1, total_epochs=2),
                    seed=0, ablation=BASELINE)
        out = t.training_step(one_batch(pairs, vocab, cfg), PRETRAIN)
        assert out.L_e == 0.0 and out.L_guidance == 0.0
        assert out.L_total == out.L_t

    def test_step_reduces_training_loss(self):
        pairs, vocab, cfg = copy_setup()
        t = Trainer(cfg, TrainSchedule(pretrain_epochs=1, total_epochs=2,
                                       warmup_steps=1, peak_lr=3e-3),
                    seed=0, ablation=BASELINE)
        batch = one_batch(pairs, vocab, cfg)
        first = t.training_step(batch, PRETRAIN).L_t
        for _ in range(10):
            last = t.training_step(batch, PRETRAIN).L_t
        assert last < first

    def test_non_finite_loss_aborts_and_names_term(self):
        pairs, vocab, cfg = copy_setup()
        t = Trainer(cfg, TrainSchedule(pretrain_epochs=1, total_epochs=2), seed=0)
        t.model.W_o.tensor.data[0, 0] = np.nan
        with pytest.raises(RuntimeError, match="L_t"):
            t.training_step(one_batch(pairs, vocab, cfg), PRETRAIN)


class TestTrainLoop:
    def run(self, tmp_path, name, **kw):
        pairs, vocab, cfg = copy_setup()
        defaults = dict(pretrain_epochs=1, total_epochs=3, warmup_steps=10,
                        peak_lr=3e-3, batch_size=8)
        defaults.update(kw.pop("schedule", {}))
        sched = TrainSchedule(**defaults)
        t = Trainer(cfg, sched, seed=kw.pop("seed", 5), **kw)
        out = tmp_path / name
        records = t.train(pairs, pairs[:6], vocab, vocab, out, sample_size=6)
        return out, records

    def test_artifacts_and_log_structure(self, tmp_path):
        out, records = self.run(tmp_path, "full", guidance_variant=VARIANT_C)
        assert (out / "last.ckpt").exists() and (out / "best.ckpt").exists()
        lines = (out / "metrics.jsonl").read_text().splitlines()
        assert len(lines) == len(records) == 3
        for line, record in zip(lines, records):
            assert json.loads(line) == record
        assert [r["phase"] for r in records] == [PRETRAIN, FINETUNE, FINETUNE]
        assert all({"L_t", "L_e", "L_guidance", "L_total", "valid_bleu",
                    "token_acc", "sample_gen_prob"} <= set(r) for r in records)

    def test_baseline_log_omits_evaluation_keys(self, tmp_path):
        _, records = self.run(tmp_path, "base", ablation=BASELINE)
        for r in records:
            assert "L_e" not in r and "L_guidance" not in r
            assert r["phase"] == PRETRAIN

    def test_no_guidance_logs_l_e_but_never_finetunes(self, tmp_path):
        _, records = self.run(tmp_path, "nog", ablation=NO_GUIDANCE)
        for r in records:
            assert "L_e" in r and "L_guidance" not in r
            assert r["phase"] == PRETRAIN

    def test_seeded_rerun_is_byte_identical(self, tmp_path):
        out1, _ = self.run(tmp_path, "a", guidance_variant=VARIANT_C)
        out2, _ = self.run(tmp_path, "b", guidance_variant=VARIANT_C)
        assert ((out1 / "metrics.jsonl").read_bytes()
                == (out2 / "metrics.jsonl").read_bytes())
        assert ((out1 / "last.ckpt").read_bytes()
                == (out2 / "last.ckpt").read_bytes())

    def test_valid_plateau_switches_after_patience(self, tmp_path):
        # peak_lr 0 freezes the model, so validation loss plateaus at once
        _, records = self.run(
            tmp_path, "plateau", guidance_variant=VARIANT_C,
            schedule=dict(switch_criterion="valid_plateau", patience=1,
                          peak_lr=0.0, total_epochs=3))
        assert records[0]["phase"] == PRETRAIN
        assert records[-1]["phase"] == FINETUNE
