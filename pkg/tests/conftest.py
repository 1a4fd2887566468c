import numpy as np
import pytest

from guidednmt.evaluation import EvaluationHead
from guidednmt.model import EOS, ModelConfig, TranslationModel


def tiny_config(**overrides) -> ModelConfig:
    base = dict(d_model=8, n_layers=1, n_heads=2, d_ffn=16,
                src_vocab_size=11, tgt_vocab_size=11, max_seq_len=16,
                eval_layers=1)
    base.update(overrides)
    return ModelConfig(**base)


def random_sentence(rng, length, vocab=11):
    return np.append(rng.integers(4, vocab, size=length), EOS)


@pytest.fixture
def tiny_model():
    return TranslationModel(tiny_config(), np.random.default_rng(7))


@pytest.fixture
def tiny_pair(tiny_model):
    rng = np.random.default_rng(11)
    return random_sentence(rng, 5), random_sentence(rng, 6)


@pytest.fixture
def tiny_eval_head(tiny_model):
    return EvaluationHead(tiny_model.cfg, tiny_model, np.random.default_rng(8))
