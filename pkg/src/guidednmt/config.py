"""Experiment configuration: a flat `key.path = value` text file with CLI
overrides, resolved into the model / schedule / trainer settings."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .model import ModelConfig
from .trainer import (
    BASELINE,
    FULL,
    NO_FAITHFULNESS,
    NO_GUIDANCE,
    TrainSchedule,
    VARIANT_C,
    VARIANT_KL,
    VARIANT_NONE,
)


class ConfigError(ValueError):
    """Invalid or missing configuration; message names the field."""


def parse_config_text(text: str) -> dict:
    """Parse `key.path = value` lines; values are JSON scalars when they
    parse, bare strings otherwise."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        try:
            values[key] = json.loads(value)
        except json.JSONDecodeError:
            values[key] = value
    return values


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"))


_GUIDANCE = {"c": VARIANT_C, "kl": VARIANT_KL, "none": VARIANT_NONE}
_ABLATIONS = (FULL, NO_FAITHFULNESS, NO_GUIDANCE, BASELINE)

_MODEL_FIELDS = {
    "d_model": int, "n_layers": int, "n_heads": int, "d_ffn": int,
    "max_seq_len": int, "dropout_rate": float, "share_target_embeddings": bool,
    "learned_positions": bool, "eval_layers": int, "tie_eval_projection": bool,
}
_TRAIN_FIELDS = {
    "pretrain_epochs": int, "total_epochs": int, "warmup_steps": int,
    "peak_lr": float, "batch_size": int, "switch_criterion": str, "patience": int,
}
_PATH_FIELDS = ("train_src", "train_tgt", "valid_src", "valid_tgt", "output_dir")


@dataclass
class ExperimentConfig:
    seed: int = 0
    guidance_variant: str = VARIANT_C
    ablation: str = FULL
    literal_paper_sign: bool = False
    min_count: int = 1
    sample_size: int = 200
    model: dict = field(default_factory=dict)  # ModelConfig kwargs sans vocab sizes
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    paths: dict = field(default_factory=dict)

    def model_config(self, src_vocab_size: int, tgt_vocab_size: int) -> ModelConfig:
        try:
            return ModelConfig(src_vocab_size=src_vocab_size,
                               tgt_vocab_size=tgt_vocab_size, **self.model)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"model: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "guidance_variant": self.guidance_variant,
            "ablation": self.ablation,
            "literal_paper_sign": self.literal_paper_sign,
            "min_count": self.min_count,
            "sample_size": self.sample_size,
            "model": dict(self.model),
            "train": {k: getattr(self.schedule, k) for k in _TRAIN_FIELDS},
            "paths": dict(self.paths),
        }


def _coerce(key: str, value, typ):
    if typ is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ConfigError(f"{key}: expected true/false, got {value!r}")
    try:
        return typ(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: expected {typ.__name__}, got {value!r}") from exc


def resolve_config(values: dict, overrides: dict | None = None) -> ExperimentConfig:
    merged = dict(values)
    if overrides:
        merged.update(overrides)
    cfg = ExperimentConfig()
    model_kwargs: dict = {}
    train_kwargs: dict = {}
    for key, value in merged.items():
        head, _, rest = key.partition(".")
        if head == "model":
            if rest not in _MODEL_FIELDS:
                raise ConfigError(f"unknown model field: {key}")
            model_kwargs[rest] = _coerce(key, value, _MODEL_FIELDS[rest])
        elif head == "train":
            if rest not in _TRAIN_FIELDS:
                raise ConfigError(f"unknown train field: {key}")
            train_kwargs[rest] = _coerce(key, value, _TRAIN_FIELDS[rest])
        elif head == "paths":
            if rest not in _PATH_FIELDS:
                raise ConfigError(f"unknown path field: {key}")
            cfg.paths[rest] = str(value)
        elif key == "seed":
            cfg.seed = _coerce(key, value, int)
        elif key == "guidance_variant":
            name = str(value).lower()
            if name not in _GUIDANCE:
                raise ConfigError(f"guidance_variant: expected c|kl|none, got {value!r}")
            cfg.guidance_variant = _GUIDANCE[name]
        elif key == "ablation":
            name = str(value).lower()
            if name not in _ABLATIONS:
                raise ConfigError(
                    f"ablation: expected one of {', '.join(_ABLATIONS)}, got {value!r}")
            cfg.ablation = name
        elif key == "literal_paper_sign":
            cfg.literal_paper_sign = _coerce(key, value, bool)
        elif key == "data.min_count":
            cfg.min_count = _coerce(key, value, int)
        elif key == "sample_size":
            cfg.sample_size = _coerce(key, value, int)
        else:
            raise ConfigError(f"unknown config key: {key}")
    cfg.model = model_kwargs
    try:
        cfg.schedule = TrainSchedule(**train_kwargs)
    except ValueError as exc:
        raise ConfigError(f"train: {exc}") from exc
    return cfg
