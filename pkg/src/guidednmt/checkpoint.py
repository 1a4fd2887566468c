"""Named-parameter checkpoint archive.

Layout: magic line, 8-byte little-endian header length, UTF-8 JSON header
(model config, vocabularies, parameter manifest), then each parameter's
raw float64 little-endian bytes concatenated in manifest order. Round
trips are bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import ModelConfig, TranslationModel
from .optim import Parameter

MAGIC = b"GNMTCKPT1\n"


def save_checkpoint(path, config: ModelConfig, src_tokens: list[str],
                    tgt_tokens: list[str], params: list[Parameter],
                    extra: dict | None = None) -> None:
    manifest = [{"name": p.name, "shape": list(p.data.shape)} for p in params]
    header = {
        "config": config.to_dict(),
        "src_tokens": src_tokens,
        "tgt_tokens": tgt_tokens,
        "params": manifest,
    }
    if extra:
        header["extra"] = extra
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header_bytes).to_bytes(8, "little"))
        fh.write(header_bytes)
        for p in params:
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (model, eval_head_or_None, src_tokens, tgt_tokens, extra).

    Checkpoints without any "eval."-prefixed parameter load as a baseline
    Transformer (eval head absent).
    """
    from .evaluation import EvaluationHead  # local import: avoids a cycle

    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        header_len = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        blob = fh.read()
    config = ModelConfig.from_dict(header["config"])
    values: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).reshape(shape)
        values[entry["name"]] = arr.astype(np.float64)
        offset += n * 8

    rng = np.random.default_rng(0)  # init overwritten below
    model = TranslationModel(config, rng)
    has_eval = any(name.startswith("eval.") for name in values)
    eval_head = EvaluationHead(config, model, rng) if has_eval else None

    params = model.parameters() + (eval_head.parameters() if eval_head else [])
    restored = set()
    for p in params:
        if p.name not in values:
            raise ValueError(f"{path}: missing parameter {p.name!r}")
        if values[p.name].shape != p.data.shape:
            raise ValueError(f"{path}: shape mismatch for {p.name!r}")
        p.tensor.data[...] = values[p.name]
        restored.add(p.name)
    unknown = set(values) - restored
    if unknown:
        raise ValueError(f"{path}: unknown parameters {sorted(unknown)}")
    return model, eval_head, header["src_tokens"], header["tgt_tokens"], header.get("extra", {})


def strip_eval_parameters(src_path, dst_path) -> None:
    """Rewrite a checkpoint with every eval.* parameter removed."""
    with open(src_path, "rb") as fh:
        assert fh.read(len(MAGIC)) == MAGIC
        header_len = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        blob = fh.read()
    kept_entries = []
    chunks = []
    offset = 0
    for entry in header["params"]:
        n = int(np.prod(entry["shape"])) if entry["shape"] else 1
        raw = blob[offset:offset + n * 8]
        offset += n * 8
        if not entry["name"].startswith("eval."):
            kept_entries.append(entry)
            chunks.append(raw)
    header["params"] = kept_entries
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(dst_path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header_bytes).to_bytes(8, "little"))
        fh.write(header_bytes)
        for raw in chunks:
            fh.write(raw)
