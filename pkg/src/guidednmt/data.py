"""Vocabulary, parallel-corpus ingestion, batching, and synthetic tasks.

Corpus format: two aligned UTF-8 files, one whitespace-tokenized sentence
per line. Reserved ids PAD=0, BOS=1, EOS=2, UNK=3 are fixed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import BOS, EOS, PAD, UNK

RESERVED = ["<pad>", "<bos>", "<eos>", "<unk>"]


class Vocabulary:
    def __init__(self, tokens: list[str]):
        """`tokens` are the non-reserved entries in id order (ids 4, 5, ...)."""
        self.id_to_token = RESERVED + list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.id_to_token)

    @property
    def tokens(self) -> list[str]:
        return self.id_to_token[len(RESERVED):]

    def encode(self, words: list[str]) -> list[int]:
        return [self.token_to_id.get(w, UNK) for w in words]

    def decode(self, ids) -> list[str]:
        out = []
        for i in ids:
            i = int(i)
            if i in (PAD, BOS, EOS):
                continue
            out.append(self.id_to_token[i])
        return out


def build_vocab(lines, min_count: int = 1) -> Vocabulary:
    """Frequency-sorted vocabulary; ties broken lexicographically."""
    counts: dict[str, int] = {}
    total = 0
    for line in lines:
        for w in line.split():
            counts[w] = counts.get(w, 0) + 1
            total += 1
    if total == 0:
        raise ValueError("empty corpus")
    kept = sorted((w for w, c in counts.items() if c >= min_count),
                  key=lambda w: (-counts[w], w))
    return Vocabulary(kept)


def read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def load_parallel(src_path, tgt_path) -> list[tuple[list[str], list[str]]]:
    src_lines = read_lines(src_path)
    tgt_lines = read_lines(tgt_path)
    if len(src_lines) != len(tgt_lines):
        raise ValueError(
            f"misaligned corpus: {src_path} has {len(src_lines)} lines, "
            f"{tgt_path} has {len(tgt_lines)}")
    return [(s.split(), t.split()) for s, t in zip(src_lines, tgt_lines)]


@dataclass
class TokenBatch:
    src: np.ndarray  # K x J_max int64
    tgt: np.ndarray  # K x I_max int64
    src_lengths: np.ndarray  # (K,), includes trailing EOS
    tgt_lengths: np.ndarray
    src_pad_mask: np.ndarray  # bool, True on PAD
    tgt_pad_mask: np.ndarray

    @property
    def size(self) -> int:
        return self.src.shape[0]

    def rows(self):
        """Yield (src_ids, tgt_ids) with padding stripped."""
        for k in range(self.size):
            yield (self.src[k, : self.src_lengths[k]],
                   self.tgt[k, : self.tgt_lengths[k]])


def encode_pair(pair, src_vocab: Vocabulary, tgt_vocab: Vocabulary):
    """Token ids with a trailing EOS on both sides (no BOS; the decoder
    shifts its own input)."""
    src_words, tgt_words = pair
    return (np.array(src_vocab.encode(src_words) + [EOS], dtype=np.int64),
            np.array(tgt_vocab.encode(tgt_words) + [EOS], dtype=np.int64))


def _pad_block(rows: list[np.ndarray]) -> np.ndarray:
    width = max(len(r) for r in rows)
    block = np.full((len(rows), width), PAD, dtype=np.int64)
    for i, r in enumerate(rows):
        block[i, : len(r)] = r
    return block


def make_batches(pairs, src_vocab: Vocabulary, tgt_vocab: Vocabulary, batch_size: int,
                 rng: np.random.Generator | None = None, sort_by_length: bool = False,
                 max_seq_len: int | None = None) -> list[TokenBatch]:
    """One epoch of batches. Shuffle order comes from `rng` (None = corpus
    order); padding is to the per-batch maximum."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    encoded = []
    for lineno, pair in enumerate(pairs, start=1):
        src_ids, tgt_ids = encode_pair(pair, src_vocab, tgt_vocab)
        if max_seq_len is not None and max(len(src_ids), len(tgt_ids)) > max_seq_len:
            raise ValueError(f"line {lineno} exceeds max_seq_len={max_seq_len}")
        encoded.append((src_ids, tgt_ids))
    order = np.arange(len(encoded))
    if rng is not None:
        rng.shuffle(order)
    if sort_by_length:
        order = order[np.argsort([len(encoded[i][1]) for i in order], kind="stable")]
    batches = []
    for start in range(0, len(encoded), batch_size):
        chunk = [encoded[i] for i in order[start:start + batch_size]]
        src = _pad_block([c[0] for c in chunk])
        tgt = _pad_block([c[1] for c in chunk])
        batches.append(TokenBatch(
            src=src, tgt=tgt,
            src_lengths=np.array([len(c[0]) for c in chunk]),
            tgt_lengths=np.array([len(c[1]) for c in chunk]),
            src_pad_mask=src == PAD,
            tgt_pad_mask=tgt == PAD,
        ))
    return batches


# -- synthetic tasks ---------------------------------------------------------

COPY, REVERSE, LEXICON = "copy", "reverse", "lexicon"


def synth_corpus(task: str, size: int, vocab_size: int, min_len: int, max_len: int,
                 seed: int, ambiguity: int = 2):
    """Generate `size` parallel sentence pairs.

    copy: target = source. reverse: target = reversed source.
    lexicon: each source symbol has `ambiguity` interchangeable target
    synonyms; one is picked per symbol per sentence (repeats within a
    sentence stay consistent, so context can disambiguate). Returns
    (pairs, synonym_table) where the table is None for copy/reverse.
    """
    if task not in (COPY, REVERSE, LEXICON):
        raise ValueError(f"unknown task {task!r}")
    if task == LEXICON and ambiguity < 1:
        raise ValueError("ambiguity must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0]))
    symbols = [f"s{i}" for i in range(vocab_size)]
    table = None
    if task == LEXICON:
        table = {s: [f"t{i}_{j}" for j in range(ambiguity)]
                 for i, s in enumerate(symbols)}
    pairs = []
    for _ in range(size):
        length = int(rng.integers(min_len, max_len + 1))
        src = [symbols[int(i)] for i in rng.integers(0, vocab_size, length)]
        if task == COPY:
            tgt = list(src)
        elif task == REVERSE:
            tgt = src[::-1]
        else:
            # first-occurrence order keeps rng draws deterministic
            choice = {s: table[s][int(rng.integers(0, ambiguity))]
                      for s in dict.fromkeys(src)}
            tgt = [choice[s] for s in src]
        pairs.append((src, tgt))
    return pairs, table


def write_parallel(pairs, src_path, tgt_path) -> None:
    with open(src_path, "w", encoding="utf-8") as fs, \
            open(tgt_path, "w", encoding="utf-8") as ft:
        for src, tgt in pairs:
            fs.write(" ".join(src) + "\n")
            ft.write(" ".join(tgt) + "\n")


def write_synonym_table(table: dict, path) -> None:
    Path(path).write_text(json.dumps(table, indent=2, sort_keys=True), encoding="utf-8")
