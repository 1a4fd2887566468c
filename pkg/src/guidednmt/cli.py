"""Command-line entry points: train, decode, evaluate, gradcheck, synth,
report.

Exit codes: 0 success, 1 runtime failure, 2 configuration error. The
GUIDEDNMT_OUTPUT_DIR environment variable overrides the configured output
directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .config import ConfigError, load_config_file, resolve_config
from .data import (
    LEXICON,
    Vocabulary,
    build_vocab,
    load_parallel,
    read_lines,
    synth_corpus,
    write_parallel,
    write_synonym_table,
)
from .decoding import beam_decode, greedy_decode
from .gradcheck import DEFAULT_TOLERANCE, run_gradcheck
from .metrics import (
    MetricReport,
    bleu,
    compare_modules_teacher_forced,
    embedding_cosine,
    ngram_accuracy,
)
from .model import EOS, UNK
from .trainer import Trainer

OUTPUT_DIR_ENV = "GUIDEDNMT_OUTPUT_DIR"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="guidednmt")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("config")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override a config entry")
    p.add_argument("--output-dir", default=None)

    p = sub.add_parser("decode", help="translate a file with a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("input")
    p.add_argument("--beam", type=int, default=1)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--length-penalty", type=float, default=1.0)

    p = sub.add_parser("evaluate", help="score a checkpoint on a test set")
    p.add_argument("checkpoint")
    p.add_argument("src")
    p.add_argument("ref")
    p.add_argument("--compare-modules", action="store_true")
    p.add_argument("--beam", type=int, default=1)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--json", dest="json_out", default=None,
                   help="also write the report to this file")

    p = sub.add_parser("gradcheck", help="finite-difference check of all loss paths")
    p.add_argument("--size", choices=["tiny"], default="tiny")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("synth", help="generate a synthetic parallel corpus")
    p.add_argument("--task", choices=["copy", "reverse", "lexicon"], required=True)
    p.add_argument("--size", type=int, default=2000)
    p.add_argument("--valid-size", type=int, default=200)
    p.add_argument("--test-size", type=int, default=200)
    p.add_argument("--vocab", type=int, default=20)
    p.add_argument("--min-len", type=int, default=3)
    p.add_argument("--max-len", type=int, default=12)
    p.add_argument("--ambiguity", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="render figures + CSV from a metrics log")
    p.add_argument("run_dir", help="training output dir (or a metrics.jsonl path)")
    p.add_argument("--out", default=None)

    return parser


def _require_file(path, what: str) -> Path:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{what} not found: {path}")
    return path


def cmd_train(args) -> int:
    values = load_config_file(args.config)
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        try:
            overrides[key.strip()] = json.loads(value.strip())
        except json.JSONDecodeError:
            overrides[key.strip()] = value.strip()
    exp = resolve_config(values, overrides)

    out_dir = (args.output_dir or os.environ.get(OUTPUT_DIR_ENV)
               or exp.paths.get("output_dir"))
    if not out_dir:
        raise ConfigError("paths.output_dir is required (or --output-dir)")
    for key in ("train_src", "train_tgt", "valid_src", "valid_tgt"):
        if key not in exp.paths:
            raise ConfigError(f"paths.{key} is required")
        _require_file(exp.paths[key], f"paths.{key}")

    train_pairs = load_parallel(exp.paths["train_src"], exp.paths["train_tgt"])
    valid_pairs = load_parallel(exp.paths["valid_src"], exp.paths["valid_tgt"])
    src_vocab = build_vocab(read_lines(exp.paths["train_src"]), exp.min_count)
    tgt_vocab = build_vocab(read_lines(exp.paths["train_tgt"]), exp.min_count)
    cfg = exp.model_config(len(src_vocab), len(tgt_vocab))

    resolved = exp.to_dict()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(
        json.dumps(resolved, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    trainer = Trainer(cfg, exp.schedule, seed=exp.seed,
                      guidance_variant=exp.guidance_variant, ablation=exp.ablation,
                      literal_paper_sign=exp.literal_paper_sign)
    records = trainer.train(train_pairs, valid_pairs, src_vocab, tgt_vocab, out_dir,
                            sample_size=exp.sample_size,
                            extra_header={"experiment": resolved})
    last = records[-1]
    print(f"trained {len(records)} epochs; final valid BLEU {last['valid_bleu']:.2f}, "
          f"token accuracy {last['token_acc']:.4f}")
    print(f"artifacts in {out_dir}")
    return 0


def _decode_corpus(model, src_vocab: Vocabulary, tgt_vocab: Vocabulary, lines,
                   beam: int, max_len: int, length_penalty: float):
    unk_count = 0
    outputs = []
    for line in lines:
        words = line.split()
        ids = src_vocab.encode(words)
        unk_count += sum(1 for w, i in zip(words, ids) if i == UNK and w != "<unk>")
        src_ids = np.array(ids + [EOS], dtype=np.int64)
        if beam == 1:
            result = greedy_decode(model, src_ids, max_len)
        else:
            result = beam_decode(model, src_ids, beam, max_len, length_penalty)
        outputs.append(" ".join(tgt_vocab.decode(result.tokens)))
    return outputs, unk_count


def cmd_decode(args) -> int:
    _require_file(args.checkpoint, "checkpoint")
    _require_file(args.input, "input file")
    model, _, src_tokens, tgt_tokens, _ = load_checkpoint(args.checkpoint)
    src_vocab = Vocabulary(src_tokens)
    tgt_vocab = Vocabulary(tgt_tokens)
    if args.beam < 1:
        raise ConfigError("--beam must be >= 1")
    max_len = args.max_len or model.cfg.max_seq_len
    lines = read_lines(args.input)
    outputs, unk_count = _decode_corpus(
        model, src_vocab, tgt_vocab, lines, args.beam, max_len, args.length_penalty)
    if unk_count:
        print(f"warning: {unk_count} out-of-vocabulary tokens mapped to <unk>",
              file=sys.stderr)
    for line in outputs:
        print(line)
    return 0


def cmd_evaluate(args) -> int:
    _require_file(args.checkpoint, "checkpoint")
    src_lines = read_lines(_require_file(args.src, "test source"))
    ref_lines = read_lines(_require_file(args.ref, "test reference"))
    if len(src_lines) != len(ref_lines):
        raise ConfigError(
            f"misaligned test files: {len(src_lines)} source lines vs "
            f"{len(ref_lines)} references")
    model, eval_head, src_tokens, tgt_tokens, extra = load_checkpoint(args.checkpoint)
    if args.compare_modules and eval_head is None:
        raise ConfigError("--compare-modules needs a checkpoint with an evaluation head")
    src_vocab = Vocabulary(src_tokens)
    tgt_vocab = Vocabulary(tgt_tokens)
    max_len = args.max_len or model.cfg.max_seq_len

    hyps, _ = _decode_corpus(model, src_vocab, tgt_vocab, src_lines,
                             args.beam, max_len, 1.0)
    hyp_tokens = [h.split() for h in hyps]
    ref_tokens = [r.split() for r in ref_lines]
    report = MetricReport(
        bleu=bleu(hyp_tokens, ref_tokens),
        ngram_accuracy={n: ngram_accuracy(hyp_tokens, ref_tokens, n)
                        for n in range(1, 5)},
        cosine_similarity=embedding_cosine(
            hyp_tokens, ref_tokens, model.tgt_embed.data, tgt_vocab),
    )
    out = report.to_dict()
    if args.compare_modules:
        pairs = [(s.split(), r.split()) for s, r in zip(src_lines, ref_lines)]
        compared = compare_modules_teacher_forced(
            model, eval_head, pairs, src_vocab, tgt_vocab)
        out["eval_module_bleu"] = compared.eval_module_bleu
        out["perplexities"] = compared.perplexities
    out["provenance"] = {"checkpoint": str(args.checkpoint), "experiment": extra}
    text = json.dumps(out, indent=2, sort_keys=True)
    print(text)
    if args.json_out:
        Path(args.json_out).write_text(text + "\n", encoding="utf-8")
    return 0


def cmd_gradcheck(args) -> int:
    start = time.monotonic()
    errors = run_gradcheck(seed=args.seed)
    failed = []
    for name, err in errors.items():
        status = "PASS" if err <= DEFAULT_TOLERANCE else "FAIL"
        print(f"{name:6s} max relative error {err:.3e}  {status}")
        if status == "FAIL":
            failed.append(name)
    print(f"elapsed {time.monotonic() - start:.1f}s")
    if failed:
        print(f"gradient check failed for: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_synth(args) -> int:
    if args.min_len < 1 or args.max_len < args.min_len:
        raise ConfigError("need 1 <= min-len <= max-len")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    splits = (("train", args.size, 0), ("valid", args.valid_size, 1),
              ("test", args.test_size, 2))
    table = None
    for split, size, offset in splits:
        pairs, table = synth_corpus(
            args.task, size, args.vocab, args.min_len, args.max_len,
            seed=args.seed * 1000 + offset, ambiguity=args.ambiguity)
        write_parallel(pairs, out / f"{args.task}.{split}.src",
                       out / f"{args.task}.{split}.tgt")
    if args.task == LEXICON and table is not None:
        write_synonym_table(table, out / "synonyms.json")
    print(f"wrote {args.task} corpus to {out}")
    return 0


def cmd_report(args) -> int:
    from .report import render_report

    run_dir = Path(args.run_dir)
    metrics_path = run_dir if run_dir.is_file() else run_dir / "metrics.jsonl"
    _require_file(metrics_path, "metrics log")
    out_dir = Path(args.out) if args.out else metrics_path.parent
    for path in render_report(metrics_path, out_dir):
        print(f"wrote {path}")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "decode": cmd_decode,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
    "synth": cmd_synth,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
