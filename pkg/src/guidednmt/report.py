"""Render training-curve figures and a delimited table from a metrics log."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_COLUMNS = ["epoch", "phase", "L_t", "L_e", "L_guidance", "L_total",
            "valid_bleu", "train_sample_bleu", "token_acc",
            "train_token_acc", "sample_gen_prob"]


def load_metrics(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    if not records:
        raise ValueError(f"empty metrics log: {path}")
    return records


def write_metrics_csv(records: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for rec in records:
            writer.writerow({k: rec.get(k, "") for k in _COLUMNS})


def _switch_epoch(records: list[dict]) -> int | None:
    for rec in records:
        if rec.get("phase") == "FINETUNE":
            return rec["epoch"]
    return None


def plot_loss_curves(records: list[dict], path) -> None:
    epochs = [r["epoch"] for r in records]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(epochs, [r["L_total"] for r in records], label="total loss", lw=2)
    ax.plot(epochs, [r["L_t"] for r in records], label="translation loss", ls="--")
    if any("L_e" in r for r in records):
        ax.plot(epochs, [r.get("L_e", float("nan")) for r in records],
                label="evaluation loss", ls="--")
    if any(r.get("L_guidance") for r in records):
        ax.plot(epochs, [r.get("L_guidance", float("nan")) for r in records],
                label="guidance loss", ls=":")
    sw = _switch_epoch(records)
    if sw is not None:
        ax.axvline(sw - 0.5, color="gray", ls=":", label="guidance switched on")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_bleu_curves(records: list[dict], path) -> None:
    epochs = [r["epoch"] for r in records]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(epochs, [r["valid_bleu"] for r in records], label="valid BLEU", lw=2)
    ax.plot(epochs, [r["train_sample_bleu"] for r in records],
            label="train-sample BLEU (teacher-forced)", ls="--")
    ax2 = ax.twinx()
    ax2.plot(epochs, [r["token_acc"] for r in records], color="tab:green",
             label="valid token accuracy", alpha=0.6)
    ax2.set_ylabel("token accuracy")
    sw = _switch_epoch(records)
    if sw is not None:
        ax.axvline(sw - 0.5, color="gray", ls=":")
    ax.set_xlabel("epoch")
    ax.set_ylabel("BLEU")
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_report(metrics_path, out_dir) -> list[Path]:
    """metrics.jsonl -> metrics.csv + loss/BLEU figures; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = load_metrics(metrics_path)
    outputs = [out_dir / "metrics.csv", out_dir / "loss_curves.png",
               out_dir / "bleu_curves.png"]
    write_metrics_csv(records, outputs[0])
    plot_loss_curves(records, outputs[1])
    plot_bleu_curves(records, outputs[2])
    return outputs
