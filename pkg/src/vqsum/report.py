"""Figure rendering for the CLI report paths.

Every command that writes a CSV/JSON report also drops PNG figures next to
it: corpus overviews at ingest time, loss curves after training, grouped
metric bars after evaluation, and codebook usage for the extractor.
"""

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_corpus_overview(clips, path):
    """Histograms of words per utterance and utterances per clip."""
    words = [u.word_count for c in clips for u in c.utterances]
    per_clip = [len(c.utterances) for c in clips]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.hist(words, bins=30, color="#4878d0")
    ax1.set_xlabel("words per utterance")
    ax1.set_ylabel("count")
    ax2.hist(per_clip, bins=20, color="#ee854a")
    ax2.set_xlabel("utterances per clip")
    ax2.set_ylabel("clips")
    fig.suptitle(f"{len(clips)} clips, {len(words)} utterances")
    return _finish(fig, path)


def save_loss_curves(history, path):
    epochs = [row.epoch for row in history]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(epochs, [r.total for r in history], label="total", lw=2)
    ax1.plot(epochs, [r.xent for r in history], label="xent")
    ax1.plot(epochs, [r.dict_loss for r in history], label="dict")
    ax1.plot(epochs, [r.commit_loss for r in history], label="commit")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.legend(fontsize=8)
    ax2.plot(epochs, [r.lr_e for r in history], label="lr embedder")
    ax2.plot(epochs, [r.lr_r for r in history], label="lr rest")
    ax2b = ax2.twinx()
    ax2b.plot(epochs, [r.dead_code_fraction for r in history], color="gray", ls="--",
              label="dead codes")
    ax2b.set_ylabel("dead code fraction")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("learning rate")
    ax2.legend(fontsize=8, loc="upper left")
    return _finish(fig, path)


def save_code_usage(stats, excluded, path):
    counts = stats.counts
    colors = ["#d65f5f" if i in set(excluded) else "#4878d0" for i in range(len(counts))]
    fig, ax = plt.subplots(figsize=(9, 3.2))
    ax.bar(np.arange(len(counts)), counts, color=colors, width=1.0)
    ax.set_xlabel("latent code")
    ax.set_ylabel("assignments")
    ax.set_title("codebook usage (red = excluded as degenerate)")
    return _finish(fig, path)


def save_metric_bars(reports, path):
    """Grouped bars of headline metrics per system."""
    systems = sorted(reports)
    metrics = [
        ("prf_micro", "f1", "F1 (micro)"),
        ("rouge1", "f1", "ROUGE-1"),
        ("rouge2", "f1", "ROUGE-2"),
        ("rougeL", "f1", "ROUGE-L"),
    ]
    fig, ax = plt.subplots(figsize=(1.8 + 1.6 * len(systems), 3.6))
    width = 0.8 / len(metrics)
    x = np.arange(len(systems))
    for mi, (group, field, label) in enumerate(metrics):
        vals = [
            (reports[s].get(group) or {}).get(field, 0.0) or 0.0 for s in systems
        ]
        ax.bar(x + mi * width, vals, width=width, label=label)
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels(systems, rotation=15)
    ax.set_ylabel("score")
    ax.legend(fontsize=8)
    return _finish(fig, path)


def write_metrics_csv(reports, path):
    """Flat CSV companion to the metrics JSON."""
    columns = [
        "system",
        "clips_scored",
        "prf_micro_p", "prf_micro_r", "prf_micro_f1",
        "prf_macro_p", "prf_macro_r", "prf_macro_f1",
        "rouge1_f1", "rouge2_f1", "rougeL_f1",
        "avg_words",
    ]

    def _get(report, group, field):
        block = report.get(group)
        return f"{block[field]:.6f}" if block else ""

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for system in sorted(reports):
            r = reports[system]
            writer.writerow(
                [
                    system,
                    r.get("clips_scored", 0),
                    _get(r, "prf_micro", "precision"),
                    _get(r, "prf_micro", "recall"),
                    _get(r, "prf_micro", "f1"),
                    _get(r, "prf_macro", "precision"),
                    _get(r, "prf_macro", "recall"),
                    _get(r, "prf_macro", "f1"),
                    _get(r, "rouge1", "f1"),
                    _get(r, "rouge2", "f1"),
                    _get(r, "rougeL", "f1"),
                    f"{r.get('avg_words', 0.0):.2f}",
                ]
            )
