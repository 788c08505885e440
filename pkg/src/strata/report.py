"""Report artifacts: delimited tables plus rendered figures.

Every reporting path writes a machine-readable table (TSV) and a PNG
figure next to it, so runs can be inspected without rerunning anything.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .rouge import METRICS, RougeScore, format_report  # noqa: E402


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def read_metrics(metrics_path):
    """Parse headerless step/epoch/loss/coverage_on metrics lines."""
    steps, losses, coverage = [], [], []
    with open(metrics_path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            step, _epoch, loss, coverage_on = line.rstrip("\n").split("\t")
            steps.append(int(step))
            losses.append(float(loss))
            coverage.append(coverage_on == "1")
    return steps, losses, coverage


def write_loss_curve(metrics_path, png_path) -> str:
    """Render loss vs. step, shading the span where coverage was active."""
    steps, losses, coverage = read_metrics(metrics_path)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(steps, losses, lw=1.0, color="tab:blue")
    covered = [s for s, on in zip(steps, coverage) if on]
    if covered:
        ax.axvspan(min(covered), max(covered), color="tab:orange", alpha=0.15, label="coverage on")
        ax.legend(loc="upper right")
    ax.set_xlabel("step")
    ax.set_ylabel("mean NLL per token")
    ax.set_title("training loss")
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return png_path


def write_scores_tsv(scores: dict[str, RougeScore], path) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("metric\tprecision\trecall\tf1\n")
        for metric in METRICS:
            s = scores[metric]
            fh.write(f"{metric}\t{s.precision:.17g}\t{s.recall:.17g}\t{s.f1:.17g}\n")
    return path


def write_score_figure(scores: dict[str, RougeScore], png_path) -> str:
    fig, ax = plt.subplots(figsize=(5, 4))
    labels = [m.upper().replace("ROUGE-", "RG-") for m in METRICS]
    values = [scores[m].f1 * 100 for m in METRICS]
    ax.bar(labels, values, color="tab:blue")
    ax.set_ylabel("F1 (%)")
    ax.set_ylim(0, max(values + [1.0]) * 1.15)
    ax.set_title("summary quality")
    for x, v in enumerate(values):
        ax.text(x, v, f"{v:.2f}", ha="center", va="bottom", fontsize=9)
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return png_path


def write_evaluation_report(scores: dict[str, RougeScore], report_dir) -> dict[str, str]:
    """report.txt + scores.tsv + a bar figure, all under report_dir."""
    _ensure_dir(report_dir)
    text_path = os.path.join(report_dir, "report.txt")
    with open(text_path, "w", encoding="utf-8") as fh:
        fh.write(format_report(scores))
    return {
        "report": text_path,
        "scores": write_scores_tsv(scores, os.path.join(report_dir, "scores.tsv")),
        "figure": write_score_figure(scores, os.path.join(report_dir, "rouge_f1.png")),
    }


def write_preprocess_report(split_counts: dict[str, int], doc_lengths, abstract_lengths, report_dir) -> dict[str, str]:
    """Corpus statistics table plus a token-length histogram figure."""
    _ensure_dir(report_dir)
    n_docs = len(doc_lengths)
    stats = {
        "documents": n_docs,
        **{f"{name}_documents": count for name, count in sorted(split_counts.items())},
        "avg_document_tokens": (sum(doc_lengths) / n_docs) if n_docs else 0.0,
        "avg_summary_tokens": (sum(abstract_lengths) / n_docs) if n_docs else 0.0,
    }
    stats_path = os.path.join(report_dir, "stats.tsv")
    with open(stats_path, "w", encoding="utf-8") as fh:
        fh.write("statistic\tvalue\n")
        for key, value in stats.items():
            rendered = f"{value:.17g}" if isinstance(value, float) else str(value)
            fh.write(f"{key}\t{rendered}\n")

    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    for ax, lengths, title in zip(axes, (doc_lengths, abstract_lengths), ("documents", "summaries")):
        if len(lengths):
            ax.hist(lengths, bins=min(30, max(5, len(set(lengths)))), color="tab:blue")
        ax.set_title(f"{title}: tokens")
        ax.set_xlabel("tokens")
        ax.set_ylabel("count")
    fig.tight_layout()
    png_path = os.path.join(report_dir, "length_histogram.png")
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return {"stats": stats_path, "figure": png_path}
