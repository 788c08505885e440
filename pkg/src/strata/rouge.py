"""N-gram and longest-common-subsequence summary scoring.

Scores are computed on whole summaries (no length cap) against a single
reference, using the same lowercase tokenization as the rest of the
pipeline; no stemming or stopword removal. The corpus-level score is the
arithmetic mean of the per-document precision, recall, and F1 — averaging
F1 directly, not recomputing it from averaged P/R, since the convention
changes results in the third decimal.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

METRICS = ("rouge-1", "rouge-2", "rouge-3", "rouge-l")
_LABELS = {"rouge-1": "RG-1", "rouge-2": "RG-2", "rouge-3": "RG-3", "rouge-l": "RG-L"}


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, match: float, candidate_total: float, reference_total: float) -> "RougeScore":
        p = match / candidate_total if candidate_total > 0 else 0.0
        r = match / reference_total if reference_total > 0 else 0.0
        f1 = 0.0 if p + r == 0 else 2.0 * p * r / (p + r)
        return cls(p, r, f1)


def _ngram_counts(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate, reference, n: int) -> RougeScore:
    """Clipped n-gram overlap: each candidate n-gram matches at most as
    many times as it occurs in the reference. Sequences shorter than n
    contribute no n-grams, giving a zero score rather than an error."""
    if n < 1:
        raise ValueError("n must be at least 1")
    cand = _ngram_counts(candidate, n)
    ref = _ngram_counts(reference, n)
    match = sum(min(count, ref[gram]) for gram, count in cand.items())
    return RougeScore.from_counts(
        match,
        max(len(candidate) - n + 1, 0),
        max(len(reference) - n + 1, 0),
    )


def lcs_length(a, b) -> int:
    """Longest common subsequence by row-rolling dynamic programming."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        row = [0]
        for j, y in enumerate(b, start=1):
            row.append(prev[j - 1] + 1 if x == y else max(row[j - 1], prev[j]))
        prev = row
    return prev[-1]


def rouge_l(candidate, reference) -> RougeScore:
    """Longest-common-subsequence score; empty inputs give zeros."""
    return RougeScore.from_counts(lcs_length(candidate, reference), len(candidate), len(reference))


def score_pair(candidate, reference) -> dict[str, RougeScore]:
    out = {f"rouge-{n}": rouge_n(candidate, reference, n) for n in (1, 2, 3)}
    out["rouge-l"] = rouge_l(candidate, reference)
    return out


def corpus_scores(candidates, references) -> dict[str, RougeScore]:
    """Mean per-document precision/recall/F1 over aligned summary pairs."""
    candidates = list(candidates)
    references = list(references)
    if len(candidates) != len(references):
        raise ValueError(
            f"candidate/reference count mismatch: {len(candidates)} vs {len(references)}"
        )
    if not candidates:
        raise ValueError("no summary pairs to score")
    per_doc = [score_pair(c, r) for c, r in zip(candidates, references)]
    n_docs = len(per_doc)
    return {
        m: RougeScore(
            sum(d[m].precision for d in per_doc) / n_docs,
            sum(d[m].recall for d in per_doc) / n_docs,
            sum(d[m].f1 for d in per_doc) / n_docs,
        )
        for m in METRICS
    }


def format_report(scores: dict[str, RougeScore]) -> str:
    """Text table of F1 per metric, as percentages with two decimals."""
    width = max(len(lab) for lab in _LABELS.values())
    lines = ["metric  F1"]
    for metric in METRICS:
        lines.append(f"{_LABELS[metric]:<{width}}  {scores[metric].f1 * 100:.2f}")
    return "\n".join(lines) + "\n"
