"""Two-level additive attention with coverage.

A section-level scorer turns contextualized section states into weights
beta; a word-level scorer scores every token, each raw word score is
multiplied by its section's beta, and one softmax jointly normalizes over
all real (section, position) pairs. The context vector is the resulting
convex combination of word states. Coverage is the exact running sum of
word weights from earlier steps and is fed back into the word-level scorer
only.

Note the scaling order: beta multiplies the raw score inside the softmax,
so a section with beta=0 still receives attention mass (exp(0)=1). That is
the defined behavior, preserved and tested rather than corrected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .numerics import Tensor


class AttentionScorer:
    """Additive scorer: v . tanh(W1 h + W2 s_prev [+ w_cov cov] + b).

    ``with_coverage`` adds a learned per-unit coverage input vector, zero-
    initialized so that switching coverage on mid-training starts as a
    no-op and the model grows into it.
    """

    def __init__(self, hidden: int, rng: np.random.Generator, prefix: str, with_coverage: bool = False):
        self.hidden = hidden
        self.prefix = prefix
        self.W1 = Tensor(rng.uniform(-0.1, 0.1, size=(hidden, hidden)), requires_grad=True)
        self.W2 = Tensor(rng.uniform(-0.1, 0.1, size=(hidden, hidden)), requires_grad=True)
        self.b = Tensor(np.zeros(hidden), requires_grad=True)
        self.v = Tensor(rng.uniform(-0.1, 0.1, size=hidden), requires_grad=True)
        self.w_cov = Tensor(np.zeros(hidden), requires_grad=True) if with_coverage else None

    def params(self) -> dict[str, Tensor]:
        out = {
            f"{self.prefix}.W1": self.W1,
            f"{self.prefix}.W2": self.W2,
            f"{self.prefix}.b": self.b,
            f"{self.prefix}.v": self.v,
        }
        if self.w_cov is not None:
            out[f"{self.prefix}.w_cov"] = self.w_cov
        return out

    def scores(self, states: Tensor, s_prev: Tensor, coverage: Tensor | None = None) -> Tensor:
        """Raw scores for a batch of state sequences.

        states (B, L, H), s_prev (B, H), coverage (B, L) or None ->
        (B, L). When ``coverage`` is None the coverage term is absent
        entirely, which keeps no-coverage runs bit-identical to a scorer
        built without one.
        """
        nb, length, hs = states.shape
        proj = (states.reshape(nb * length, hs) @ self.W1).reshape(nb, length, hs)
        query = (s_prev @ self.W2).reshape(nb, 1, hs)
        pre = proj + query + self.b
        if coverage is not None:
            if self.w_cov is None:
                raise ValueError("scorer built without a coverage input")
            pre = pre + coverage.reshape(nb, length, 1) * self.w_cov
        return (nm.tanh(pre) * self.v).sum(axis=2)

    def score_single(self, h, s_prev, cov: float | None = None) -> float:
        """Scalar convenience form over plain vectors (test/reference use)."""
        states = nm.constant(np.asarray(h, dtype=np.float64)[None, None, :])
        s = nm.constant(np.asarray(s_prev, dtype=np.float64)[None, :])
        c = None if cov is None else nm.constant(np.array([[cov]]))
        return float(self.scores(states, s, c).data[0, 0])


@dataclass
class AttentionState:
    """One decode step's attention read: weights, coverage used, context."""

    alpha: Tensor    # (B, S, L), joint distribution over all real tokens
    beta: Tensor     # (B, S), distribution over real sections
    coverage: Tensor # (B, S, L), running alpha sum from steps before this one
    context: Tensor  # (B, H)


def section_weights(scorer: AttentionScorer, section_states: Tensor, s_prev: Tensor, section_mask: np.ndarray) -> Tensor:
    """beta: softmax over real sections of the section-level scores."""
    raw = scorer.scores(section_states, s_prev)
    return nm.softmax_masked(raw, section_mask, axis=-1)


def word_weights(
    scorer: AttentionScorer,
    word_states: Tensor,
    beta: Tensor,
    s_prev: Tensor,
    word_mask: np.ndarray,
    coverage: Tensor | None = None,
) -> Tensor:
    """alpha: one softmax over every real (section, position) pair.

    Each raw word score is scaled by its section's beta before the joint
    normalization; there is no per-section renormalization, so per-section
    alpha mass generally differs from beta.
    """
    nb, ns, length, hs = word_states.shape
    flat_states = word_states.reshape(nb, ns * length, hs)
    flat_cov = coverage.reshape(nb, ns * length) if coverage is not None else None
    raw = scorer.scores(flat_states, s_prev, flat_cov)
    scaled = raw.reshape(nb, ns, length) * beta.reshape(nb, ns, 1)
    flat_mask = np.asarray(word_mask, dtype=bool).reshape(nb, ns * length)
    alpha = nm.softmax_masked(scaled.reshape(nb, ns * length), flat_mask, axis=-1)
    return alpha.reshape(nb, ns, length)


def context_vector(alpha: Tensor, word_states: Tensor) -> Tensor:
    """c_t = sum of alpha-weighted word states: (B, S, L) x (B, S, L, H) -> (B, H)."""
    nb, ns, length, hs = word_states.shape
    return nm.weighted_sum(alpha.reshape(nb, ns * length), word_states.reshape(nb, ns * length, hs))


def update_coverage(coverage: Tensor, alpha: Tensor) -> Tensor:
    """Elementwise running sum; gradient flows back through past steps."""
    return coverage + alpha


def initial_coverage(nb: int, ns: int, length: int) -> Tensor:
    """Zero matrix: the empty sum over no previous steps."""
    return nm.zeros((nb, ns, length))


class DualAttention:
    """Section scorer plus coverage-capable word scorer, run in sequence."""

    def __init__(self, hidden: int, rng: np.random.Generator):
        self.hidden = hidden
        self.word = AttentionScorer(hidden, rng, "attention.word", with_coverage=True)
        self.section = AttentionScorer(hidden, rng, "attention.section", with_coverage=False)

    def params(self) -> dict[str, Tensor]:
        return {**self.word.params(), **self.section.params()}

    def step(self, encoded, s_prev: Tensor, coverage: Tensor, use_coverage: bool) -> AttentionState:
        """One attention read against an encoded document batch.

        ``coverage`` is consumed only when ``use_coverage`` is set and only
        by the word-level scorer; the section level never sees it.
        """
        beta = section_weights(self.section, encoded.section_states, s_prev, encoded.section_mask)
        alpha = word_weights(
            self.word,
            encoded.word_states,
            beta,
            s_prev,
            encoded.word_mask,
            coverage if use_coverage else None,
        )
        ctx = context_vector(alpha, encoded.word_states)
        return AttentionState(alpha=alpha, beta=beta, coverage=coverage, context=ctx)
