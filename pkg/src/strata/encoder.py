"""Hierarchical document encoder.

One shared bidirectional LSTM reads each section's token embeddings; a
feed-forward combiner merges the two directions into per-word states and a
per-section summary. A second bidirectional LSTM runs over the section
summaries, giving contextualized section states and, from its final states,
a single document vector. Sequences of unequal length are handled by mask
gating: at a padded step the recurrent state is carried through unchanged,
and padded output positions are zeroed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .numerics import Tensor


class EmbeddingTable:
    """Token embedding matrix (vocab, dim). Row 0 is the PAD row: it is
    initialized to zeros and its gradient must be discarded before every
    optimizer step (see ``zero_pad_grad``)."""

    def __init__(self, vocab_size: int, dim: int, rng: np.random.Generator):
        w = rng.uniform(-0.1, 0.1, size=(vocab_size, dim))
        w[0] = 0.0
        self.table = Tensor(w, requires_grad=True)
        self.dim = dim

    def lookup(self, ids) -> Tensor:
        return nm.embedding_lookup(self.table, ids)

    def params(self) -> dict[str, Tensor]:
        return {"embedding.table": self.table}

    def zero_pad_grad(self):
        if self.table.grad is not None:
            self.table.grad[0] = 0.0


class LstmCell:
    """Single LSTM cell, gates packed [input, forget, output, candidate].

    No peephole connections. Forget-gate bias starts at 1.0 so early
    training does not erase state; other biases start at zero and weight
    matrices at uniform(-0.1, 0.1).
    """

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator, prefix: str):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.prefix = prefix
        self.Wx = Tensor(rng.uniform(-0.1, 0.1, size=(input_size, 4 * hidden_size)), requires_grad=True)
        self.Wh = Tensor(rng.uniform(-0.1, 0.1, size=(hidden_size, 4 * hidden_size)), requires_grad=True)
        b = np.zeros(4 * hidden_size)
        b[hidden_size : 2 * hidden_size] = 1.0
        self.b = Tensor(b, requires_grad=True)

    def params(self) -> dict[str, Tensor]:
        return {f"{self.prefix}.Wx": self.Wx, f"{self.prefix}.Wh": self.Wh, f"{self.prefix}.b": self.b}

    def step(self, x: Tensor, h: Tensor, c: Tensor, mask=None):
        """One step over a batch: x (B, I), h/c (B, H) -> new (h, c).

        ``mask`` is a float column (B, 1); where it is 0 the previous state
        is carried through unchanged, which is what makes right-padded
        batches equivalent to per-sequence loops.
        """
        hs = self.hidden_size
        z = x @ self.Wx + h @ self.Wh + self.b
        i = nm.sigmoid(z[:, :hs])
        f = nm.sigmoid(z[:, hs : 2 * hs])
        o = nm.sigmoid(z[:, 2 * hs : 3 * hs])
        g = nm.tanh(z[:, 3 * hs :])
        c_new = f * c + i * g
        h_new = o * nm.tanh(c_new)
        if mask is not None:
            m = nm.constant(mask)
            keep = nm.constant(1.0 - mask)
            h_new = m * h_new + keep * h
            c_new = m * c_new + keep * c
        return h_new, c_new


class StateCombiner:
    """relu(W [fwd; bwd] + b): merges the two LSTM directions into one state."""

    def __init__(self, hidden_size: int, rng: np.random.Generator, prefix: str):
        self.prefix = prefix
        self.W = Tensor(rng.uniform(-0.1, 0.1, size=(2 * hidden_size, hidden_size)), requires_grad=True)
        self.b = Tensor(np.zeros(hidden_size), requires_grad=True)

    def params(self) -> dict[str, Tensor]:
        return {f"{self.prefix}.W": self.W, f"{self.prefix}.b": self.b}

    def __call__(self, fwd: Tensor, bwd: Tensor) -> Tensor:
        return nm.relu(nm.concat([fwd, bwd], axis=1) @ self.W + self.b)


def run_bilstm(fwd: LstmCell, bwd: LstmCell, inputs: Tensor, mask: np.ndarray):
    """Both directions over a right-padded batch.

    inputs (B, L, I), mask (B, L) boolean. Returns per-position states
    (B, L, H) for each direction with padded positions zeroed, plus the
    final state of each direction ((B, H); forward's is the state at each
    row's last real token, backward's at its first).
    """
    nb, length, _ = inputs.shape
    hs = fwd.hidden_size
    m = mask.astype(np.float64)
    h_f = nm.zeros((nb, hs))
    c_f = nm.zeros((nb, hs))
    fwd_steps = []
    for t in range(length):
        h_f, c_f = fwd.step(inputs[:, t, :], h_f, c_f, m[:, t : t + 1])
        fwd_steps.append(nm.constant(m[:, t : t + 1]) * h_f)
    h_b = nm.zeros((nb, hs))
    c_b = nm.zeros((nb, hs))
    bwd_steps = [None] * length
    for t in reversed(range(length)):
        h_b, c_b = bwd.step(inputs[:, t, :], h_b, c_b, m[:, t : t + 1])
        bwd_steps[t] = nm.constant(m[:, t : t + 1]) * h_b
    stack = lambda steps: nm.concat([s.reshape(nb, 1, hs) for s in steps], axis=1)
    return stack(fwd_steps), stack(bwd_steps), h_f, h_b


@dataclass
class EncodedDocument:
    """Everything attention and decoding need, batch-first.

    word_states (B, S, L, H) and section_states (B, S, H) are zero at any
    masked position; doc_vector is (B, H).
    """

    word_states: Tensor
    section_states: Tensor
    doc_vector: Tensor
    word_mask: np.ndarray     # (B, S, L) bool
    section_mask: np.ndarray  # (B, S) bool


class HierarchicalEncoder:
    def __init__(self, embedding: EmbeddingTable, hidden_size: int, rng: np.random.Generator):
        self.embedding = embedding
        self.hidden_size = hidden_size
        self.word_fwd = LstmCell(embedding.dim, hidden_size, rng, "encoder.word_fwd")
        self.word_bwd = LstmCell(embedding.dim, hidden_size, rng, "encoder.word_bwd")
        self.word_comb = StateCombiner(hidden_size, rng, "encoder.word_comb")
        self.sec_fwd = LstmCell(hidden_size, hidden_size, rng, "encoder.sec_fwd")
        self.sec_bwd = LstmCell(hidden_size, hidden_size, rng, "encoder.sec_bwd")
        self.sec_comb = StateCombiner(hidden_size, rng, "encoder.sec_comb")

    def params(self) -> dict[str, Tensor]:
        out = {}
        for part in (self.word_fwd, self.word_bwd, self.word_comb, self.sec_fwd, self.sec_bwd, self.sec_comb):
            out.update(part.params())
        return out

    def _combine_positions(self, comb: StateCombiner, fwd: Tensor, bwd: Tensor, mask: np.ndarray) -> Tensor:
        nb, length, hs = fwd.shape
        merged = comb(fwd.reshape(nb * length, hs), bwd.reshape(nb * length, hs))
        merged = merged.reshape(nb, length, hs)
        return merged * nm.constant(mask[:, :, None].astype(np.float64))

    def encode_section(self, ids: np.ndarray, mask: np.ndarray):
        """One section alone: ids/mask (M,) -> (word states (M, H), summary (H,)).

        Raises:
            ValueError: if the mask marks no real token.
        """
        if not np.asarray(mask, dtype=bool).any():
            raise ValueError("empty section: mask marks no tokens")
        ids = np.asarray(ids, dtype=np.int64)[None, :]
        mask = np.asarray(mask, dtype=bool)[None, :]
        emb = self.embedding.lookup(ids)
        fwd_s, bwd_s, fwd_fin, bwd_fin = run_bilstm(self.word_fwd, self.word_bwd, emb, mask)
        words = self._combine_positions(self.word_comb, fwd_s, bwd_s, mask)
        summary = self.word_comb(fwd_fin, bwd_fin)
        return words[0], summary[0]

    def encode_batch(self, ids: np.ndarray, word_mask: np.ndarray, section_mask: np.ndarray) -> EncodedDocument:
        """Full hierarchy over a batch: ids (B, S, L) -> EncodedDocument.

        Fully padded sections (rows of word_mask that are all False) are
        legal here; their summaries are gated out of the section LSTM.
        """
        ids = np.asarray(ids, dtype=np.int64)
        word_mask = np.asarray(word_mask, dtype=bool)
        section_mask = np.asarray(section_mask, dtype=bool)
        nb, ns, length = ids.shape
        hs = self.hidden_size
        flat_ids = ids.reshape(nb * ns, length)
        flat_mask = word_mask.reshape(nb * ns, length)
        emb = self.embedding.lookup(flat_ids)
        fwd_s, bwd_s, fwd_fin, bwd_fin = run_bilstm(self.word_fwd, self.word_bwd, emb, flat_mask)
        words = self._combine_positions(self.word_comb, fwd_s, bwd_s, flat_mask)
        summaries = self.word_comb(fwd_fin, bwd_fin).reshape(nb, ns, hs)
        sec_f, sec_b, sec_ffin, sec_bfin = run_bilstm(self.sec_fwd, self.sec_bwd, summaries, section_mask)
        section_states = self._combine_positions(self.sec_comb, sec_f, sec_b, section_mask)
        doc_vector = self.sec_comb(sec_ffin, sec_bfin)
        return EncodedDocument(
            word_states=words.reshape(nb, ns, length, hs),
            section_states=section_states,
            doc_vector=doc_vector,
            word_mask=word_mask,
            section_mask=section_mask,
        )

    def encode_document(self, ids: np.ndarray, word_mask: np.ndarray) -> EncodedDocument:
        """Single document: ids/word_mask (S, L), every section real."""
        ids = np.asarray(ids, dtype=np.int64)
        ns = ids.shape[0]
        if ns < 1:
            raise ValueError("document has no sections")
        return self.encode_batch(ids[None], np.asarray(word_mask, dtype=bool)[None], np.ones((1, ns), dtype=bool))
