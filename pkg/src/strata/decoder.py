"""Attentive decoder with a copy/generate mixture output layer.

One decode step runs a fixed pipeline: embed the previous output token
(copied out-of-vocabulary tokens fall back to the UNK embedding), read the
document with two-level attention queried by the PREVIOUS decoder state,
feed [embedding; fresh context] to the decoder LSTM, then form the output
distribution: a masked vocabulary softmax, a copy distribution that
scatter-adds attention weights onto extended ids, and a learned switch
mixing the two. The initial state maps the document vector through a tanh
linear layer; the initial context and coverage are zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .attention import AttentionState, DualAttention, update_coverage
from .corpus import PAD, START, UNK
from .encoder import EmbeddingTable, EncodedDocument, LstmCell
from .numerics import Tensor


class OutputProjection:
    """Vocabulary head: softmax(V . linear(s_t, c_t)) with id masking."""

    def __init__(self, vocab_size: int, hidden: int, rng: np.random.Generator, mix_width: int | None = None):
        width = hidden if mix_width is None else mix_width
        self.vocab_size = vocab_size
        self.Ws = Tensor(rng.uniform(-0.1, 0.1, size=(hidden, width)), requires_grad=True)
        self.Wc = Tensor(rng.uniform(-0.1, 0.1, size=(hidden, width)), requires_grad=True)
        self.b = Tensor(np.zeros(width), requires_grad=True)
        self.V = Tensor(rng.uniform(-0.1, 0.1, size=(vocab_size, width)), requires_grad=True)

    def params(self) -> dict[str, Tensor]:
        return {"output.Ws": self.Ws, "output.Wc": self.Wc, "output.b": self.b, "output.V": self.V}


class CopySwitch:
    """p(copy) = sigmoid(w . [s_t; c_t; x_t] + b)."""

    def __init__(self, hidden: int, embedding_dim: int, rng: np.random.Generator):
        self.w = Tensor(rng.uniform(-0.1, 0.1, size=(2 * hidden + embedding_dim, 1)), requires_grad=True)
        self.b = Tensor(np.zeros(1), requires_grad=True)

    def params(self) -> dict[str, Tensor]:
        return {"switch.w": self.w, "switch.b": self.b}


def generation_distribution(proj: OutputProjection, s_t: Tensor, c_t: Tensor, forbid=(PAD,)) -> Tensor:
    """Distribution over the base vocabulary; ``forbid`` ids get exact 0.

    PAD is always forbidden; inference additionally forbids START.
    """
    mix = s_t @ proj.Ws + c_t @ proj.Wc + proj.b
    logits = mix @ nm.transpose(proj.V)
    allowed = np.ones(proj.vocab_size, dtype=bool)
    for idx in forbid:
        allowed[idx] = False
    return nm.softmax_masked(logits, allowed, axis=-1)


def switch_probability(switch: CopySwitch, s_t: Tensor, c_t: Tensor, x_t: Tensor) -> Tensor:
    """(B, 1) probability that this step copies from the source."""
    return nm.sigmoid(nm.concat([s_t, c_t, x_t], axis=1) @ switch.w + switch.b)


def copy_distribution(alpha: Tensor, extended_ids: np.ndarray, extended_size: int) -> Tensor:
    """Attention mass routed to extended token ids: (B, S, L) -> (B, X).

    A token occurring at several source positions receives the sum of
    their attention weights.
    """
    nb = alpha.shape[0]
    flat = alpha.reshape(nb, -1)
    ids = np.asarray(extended_ids, dtype=np.int64).reshape(nb, -1)
    return nm.scatter_sum(flat, ids, extended_size)


def mix_distributions(p_gen: Tensor, p_copy: Tensor, p_switch: Tensor) -> Tensor:
    """(1 - p_switch) . [p_gen; 0] + p_switch . p_copy over extended ids.

    A token present in both the vocabulary and the source receives mass
    from both branches.
    """
    nb, base = p_gen.shape
    ext = p_copy.shape[1]
    gen_part = p_gen * (1.0 - p_switch)
    if ext > base:
        gen_part = nm.concat([gen_part, nm.zeros((nb, ext - base))], axis=1)
    elif ext != base:
        raise ValueError("extended size smaller than base vocabulary")
    return gen_part + p_copy * p_switch


@dataclass
class DecoderStepState:
    """Decoder snapshot after a step (or the initial one before any step)."""

    hidden: Tensor            # (B, H) LSTM hidden s_t
    cell: Tensor              # (B, H) LSTM cell
    context: Tensor           # (B, H); zero vector before the first step
    coverage: Tensor          # (B, S, L) running sum of alpha over past steps
    y_prev: np.ndarray        # (B,) extended-space ids fed to the next step
    attention: AttentionState | None = None


class SummaryDecoder:
    """Owns the decoder LSTM, init projection, output head, and switch."""

    def __init__(
        self,
        embedding: EmbeddingTable,
        attention: DualAttention,
        vocab_size: int,
        hidden: int,
        rng: np.random.Generator,
        mix_width: int | None = None,
    ):
        self.embedding = embedding
        self.attention = attention
        self.vocab_size = vocab_size
        self.hidden = hidden
        self.cell = LstmCell(embedding.dim + hidden, hidden, rng, "decoder.lstm")
        self.init_Wh = Tensor(rng.uniform(-0.1, 0.1, size=(hidden, hidden)), requires_grad=True)
        self.init_bh = Tensor(np.zeros(hidden), requires_grad=True)
        self.init_Wc = Tensor(rng.uniform(-0.1, 0.1, size=(hidden, hidden)), requires_grad=True)
        self.init_bc = Tensor(np.zeros(hidden), requires_grad=True)
        self.output = OutputProjection(vocab_size, hidden, rng, mix_width)
        self.switch = CopySwitch(hidden, embedding.dim, rng)

    def params(self) -> dict[str, Tensor]:
        out = dict(self.cell.params())
        out.update(
            {
                "decoder.init_Wh": self.init_Wh,
                "decoder.init_bh": self.init_bh,
                "decoder.init_Wc": self.init_Wc,
                "decoder.init_bc": self.init_bc,
            }
        )
        out.update(self.output.params())
        out.update(self.switch.params())
        return out

    def initial_state(self, encoded: EncodedDocument) -> DecoderStepState:
        """tanh-linear maps of the document vector; zero context/coverage."""
        nb, ns, length = encoded.word_mask.shape
        h0 = nm.tanh(encoded.doc_vector @ self.init_Wh + self.init_bh)
        c0 = nm.tanh(encoded.doc_vector @ self.init_Wc + self.init_bc)
        return DecoderStepState(
            hidden=h0,
            cell=c0,
            context=nm.zeros((nb, self.hidden)),
            coverage=nm.zeros((nb, ns, length)),
            y_prev=np.full(nb, START, dtype=np.int64),
        )

    def decode_step(
        self,
        y_prev: np.ndarray,
        state: DecoderStepState,
        encoded: EncodedDocument,
        extended_ids: np.ndarray,
        extended_size: int,
        use_coverage: bool = False,
        forbid=(PAD,),
    ):
        """One step: returns (next DecoderStepState, (B, X) distribution).

        The attention read is queried by the previous state and its context
        enters this step's LSTM input; coverage (when on) is the sum of
        strictly earlier steps' word weights.
        """
        y_prev = np.asarray(y_prev, dtype=np.int64)
        base_ids = np.where(y_prev < self.vocab_size, y_prev, UNK)
        x_t = self.embedding.lookup(base_ids)
        attn = self.attention.step(encoded, state.hidden, state.coverage, use_coverage)
        h_t, cell_t = self.cell.step(nm.concat([x_t, attn.context], axis=1), state.hidden, state.cell)
        p_gen = generation_distribution(self.output, h_t, attn.context, forbid)
        p_sw = switch_probability(self.switch, h_t, attn.context, x_t)
        p_copy = copy_distribution(attn.alpha, extended_ids, extended_size)
        final = mix_distributions(p_gen, p_copy, p_sw)
        next_state = DecoderStepState(
            hidden=h_t,
            cell=cell_t,
            context=attn.context,
            coverage=update_coverage(state.coverage, attn.alpha),
            y_prev=y_prev,
            attention=attn,
        )
        return next_state, final
