"""Whole-model assembly: embeddings, hierarchical encoder, dual attention,
copy/generate mixture decoder, checkpoint save/load."""

from __future__ import annotations

import numpy as np

from . import checkpoint as ckpt
from . import numerics as nm
from .attention import DualAttention
from .decoder import DecoderStepState, SummaryDecoder
from .encoder import EmbeddingTable, EncodedDocument, HierarchicalEncoder
from .numerics import Tensor


class Summarizer:
    def __init__(
        self,
        vocab_size: int,
        hidden: int = 256,
        embedding_dim: int = 128,
        seed: int = 0,
        mix_width: int | None = None,
    ):
        rng = np.random.default_rng(seed)
        self.vocab_size = vocab_size
        self.hidden = hidden
        self.embedding_dim = embedding_dim
        self.mix_width = hidden if mix_width is None else mix_width
        self.embedding = EmbeddingTable(vocab_size, embedding_dim, rng)
        self.encoder = HierarchicalEncoder(self.embedding, hidden, rng)
        self.attention = DualAttention(hidden, rng)
        self.decoder = SummaryDecoder(self.embedding, self.attention, vocab_size, hidden, rng, self.mix_width)

    def params(self) -> dict[str, Tensor]:
        out = dict(self.embedding.params())
        out.update(self.encoder.params())
        out.update(self.attention.params())
        out.update(self.decoder.params())
        return out

    def encode(self, ids, word_mask, section_mask=None) -> EncodedDocument:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim == 2:
            return self.encoder.encode_document(ids, word_mask)
        return self.encoder.encode_batch(ids, word_mask, section_mask)

    def teacher_forced_steps(
        self,
        encoded: EncodedDocument,
        extended_ids: np.ndarray,
        extended_size: int,
        decoder_inputs: np.ndarray,
        use_coverage: bool = False,
    ):
        """Unroll the decoder over ground-truth inputs.

        decoder_inputs (B, T) start with START; returns (distributions,
        states): T tensors of shape (B, extended_size) and the T step
        states that produced them.
        """
        decoder_inputs = np.asarray(decoder_inputs, dtype=np.int64)
        state = self.decoder.initial_state(encoded)
        dists, states = [], []
        for t in range(decoder_inputs.shape[1]):
            state, dist = self.decoder.decode_step(
                decoder_inputs[:, t], state, encoded, extended_ids, extended_size, use_coverage
            )
            dists.append(dist)
            states.append(state)
        return dists, states

    # -- persistence -----------------------------------------------------

    def to_arrays(self) -> dict[str, np.ndarray]:
        arrays = {name: p.data for name, p in self.params().items()}
        arrays["meta/vocab_size"] = ckpt.meta_scalar(self.vocab_size)
        arrays["meta/hidden"] = ckpt.meta_scalar(self.hidden)
        arrays["meta/embedding_dim"] = ckpt.meta_scalar(self.embedding_dim)
        arrays["meta/mix_width"] = ckpt.meta_scalar(self.mix_width)
        return arrays

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.params().items():
            if name not in arrays:
                raise ValueError(f"checkpoint missing parameter {name}")
            if arrays[name].shape != p.data.shape:
                raise ValueError(
                    f"checkpoint shape mismatch for {name}: {arrays[name].shape} vs {p.data.shape}"
                )
            p.data[:] = arrays[name]

    def save(self, path, extra: dict[str, np.ndarray] | None = None) -> None:
        arrays = self.to_arrays()
        if extra:
            arrays.update(extra)
        ckpt.save_checkpoint(path, arrays)

    @classmethod
    def load(cls, path) -> tuple["Summarizer", dict[str, np.ndarray]]:
        """Rebuild a model from a checkpoint; returns (model, all arrays)."""
        arrays = ckpt.load_checkpoint(path)
        model = cls(
            vocab_size=int(ckpt.read_meta(arrays, "vocab_size")),
            hidden=int(ckpt.read_meta(arrays, "hidden")),
            embedding_dim=int(ckpt.read_meta(arrays, "embedding_dim")),
            mix_width=int(ckpt.read_meta(arrays, "mix_width")),
        )
        model.load_arrays(arrays)
        return model, arrays
