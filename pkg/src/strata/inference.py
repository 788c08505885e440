"""Decoding: beam search, greedy argmax, and copy-token restoration.

Beam search keeps the top-`beam` partial hypotheses by total
log-probability, breaking ties by smaller token id and then by earlier
hypothesis index so runs are deterministic. A hypothesis finishes when it
emits STOP or reaches the step limit; finished hypotheses retire to a pool
and the winner is the pooled hypothesis with the best length-normalized
score (total log-probability / generated length, STOP included). PAD and
START are masked out of the generation softmax, and the copy branch can
only name real source tokens, so neither special can ever be emitted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .corpus import PAD, START, STOP, ExtendedVocabulary, Vocabulary
from .decoder import DecoderStepState
from .encoder import EncodedDocument
from .model import Summarizer

INFERENCE_FORBID = (PAD, START)


@dataclass
class Hypothesis:
    tokens: list[int]                 # extended-space ids, STOP included when emitted
    logp: float                       # exact sum of chosen per-step log-probabilities
    state: DecoderStepState
    finished: bool = False

    @property
    def length(self) -> int:
        return len(self.tokens)

    def score(self) -> float:
        """Length-normalized total; an empty hypothesis never competes."""
        return self.logp / max(self.length, 1)


def _log_dist(dist) -> np.ndarray:
    return np.log(np.maximum(dist.data, 1e-300))


def beam_hypothesis(
    model: Summarizer,
    encoded: EncodedDocument,
    extended_ids: np.ndarray,
    extended: ExtendedVocabulary,
    beam: int = 4,
    max_len: int = 210,
    use_coverage: bool = False,
) -> Hypothesis:
    """Run the search and return the winning hypothesis itself."""
    if beam < 1:
        raise ValueError("beam must be at least 1")
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    with nm.no_grad():
        live = [Hypothesis(tokens=[], logp=0.0, state=model.decoder.initial_state(encoded))]
        pool: list[Hypothesis] = []
        for _ in range(max_len):
            if not live:
                break
            candidates = []
            for h_idx, hyp in enumerate(live):
                y_prev = np.array([hyp.tokens[-1] if hyp.tokens else START])
                state, dist = model.decoder.decode_step(
                    y_prev, hyp.state, encoded, extended_ids, extended.size,
                    use_coverage=use_coverage, forbid=INFERENCE_FORBID,
                )
                logp = _log_dist(dist)[0]
                for tok in range(extended.size):
                    if tok in INFERENCE_FORBID:
                        continue
                    candidates.append((hyp.logp + logp[tok], tok, h_idx, state))
            candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
            live_next = []
            for total, tok, h_idx, state in candidates[:beam]:
                hyp = Hypothesis(
                    tokens=live[h_idx].tokens + [tok],
                    logp=total,
                    state=state,
                    finished=(tok == STOP),
                )
                if hyp.finished:
                    pool.append(hyp)
                else:
                    live_next.append(hyp)
            live = live_next
        for hyp in live:  # ran out of steps: finished by length
            hyp.finished = True
            pool.append(hyp)
        return max(pool, key=lambda h: h.score())


def beam_search(
    model: Summarizer,
    encoded: EncodedDocument,
    extended_ids: np.ndarray,
    extended: ExtendedVocabulary,
    beam: int = 4,
    max_len: int = 210,
    use_coverage: bool = False,
) -> list[str]:
    """Best summary for one encoded document, as source-token strings."""
    best = beam_hypothesis(
        model, encoded, extended_ids, extended,
        beam=beam, max_len=max_len, use_coverage=use_coverage,
    )
    return restore_tokens([t for t in best.tokens if t != STOP], extended)


def greedy_hypothesis(
    model: Summarizer,
    encoded: EncodedDocument,
    extended_ids: np.ndarray,
    extended: ExtendedVocabulary,
    max_len: int = 210,
    use_coverage: bool = False,
) -> Hypothesis:
    """Argmax decoding; np.argmax picks the smallest id on ties, matching
    the beam tie-break, so this equals beam_hypothesis with beam=1."""
    with nm.no_grad():
        state = model.decoder.initial_state(encoded)
        tokens: list[int] = []
        total = 0.0
        y = START
        for _ in range(max_len):
            state, dist = model.decoder.decode_step(
                np.array([y]), state, encoded, extended_ids, extended.size,
                use_coverage=use_coverage, forbid=INFERENCE_FORBID,
            )
            logp = _log_dist(dist)[0]
            y = int(np.argmax(dist.data[0]))
            tokens.append(y)
            total = total + logp[y]
            if y == STOP:
                break
        return Hypothesis(tokens=tokens, logp=total, state=state, finished=True)


def greedy_decode(
    model: Summarizer,
    encoded: EncodedDocument,
    extended_ids: np.ndarray,
    extended: ExtendedVocabulary,
    max_len: int = 210,
    use_coverage: bool = False,
) -> list[str]:
    """Summary from single-hypothesis argmax decoding, as token strings."""
    best = greedy_hypothesis(
        model, encoded, extended_ids, extended,
        max_len=max_len, use_coverage=use_coverage,
    )
    return restore_tokens([t for t in best.tokens if t != STOP], extended)


def restore_tokens(ids, extended: ExtendedVocabulary) -> list[str]:
    """Map extended-space ids back to strings; copied ids render as their
    source text, in-vocabulary ids through the base vocabulary."""
    out = []
    for idx in ids:
        idx = int(idx)
        if idx < 0 or idx >= extended.size:
            raise ValueError(f"id {idx} outside extended vocabulary of size {extended.size}")
        out.append(extended.decode(idx))
    return out


def decode_document(
    model: Summarizer,
    doc,
    vocab: Vocabulary,
    beam: int = 4,
    max_len: int = 210,
    use_coverage: bool = False,
    flat: bool = False,
) -> str:
    """Summarize one preprocessed document; returns the summary text."""
    from .corpus import encode_document, flatten_document

    if flat:
        doc = flatten_document(doc)
    enc = encode_document(doc, vocab)
    encoded = model.encode(enc.ids, enc.mask)
    tokens = beam_search(
        model, encoded, enc.extended_ids[None], enc.extended,
        beam=beam, max_len=max_len, use_coverage=use_coverage,
    )
    return " ".join(tokens)


def decode_corpus(
    model: Summarizer,
    docs,
    vocab: Vocabulary,
    beam: int = 4,
    max_len: int = 210,
    use_coverage: bool = False,
    flat: bool = False,
):
    """Yield {"article_id", "summary"} records, one per document, in order."""
    for doc in docs:
        yield {
            "article_id": doc.id,
            "summary": decode_document(
                model, doc, vocab, beam=beam, max_len=max_len,
                use_coverage=use_coverage, flat=flat,
            ),
        }
