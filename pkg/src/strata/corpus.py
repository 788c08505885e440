"""Structured-document data model and preprocessing pipeline.

Raw records arrive as JSON Lines (one object per line: "article_id",
"abstract_text" as sentence strings, "section_names", "sections" as per-
section sentence lists). The pipeline is load -> normalize -> truncate ->
encode. Normalization replaces inline math with indexed @xmath tokens and
citation markers with @xcite, lowercases, cuts the document off after the
first concluding section, and tokenizes with a small rule-based splitter.
"""

from __future__ import annotations

import itertools
import json
import logging
import re
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

PAD, UNK, START, STOP = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<unk>", "<start>", "<stop>")

# a section whose name contains any of these ends the document (kept itself)
CONCLUSION_MARKERS = ("conclusion", "concluding remarks", "summary", "discussion and conclusion")

_MATH_RE = re.compile(r"\$\$[^$]*\$\$|\$[^$]*\$")
_CITE_LATEX_RE = re.compile(r"\\cite[a-zA-Z]*\*?\s*(?:\[[^\]]*\])*\s*\{[^}]*\}")
_CITE_NUM_RE = re.compile(r"\[\s*\d+(?:\s*[-,;]\s*\d+)*\s*\]")
_PUNCT_RE = re.compile(r'([.,;:!?()"])')


def tokenize(text: str) -> list[str]:
    """Whitespace split with . , ; : ! ? ( ) " detached as own tokens."""
    return _PUNCT_RE.sub(r" \1 ", text).split()


@dataclass
class Section:
    name: str
    tokens: list[str]


@dataclass
class Document:
    id: str
    sections: list[Section]
    abstract: list[str]

    @property
    def section_names(self) -> list[str]:
        return [s.name for s in self.sections]

    def num_tokens(self) -> int:
        return sum(len(s.tokens) for s in self.sections)


@dataclass
class RawDocument:
    """One JSONL record, untokenized; input to normalize()."""

    id: str
    abstract_text: list[str]
    section_names: list[str]
    sections: list[list[str]]


@dataclass
class CorpusErrors:
    skipped: int = 0


def _valid_record(obj) -> bool:
    if not isinstance(obj, dict):
        return False
    if not isinstance(obj.get("article_id"), str):
        return False
    abst = obj.get("abstract_text")
    names = obj.get("section_names")
    secs = obj.get("sections")
    if not (isinstance(abst, list) and all(isinstance(s, str) for s in abst)):
        return False
    if not (isinstance(names, list) and all(isinstance(s, str) for s in names)):
        return False
    if not isinstance(secs, list) or len(secs) != len(names):
        return False
    return all(isinstance(sec, list) and all(isinstance(s, str) for s in sec) for sec in secs)


def load_corpus(path, errors: CorpusErrors | None = None):
    """Yield RawDocuments in file order; bad lines are counted and skipped.

    An unreadable path raises at once. A line that is not valid JSON, or a
    record missing/mistyping a schema field, increments ``errors.skipped``
    and logs a warning.
    """
    if errors is None:
        errors = CorpusErrors()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                errors.skipped += 1
                log.warning("%s:%d: malformed JSON, skipped", path, lineno)
                continue
            if not _valid_record(obj):
                errors.skipped += 1
                log.warning("%s:%d: schema violation, skipped", path, lineno)
                continue
            yield RawDocument(
                id=obj["article_id"],
                abstract_text=obj["abstract_text"],
                section_names=obj["section_names"],
                sections=obj["sections"],
            )


# -- normalization -----------------------------------------------------------


def _normalize_text(text: str, math_counter) -> list[str]:
    text = _MATH_RE.sub(lambda m: f" @xmath{next(math_counter)} ", text)
    text = _CITE_LATEX_RE.sub(" @xcite ", text)
    text = _CITE_NUM_RE.sub(" @xcite ", text)
    return tokenize(text.lower())


def _cutoff(names: list[str]) -> int:
    """Index one past the first concluding section (all if none found)."""
    for i, name in enumerate(names):
        lowered = name.lower()
        if any(marker in lowered for marker in CONCLUSION_MARKERS):
            return i + 1
    return len(names)


def normalize(raw) -> Document:
    """Tokenized, lowercased Document with math/citation tokens substituted.

    Math spans are numbered @xmath0, @xmath1, ... by a per-document counter
    that walks the abstract first, then the kept sections in order. Sections
    after the first concluding section are dropped (that section is kept);
    sections that normalize to zero tokens are dropped too. Accepts either a
    RawDocument or an already-normalized Document (idempotent).

    Raises:
        ValueError: no sections survive ("no usable sections"), or the
            abstract normalizes to nothing ("empty abstract").
    """
    if isinstance(raw, Document):
        raw = RawDocument(
            id=raw.id,
            abstract_text=[" ".join(raw.abstract)],
            section_names=raw.section_names,
            sections=[[" ".join(s.tokens)] for s in raw.sections],
        )
    counter = itertools.count()
    abstract = _normalize_text(" ".join(raw.abstract_text), counter)
    if not abstract:
        raise ValueError(f"document {raw.id}: empty abstract")
    keep = _cutoff(raw.section_names)
    sections = []
    for name, sentences in zip(raw.section_names[:keep], raw.sections[:keep]):
        tokens = _normalize_text(" ".join(sentences), counter)
        if tokens:
            sections.append(Section(name=name.lower().strip(), tokens=tokens))
    if not sections:
        raise ValueError(f"document {raw.id}: no usable sections")
    return Document(id=raw.id, sections=sections, abstract=abstract)


def truncate(doc: Document, max_doc: int = 2000, max_sec: int = 500, max_sections: int = 4) -> Document:
    """Apply the three length limits; idempotent.

    First max_sections sections are kept, each clipped to max_sec tokens;
    then a running document total clips further so it never exceeds max_doc.
    Sections clipped to nothing are dropped.
    """
    sections = []
    budget = max_doc
    for sec in doc.sections[:max_sections]:
        take = min(len(sec.tokens), max_sec, budget)
        if take > 0:
            sections.append(Section(name=sec.name, tokens=sec.tokens[:take]))
        budget -= take
        if budget <= 0:
            break
    return Document(id=doc.id, sections=sections, abstract=doc.abstract)


def flatten_document(doc: Document) -> Document:
    """Merge all sections into one (structure-blind ablation input)."""
    tokens = [t for sec in doc.sections for t in sec.tokens]
    return Document(id=doc.id, sections=[Section(name="document", tokens=tokens)], abstract=doc.abstract)


def document_to_record(doc: Document) -> dict:
    """Serialize back to the JSONL record shape load_corpus reads."""
    return {
        "article_id": doc.id,
        "abstract_text": [" ".join(doc.abstract)],
        "section_names": doc.section_names,
        "sections": [[" ".join(s.tokens)] for s in doc.sections],
    }


def write_corpus(docs, path) -> int:
    """Write documents as one JSON record per line; returns the count."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(document_to_record(doc), sort_keys=True) + "\n")
            count += 1
    return count


# -- vocabulary ---------------------------------------------------------------


class Vocabulary:
    """Dense token<->id maps with 4 reserved specials at ids 0-3."""

    def __init__(self, tokens: list[str]):
        self.id_to_token = list(SPECIAL_TOKENS) + list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def encode(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def decode(self, idx: int) -> str:
        return self.id_to_token[idx]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.id_to_token[len(SPECIAL_TOKENS):]:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line.strip()])


def build_vocab(documents, cap: int = 50000) -> Vocabulary:
    """Frequency-ranked vocabulary over sections + abstracts, capped.

    Ties in frequency break lexicographically, so the result is a pure
    function of the corpus. The cap counts the 4 specials.
    """
    counts: dict[str, int] = {}
    seen = False
    for doc in documents:
        seen = True
        for sec in doc.sections:
            for tok in sec.tokens:
                counts[tok] = counts.get(tok, 0) + 1
        for tok in doc.abstract:
            counts[tok] = counts.get(tok, 0) + 1
    if not seen or not counts:
        raise ValueError("empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = max(cap - len(SPECIAL_TOKENS), 0)
    return Vocabulary([tok for tok, _ in ranked[:keep]])


class ExtendedVocabulary:
    """Base vocabulary plus this document's out-of-vocabulary source tokens.

    Extras get ids base.size, base.size+1, ... in first-occurrence order
    (section-major, then position), so the copy distribution has a bucket
    for every source token.
    """

    def __init__(self, base: Vocabulary, extra: list[str]):
        self.base = base
        self.extra = list(extra)
        self._extra_ids = {t: base.size + i for i, t in enumerate(self.extra)}

    @property
    def size(self) -> int:
        return self.base.size + len(self.extra)

    def encode(self, token: str) -> int:
        if token in self.base.token_to_id:
            return self.base.token_to_id[token]
        return self._extra_ids.get(token, UNK)

    def decode(self, idx: int) -> str:
        if idx < self.base.size:
            return self.base.decode(idx)
        return self.extra[idx - self.base.size]


@dataclass
class DocumentIds:
    """Id matrices for one document, sections padded to a common length.

    ids feed the encoder (OOV -> UNK); extended_ids feed the copy
    distribution (OOV -> per-document extended id); mask marks real tokens.
    """

    doc_id: str
    ids: np.ndarray            # (S, L) int64, PAD-filled
    extended_ids: np.ndarray   # (S, L) int64, PAD-filled
    mask: np.ndarray           # (S, L) bool
    extended: ExtendedVocabulary
    section_lengths: list[int] = field(default_factory=list)


def encode_document(doc: Document, vocab: Vocabulary) -> DocumentIds:
    extra: list[str] = []
    seen = set()
    for sec in doc.sections:
        for tok in sec.tokens:
            if tok not in vocab and tok not in seen:
                seen.add(tok)
                extra.append(tok)
    ext = ExtendedVocabulary(vocab, extra)
    ns = len(doc.sections)
    width = max(len(s.tokens) for s in doc.sections)
    ids = np.full((ns, width), PAD, dtype=np.int64)
    xids = np.full((ns, width), PAD, dtype=np.int64)
    mask = np.zeros((ns, width), dtype=bool)
    lengths = []
    for j, sec in enumerate(doc.sections):
        n = len(sec.tokens)
        lengths.append(n)
        ids[j, :n] = [vocab.encode(t) for t in sec.tokens]
        xids[j, :n] = [ext.encode(t) for t in sec.tokens]
        mask[j, :n] = True
    return DocumentIds(doc.id, ids, xids, mask, ext, lengths)


def encode_abstract(doc: Document, vocab: Vocabulary, ext: ExtendedVocabulary, max_len: int):
    """Teacher-forcing pair for the abstract, clipped to max_len steps.

    Returns (inputs, targets): inputs are START + tokens with OOV as UNK
    (what the decoder consumes); targets are tokens + STOP with source OOVs
    as extended ids (what the mixed distribution must assign mass to).
    """
    toks = doc.abstract[: max_len - 1]
    inputs = np.array([START] + [vocab.encode(t) for t in toks], dtype=np.int64)
    targets = np.array([ext.encode(t) for t in toks] + [STOP], dtype=np.int64)
    return inputs, targets
