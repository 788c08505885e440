"""Teacher-forced maximum-likelihood training.

Documents are encoded once into id matrices, shuffled each epoch with a
seeded RNG, and padded to per-batch maxima. The loss is the mean negative
log-likelihood per real target token. Coverage is switched on only for the
final ``coverage_last_epochs`` epochs; its input vector starts (and, being
unreached by gradients until then, stays) zero, so the switchover step
reproduces the uncovered scores exactly and the loss curve has no jump.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint as ckpt
from . import numerics as nm
from .corpus import PAD, Document, Vocabulary, encode_abstract, encode_document
from .model import Summarizer

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int = 16
    learning_rate: float = 0.15
    initial_accumulator: float = 0.1
    hidden: int = 256
    embedding: int = 128
    vocab_cap: int = 50000
    max_doc: int = 2000
    max_sec: int = 500
    max_sections: int = 4
    max_decode: int = 210
    beam: int = 4
    coverage_last_epochs: int = 2
    seed: int = 0
    clip_norm: float = 2.0

    def validate(self):
        positives = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("learning_rate", self.learning_rate),
            ("initial_accumulator", self.initial_accumulator),
            ("hidden", self.hidden),
            ("embedding", self.embedding),
            ("vocab_cap", self.vocab_cap),
            ("max_doc", self.max_doc),
            ("max_sec", self.max_sec),
            ("max_sections", self.max_sections),
            ("max_decode", self.max_decode),
            ("beam", self.beam),
            ("clip_norm", self.clip_norm),
        ]
        for name, value in positives:
            if value <= 0:
                raise ValueError(f"config {name} must be positive, got {value}")
        if self.coverage_last_epochs < 0:
            raise ValueError("coverage_last_epochs must be nonnegative")
        if self.coverage_last_epochs > self.epochs:
            raise ValueError("coverage_last_epochs cannot exceed epochs")
        return self


@dataclass
class Example:
    """One encoded document plus its teacher-forcing pair."""

    doc_id: str
    ids: np.ndarray        # (S, L)
    extended_ids: np.ndarray
    word_mask: np.ndarray  # (S, L)
    inputs: np.ndarray     # (T,) starts with START
    targets: np.ndarray    # (T,) ends with STOP; copy ids for source OOVs
    extended_size: int
    extra_tokens: list[str] = field(default_factory=list)


def make_example(doc: Document, vocab: Vocabulary, max_decode: int) -> Example:
    enc = encode_document(doc, vocab)
    inputs, targets = encode_abstract(doc, vocab, enc.extended, max_decode)
    return Example(
        doc_id=doc.id,
        ids=enc.ids,
        extended_ids=enc.extended_ids,
        word_mask=enc.mask,
        inputs=inputs,
        targets=targets,
        extended_size=enc.extended.size,
        extra_tokens=enc.extended.extra,
    )


@dataclass
class Batch:
    doc_ids: list[str]
    ids: np.ndarray            # (B, S, L)
    extended_ids: np.ndarray   # (B, S, L)
    word_mask: np.ndarray      # (B, S, L)
    section_mask: np.ndarray   # (B, S)
    inputs: np.ndarray         # (B, T)
    targets: np.ndarray        # (B, T), PAD marks unused tail
    target_mask: np.ndarray    # (B, T) bool
    extended_sizes: np.ndarray # (B,)
    extended_size: int         # max over the batch; scatter width


def assemble_batch(examples: list[Example]) -> Batch:
    """Pad a chunk of examples to its own maxima (not global ones)."""
    nb = len(examples)
    ns = max(e.ids.shape[0] for e in examples)
    nw = max(e.ids.shape[1] for e in examples)
    nt = max(len(e.inputs) for e in examples)
    ids = np.full((nb, ns, nw), PAD, dtype=np.int64)
    xids = np.full((nb, ns, nw), PAD, dtype=np.int64)
    wmask = np.zeros((nb, ns, nw), dtype=bool)
    smask = np.zeros((nb, ns), dtype=bool)
    inputs = np.full((nb, nt), PAD, dtype=np.int64)
    targets = np.full((nb, nt), PAD, dtype=np.int64)
    for i, e in enumerate(examples):
        s, w = e.ids.shape
        ids[i, :s, :w] = e.ids
        xids[i, :s, :w] = e.extended_ids
        wmask[i, :s, :w] = e.word_mask
        smask[i, :s] = True
        inputs[i, : len(e.inputs)] = e.inputs
        targets[i, : len(e.targets)] = e.targets
    return Batch(
        doc_ids=[e.doc_id for e in examples],
        ids=ids,
        extended_ids=xids,
        word_mask=wmask,
        section_mask=smask,
        inputs=inputs,
        targets=targets,
        target_mask=targets != PAD,
        extended_sizes=np.array([e.extended_size for e in examples]),
        extended_size=max(e.extended_size for e in examples),
    )


def make_batches(examples: list[Example], batch_size: int, seed: int) -> list[Batch]:
    """Seeded shuffle, then fixed-size chunks; the final partial batch is kept."""
    order = np.random.default_rng(seed).permutation(len(examples))
    shuffled = [examples[i] for i in order]
    return [assemble_batch(shuffled[i : i + batch_size]) for i in range(0, len(shuffled), batch_size)]


def nll_loss(distributions, targets: np.ndarray, target_mask: np.ndarray):
    """Mean over real target positions of -log p(target); log floored at 1e-12.

    ``distributions`` is one (B, X) tensor per step; a target id >= X
    raises (the model cannot even name that token).
    """
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.asarray(target_mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("loss mask excludes every position")
    total = None
    for t, dist in enumerate(distributions):
        if targets[:, t].max() >= dist.shape[1]:
            raise IndexError("target id outside the extended vocabulary")
        picked = nm.gather_index(dist, targets[:, t])
        logp = nm.log(picked, floor=1e-12) * nm.constant(mask[:, t].astype(np.float64))
        step_sum = logp.sum()
        total = step_sum if total is None else total + step_sum
    return total * (-1.0 / count)


def batch_loss(model: Summarizer, batch: Batch, use_coverage: bool):
    encoded = model.encode(batch.ids, batch.word_mask, batch.section_mask)
    dists, _ = model.teacher_forced_steps(
        encoded, batch.extended_ids, batch.extended_size, batch.inputs, use_coverage
    )
    return nll_loss(dists, batch.targets, batch.target_mask)


def train_step(model: Summarizer, optimizer: nm.Adagrad, batch: Batch, use_coverage: bool) -> float:
    nm.zero_grads(optimizer.params)
    loss = batch_loss(model, batch, use_coverage)
    if not np.isfinite(loss.data):
        raise FloatingPointError("non-finite loss")
    loss.backward()
    model.embedding.zero_pad_grad()
    optimizer.step()
    return loss.item()


def _param_norms(model: Summarizer) -> str:
    return ", ".join(f"{n}={float(np.linalg.norm(p.data)):.3e}" for n, p in sorted(model.params().items()))


class CheckpointRotation:
    """Numbered checkpoints, keep the newest ``keep``, plus a latest copy."""

    def __init__(self, directory, keep: int = 3):
        self.directory = str(directory)
        self.keep = keep
        self.saved: list[str] = []
        os.makedirs(self.directory, exist_ok=True)

    def save(self, model: Summarizer, optimizer: nm.Adagrad, step: int, epoch: int, extra_meta: dict | None = None):
        arrays = {f"adagrad/{n}": s.accumulator for n, s in optimizer.states.items()}
        arrays["meta/step"] = ckpt.meta_scalar(step)
        arrays["meta/epoch"] = ckpt.meta_scalar(epoch)
        for key, value in (extra_meta or {}).items():
            arrays[f"meta/{key}"] = ckpt.meta_scalar(value)
        path = os.path.join(self.directory, f"ckpt-{step:08d}.bin")
        model.save(path, extra=arrays)
        model.save(os.path.join(self.directory, "latest.ckpt"), extra=arrays)
        self.saved.append(path)
        while len(self.saved) > self.keep:
            stale = self.saved.pop(0)
            if os.path.exists(stale):
                os.remove(stale)
        return path


def train(
    model: Summarizer,
    examples: list[Example],
    config: TrainConfig,
    checkpoint_dir=None,
    metrics_path=None,
    extra_meta: dict | None = None,
    checkpoint_every: int = 1000,
) -> list[float]:
    """Run the full schedule; returns the per-step loss history.

    Writes one metrics line per step ("step<TAB>epoch<TAB>loss<TAB>
    coverage_on") and rotates checkpoints every ``checkpoint_every`` steps
    and at each epoch end. A non-finite loss aborts with the batch id and
    parameter norms in the message.
    """
    config.validate()
    if not examples:
        raise ValueError("empty training corpus")
    optimizer = nm.Adagrad(
        model.params(),
        learning_rate=config.learning_rate,
        initial_accumulator=config.initial_accumulator,
        clip_norm=config.clip_norm,
    )
    rotation = CheckpointRotation(checkpoint_dir) if checkpoint_dir else None
    metrics = open(metrics_path, "a", encoding="utf-8") if metrics_path else None
    history: list[float] = []
    step = 0
    coverage_start = config.epochs - config.coverage_last_epochs + 1
    try:
        for epoch in range(1, config.epochs + 1):
            use_coverage = epoch >= coverage_start
            epoch_losses = []
            for batch in make_batches(examples, config.batch_size, config.seed + epoch):
                step += 1
                try:
                    loss = train_step(model, optimizer, batch, use_coverage)
                except FloatingPointError as exc:
                    raise FloatingPointError(
                        f"{exc} at step {step} (epoch {epoch}, batch of {batch.doc_ids}); "
                        f"parameter norms: {_param_norms(model)}"
                    ) from exc
                history.append(loss)
                epoch_losses.append(loss)
                if metrics:
                    metrics.write(f"{step}\t{epoch}\t{loss:.17g}\t{int(use_coverage)}\n")
                    metrics.flush()
                if rotation and step % checkpoint_every == 0:
                    rotation.save(model, optimizer, step, epoch, extra_meta)
            log.info("epoch %d mean loss %.6f (coverage %s)", epoch, float(np.mean(epoch_losses)), use_coverage)
            if rotation:
                rotation.save(model, optimizer, step, epoch, extra_meta)
    finally:
        if metrics:
            metrics.close()
    return history
