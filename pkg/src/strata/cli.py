"""Command-line pipeline: preprocess -> build-vocab -> train -> decode -> evaluate.

Every command takes --config pointing at a flat key=value file; --seed
overrides the config's seed; decode and evaluate accept --checkpoint.
Exit status is 0 on success, 1 with a one-line cause on any config or
runtime violation, and 2 (from argument parsing) on usage errors. The
STRATA_LOG environment variable ({error, info, debug}) sets verbosity.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys

from . import corpus as cp
from .checkpoint import read_meta
from .config import RunConfig, parse_config
from .inference import decode_corpus
from .model import Summarizer
from .report import (
    write_evaluation_report,
    write_loss_curve,
    write_preprocess_report,
)
from .rouge import corpus_scores, format_report
from .training import make_example, train

log = logging.getLogger(__name__)

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging():
    wanted = os.environ.get("STRATA_LOG", "info").lower()
    logging.basicConfig(
        level=_LOG_LEVELS.get(wanted, logging.INFO),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _require_file(path, what: str):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _split_of(doc_id: str, seed: int, val_fraction: float, test_fraction: float) -> str:
    """Stable seeded assignment of a document id to train/val/test."""
    digest = hashlib.md5(f"{seed}:{doc_id}".encode("utf-8")).hexdigest()
    u = int(digest, 16) / 16 ** len(digest)
    if u < test_fraction:
        return "test"
    if u < test_fraction + val_fraction:
        return "val"
    return "train"


def _load_documents(path, cfg: RunConfig, what: str):
    """Normalized, truncated documents from a JSONL file (idempotent on
    already-preprocessed input); unusable records are skipped and counted."""
    _require_file(path, what)
    errors = cp.CorpusErrors()
    docs = []
    for raw in cp.load_corpus(path, errors):
        try:
            doc = cp.truncate(cp.normalize(raw), cfg.max_doc, cfg.max_sec, cfg.max_sections)
        except ValueError as exc:
            errors.skipped += 1
            log.warning("skipping %s: %s", raw.id, exc)
            continue
        docs.append(doc)
    if errors.skipped:
        log.info("%s: skipped %d unusable records", path, errors.skipped)
    return docs


def cmd_preprocess(cfg: RunConfig, args) -> int:
    docs = _load_documents(cfg.raw_corpus, cfg, "corpus")
    if cfg.min_abstract_tokens:
        docs = [d for d in docs if len(d.abstract) >= cfg.min_abstract_tokens]
    splits = {"train": [], "val": [], "test": []}
    for doc in docs:
        splits[_split_of(doc.id, cfg.seed, cfg.val_fraction, cfg.test_fraction)].append(doc)
    for name, path in (("train", cfg.train_file), ("val", cfg.val_file), ("test", cfg.test_file)):
        cp.write_corpus(splits[name], path)
    paths = write_preprocess_report(
        {name: len(ds) for name, ds in splits.items()},
        [d.num_tokens() for d in docs],
        [len(d.abstract) for d in docs],
        cfg.report_dir,
    )
    avg_doc = sum(d.num_tokens() for d in docs) / len(docs) if docs else 0.0
    avg_abs = sum(len(d.abstract) for d in docs) / len(docs) if docs else 0.0
    print(
        f"preprocessed {len(docs)} documents "
        f"(train {len(splits['train'])}, val {len(splits['val'])}, test {len(splits['test'])}); "
        f"avg document tokens {avg_doc:.2f}, avg summary tokens {avg_abs:.2f}"
    )
    print(f"stats: {paths['stats']}; figure: {paths['figure']}")
    return 0


def cmd_build_vocab(cfg: RunConfig, args) -> int:
    docs = _load_documents(cfg.train_file, cfg, "training corpus")
    vocab = cp.build_vocab(docs, cfg.vocab_cap)
    vocab.save(cfg.vocab_file)
    print(f"vocabulary of {vocab.size} tokens written to {cfg.vocab_file}")
    return 0


def _prepare_examples(docs, vocab, cfg: RunConfig):
    if cfg.flat_encoder:
        docs = [cp.flatten_document(d) for d in docs]
    return [make_example(doc, vocab, cfg.max_decode) for doc in docs]


def cmd_train(cfg: RunConfig, args) -> int:
    _require_file(cfg.vocab_file, "vocabulary")
    vocab = cp.Vocabulary.load(cfg.vocab_file)
    docs = _load_documents(cfg.train_file, cfg, "training corpus")
    examples = _prepare_examples(docs, vocab, cfg)
    model = Summarizer(
        vocab_size=vocab.size, hidden=cfg.hidden, embedding_dim=cfg.embedding, seed=cfg.seed
    )
    os.makedirs(cfg.checkpoint_dir, exist_ok=True)
    metrics_path = os.path.join(cfg.checkpoint_dir, "metrics.tsv")
    if os.path.exists(metrics_path):
        os.remove(metrics_path)  # reruns must produce identical logs, not appended ones
    history = train(
        model,
        examples,
        cfg.train_config(),
        checkpoint_dir=cfg.checkpoint_dir,
        metrics_path=metrics_path,
        extra_meta={
            "coverage": float(cfg.coverage_last_epochs > 0),
            "flat_encoder": float(cfg.flat_encoder),
        },
    )
    figure = write_loss_curve(metrics_path, os.path.join(cfg.checkpoint_dir, "loss_curve.png"))
    print(
        f"trained {len(examples)} documents for {cfg.epochs} epochs "
        f"({len(history)} steps); final loss {history[-1]:.6f}"
    )
    print(f"metrics: {metrics_path}; figure: {figure}")
    return 0


def _resolve_checkpoint(cfg: RunConfig, args):
    path = args.checkpoint or os.path.join(cfg.checkpoint_dir, "latest.ckpt")
    return _require_file(path, "checkpoint")


def _run_decode(cfg: RunConfig, args) -> int:
    _require_file(cfg.vocab_file, "vocabulary")
    vocab = cp.Vocabulary.load(cfg.vocab_file)
    model, arrays = Summarizer.load(_resolve_checkpoint(cfg, args))
    use_coverage = read_meta(arrays, "coverage", 0.0) > 0
    flat = read_meta(arrays, "flat_encoder", float(cfg.flat_encoder)) > 0
    docs = _load_documents(cfg.test_file, cfg, "test corpus")
    count = 0
    with open(cfg.decode_output, "w", encoding="utf-8") as fh:
        for record in decode_corpus(
            model, docs, vocab,
            beam=cfg.beam, max_len=cfg.max_decode,
            use_coverage=use_coverage, flat=flat,
        ):
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            count += 1
    print(f"decoded {count} documents to {cfg.decode_output}")
    return 0


def cmd_decode(cfg: RunConfig, args) -> int:
    return _run_decode(cfg, args)


def cmd_evaluate(cfg: RunConfig, args) -> int:
    if args.checkpoint:  # decode first when pointed at a model
        _run_decode(cfg, args)
    _require_file(cfg.decode_output, "decoded summaries")
    summaries = {}
    with open(cfg.decode_output, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                record = json.loads(line)
                summaries[record["article_id"]] = record["summary"]
    docs = _load_documents(cfg.test_file, cfg, "test corpus")
    candidates, references = [], []
    for doc in docs:
        if doc.id not in summaries:
            raise ValueError(f"no decoded summary for document {doc.id}")
        candidates.append(summaries[doc.id].split())
        references.append(doc.abstract)
    scores = corpus_scores(candidates, references)
    paths = write_evaluation_report(scores, cfg.report_dir)
    print(format_report(scores), end="")
    print(f"report: {paths['report']}; scores: {paths['scores']}; figure: {paths['figure']}")
    return 0


_DISPATCH = {
    "preprocess": cmd_preprocess,
    "build-vocab": cmd_build_vocab,
    "train": cmd_train,
    "decode": cmd_decode,
    "evaluate": cmd_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strata",
        description="Hierarchical abstractive summarization of sectioned documents.",
    )
    commands = parser.add_subparsers(dest="command", required=True, metavar="command")
    descriptions = {
        "preprocess": "normalize, truncate, and split a raw JSONL corpus",
        "build-vocab": "build the frequency-capped vocabulary from the training split",
        "train": "train a model, writing checkpoints and a metrics log",
        "decode": "beam-search summaries for the test split",
        "evaluate": "score decoded summaries against reference abstracts",
    }
    for name, desc in descriptions.items():
        sub = commands.add_parser(name, help=desc, description=desc)
        sub.add_argument("--config", required=True, help="path to a key=value config file")
        sub.add_argument("--seed", type=int, default=None, help="override the config seed")
        if name in ("decode", "evaluate"):
            sub.add_argument("--checkpoint", default=None, help="model checkpoint to load")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging()
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        return _DISPATCH[args.command](cfg, args)
    except (ValueError, OSError, KeyError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
