"""Run configuration: a flat key=value file with documented defaults.

Every key has a default except ``epochs``, which each run must state
explicitly. Lines starting with ``#`` and blank lines are ignored; keys
may appear at most once. Booleans are written ``true``/``false``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .training import TrainConfig


@dataclass
class RunConfig:
    # -- optimization ----------------------------------------------------
    epochs: int = 0                  # required; 0 means "not set"
    batch_size: int = 16
    learning_rate: float = 0.15
    initial_accumulator: float = 0.1
    clip_norm: float = 2.0
    coverage_last_epochs: int = 2
    seed: int = 0
    # -- model sizes ------------------------------------------------------
    hidden: int = 256
    embedding: int = 128
    vocab_cap: int = 50000
    # -- length limits ------------------------------------------------------
    max_doc: int = 2000
    max_sec: int = 500
    max_sections: int = 4
    max_decode: int = 210
    # -- decoding ----------------------------------------------------------
    beam: int = 4
    # -- pipeline switches ---------------------------------------------------
    flat_encoder: bool = False       # single-section ablation
    val_fraction: float = 0.05
    test_fraction: float = 0.05
    min_abstract_tokens: int = 0     # 0 disables the too-short filter
    # -- paths ---------------------------------------------------------------
    raw_corpus: str = "corpus.jsonl"
    train_file: str = "train.jsonl"
    val_file: str = "val.jsonl"
    test_file: str = "test.jsonl"
    vocab_file: str = "vocab.txt"
    checkpoint_dir: str = "checkpoints"
    decode_output: str = "decoded.jsonl"
    report_dir: str = "reports"

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{f.name: getattr(self, f.name) for f in fields(self) if f.name in names})

    def validate(self) -> "RunConfig":
        if self.epochs <= 0:
            raise ValueError("config must set epochs to a positive integer")
        self.train_config().validate()
        for name in ("val_fraction", "test_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ValueError(f"config {name} must lie in [0, 1), got {value}")
        if self.val_fraction + self.test_fraction >= 1.0:
            raise ValueError("val_fraction + test_fraction must leave room for training data")
        if self.min_abstract_tokens < 0:
            raise ValueError("min_abstract_tokens must be nonnegative")
        return self


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    if kind == "bool":
        lowered = raw.lower()
        if lowered not in ("true", "false"):
            raise ValueError(f"key {key} expects true or false, got {raw!r}")
        return lowered == "true"
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def parse_config(path) -> RunConfig:
    """Read and validate a key=value config file."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
            key, _, raw = stripped.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in _FIELD_TYPES:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            if key in values:
                raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
            try:
                values[key] = _coerce(key, raw)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return RunConfig(**values).validate()
