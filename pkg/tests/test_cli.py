"""End-to-end command-line pipeline tests on a small synthetic corpus.

Fixture ids were chosen so the seeded md5 split (seed 0, fractions
0.25/0.25) puts doc-01/doc-06/doc-07 in train, doc-05 in val, and
doc-00/doc-02 in test — every stage of the pipeline sees real data.
"""

import json
import os

import pytest

from strata.cli import main
from strata.corpus import Vocabulary

RAW_DOCS = [
    {
        "article_id": "doc-00",
        "abstract_text": ["We study slow Dynamics in the spin glass model."],
        "section_names": ["Introduction", "Conclusion", "Appendix"],
        "sections": [
            ["The spin glass model shows slow dynamics near $T_c$ ."],
            ["We conclude the heterodyne probe confirms slow dynamics [1]."],
            ["Extra material that must be cut."],
        ],
    },
    {
        "article_id": "doc-01",
        "abstract_text": ["The lattice model shows fast dynamics."],
        "section_names": ["Introduction", "Results"],
        "sections": [
            ["We study the lattice model with fields $h$ ."],
            ["The model shows fast dynamics in all fields \\cite{x}."],
        ],
    },
    {
        "article_id": "doc-02",
        "abstract_text": ["Fields drive the lattice dynamics."],
        "section_names": ["Model", "Results"],
        "sections": [
            ["The fields couple to the lattice."],
            ["Dynamics of the model follow the fields [2, 3]."],
        ],
    },
    {
        "article_id": "doc-05",
        "abstract_text": ["We study the model."],
        "section_names": ["Introduction"],
        "sections": [["The model is studied with care."]],
    },
    {
        "article_id": "doc-06",
        "abstract_text": ["Slow fields shape the glass."],
        "section_names": ["Introduction", "Discussion and Conclusion"],
        "sections": [
            ["Glass dynamics emerge from slow fields."],
            ["We conclude slow fields shape the glass."],
        ],
    },
    {
        "article_id": "doc-07",
        "abstract_text": ["The probe confirms the model."],
        "section_names": ["Methods", "Results"],
        "sections": [
            ["Our probe measures the lattice with $\\epsilon$ precision."],
            ["The probe confirms the model predictions."],
        ],
    },
]


def write_fixture(tmp_path):
    raw = tmp_path / "raw.jsonl"
    with open(raw, "w", encoding="utf-8") as fh:
        for rec in RAW_DOCS:
            fh.write(json.dumps(rec) + "\n")
    return raw


def write_config(tmp_path, **overrides):
    values = {
        "epochs": 2,
        "batch_size": 2,
        "hidden": 10,
        "embedding": 8,
        "vocab_cap": 80,
        "max_doc": 60,
        "max_sec": 30,
        "max_sections": 3,
        "max_decode": 8,
        "beam": 2,
        "coverage_last_epochs": 1,
        "seed": 0,
        "val_fraction": 0.25,
        "test_fraction": 0.25,
        "raw_corpus": tmp_path / "raw.jsonl",
        "train_file": tmp_path / "train.jsonl",
        "val_file": tmp_path / "val.jsonl",
        "test_file": tmp_path / "test.jsonl",
        "vocab_file": tmp_path / "vocab.txt",
        "checkpoint_dir": tmp_path / "ckpt",
        "decode_output": tmp_path / "decoded.jsonl",
        "report_dir": tmp_path / "reports",
    }
    values.update(overrides)
    path = tmp_path / "run.cfg"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# pipeline configuration\n\n")
        for key, value in values.items():
            rendered = str(value).lower() if isinstance(value, bool) else str(value)
            fh.write(f"{key} = {rendered}\n")
    return str(path)


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_full_pipeline_end_to_end(tmp_path, capsys):
    write_fixture(tmp_path)
    cfg = write_config(tmp_path)

    assert main(["preprocess", "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert "avg document tokens" in out and "avg summary tokens" in out
    for split, count in (("train", 3), ("val", 1), ("test", 2)):
        lines = [l for l in open(tmp_path / f"{split}.jsonl", encoding="utf-8") if l.strip()]
        assert len(lines) == count, split
    assert os.path.isfile(tmp_path / "reports" / "stats.tsv")
    assert os.path.isfile(tmp_path / "reports" / "length_histogram.png")
    # conclusion cutoff dropped the appendix of doc-00
    test_records = [json.loads(l) for l in open(tmp_path / "test.jsonl", encoding="utf-8")]
    doc00 = next(r for r in test_records if r["article_id"] == "doc-00")
    assert doc00["section_names"] == ["introduction", "conclusion"]
    assert "@xmath0" in doc00["sections"][0][0]
    assert "@xcite" in doc00["sections"][1][0]

    assert main(["build-vocab", "--config", cfg]) == 0
    vocab = Vocabulary.load(tmp_path / "vocab.txt")
    assert vocab.size > 4
    assert "heterodyne" not in vocab.token_to_id  # only occurs in a test doc

    assert main(["train", "--config", cfg]) == 0
    assert os.path.isfile(tmp_path / "ckpt" / "latest.ckpt")
    assert os.path.isfile(tmp_path / "ckpt" / "metrics.tsv")
    assert os.path.isfile(tmp_path / "ckpt" / "loss_curve.png")
    metrics_lines = open(tmp_path / "ckpt" / "metrics.tsv", encoding="utf-8").read().splitlines()
    assert len(metrics_lines) == 2 * 2  # 3 train docs / batch 2 = 2 steps x 2 epochs

    assert main(["decode", "--config", cfg]) == 0
    records = [json.loads(l) for l in open(tmp_path / "decoded.jsonl", encoding="utf-8")]
    assert [r["article_id"] for r in records] == ["doc-00", "doc-02"]
    for rec in records:
        assert set(rec) == {"article_id", "summary"}
        for tok in rec["summary"].split():
            assert tok not in ("<pad>", "<start>", "<stop>")

    assert main(["evaluate", "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert "RG-1" in out and "RG-L" in out
    for name in ("report.txt", "scores.tsv", "rouge_f1.png"):
        assert os.path.isfile(tmp_path / "reports" / name)
    report = open(tmp_path / "reports" / "report.txt", encoding="utf-8").read().splitlines()
    assert report[0].split() == ["metric", "F1"]
    assert len(report) == 5

    # -- rerunnability: identical inputs and seed give identical bytes --
    before = {
        name: read_bytes(tmp_path / name)
        for name in ("train.jsonl", "val.jsonl", "test.jsonl", "vocab.txt", "decoded.jsonl")
    }
    before["metrics"] = read_bytes(tmp_path / "ckpt" / "metrics.tsv")
    assert main(["preprocess", "--config", cfg]) == 0
    assert main(["build-vocab", "--config", cfg]) == 0
    assert main(["train", "--config", cfg]) == 0
    assert main(["decode", "--config", cfg]) == 0
    assert read_bytes(tmp_path / "train.jsonl") == before["train.jsonl"]
    assert read_bytes(tmp_path / "val.jsonl") == before["val.jsonl"]
    assert read_bytes(tmp_path / "test.jsonl") == before["test.jsonl"]
    assert read_bytes(tmp_path / "vocab.txt") == before["vocab.txt"]
    assert read_bytes(tmp_path / "decoded.jsonl") == before["decoded.jsonl"]
    assert read_bytes(tmp_path / "ckpt" / "metrics.tsv") == before["metrics"]


def test_decode_without_checkpoint_fails_clearly(tmp_path, capsys):
    write_fixture(tmp_path)
    cfg = write_config(tmp_path)
    Vocabulary(["the", "model"]).save(tmp_path / "vocab.txt")
    assert main(["decode", "--config", cfg]) == 1
    assert "checkpoint not found" in capsys.readouterr().err


def test_unknown_command_exits_2(tmp_path):
    cfg = write_config(tmp_path)
    with pytest.raises(SystemExit) as excinfo:
        main(["frobnicate", "--config", cfg])
    assert excinfo.value.code == 2


def test_missing_required_config_flag_exits_2():
    with pytest.raises(SystemExit) as excinfo:
        main(["train"])
    assert excinfo.value.code == 2


def test_config_violation_exits_1(tmp_path, capsys):
    write_fixture(tmp_path)
    cfg = write_config(tmp_path, epochs=0)
    assert main(["preprocess", "--config", cfg]) == 1
    assert "error:" in capsys.readouterr().err


def test_malformed_config_line_exits_1(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("epochs\n", encoding="utf-8")
    assert main(["preprocess", "--config", str(path)]) == 1
    assert "expected key=value" in capsys.readouterr().err


def test_missing_input_corpus_exits_1(tmp_path, capsys):
    cfg = write_config(tmp_path)  # raw.jsonl never written
    assert main(["preprocess", "--config", cfg]) == 1
    assert "corpus not found" in capsys.readouterr().err


def test_seed_flag_overrides_config(tmp_path):
    write_fixture(tmp_path)
    cfg = write_config(tmp_path, val_fraction=0.4, test_fraction=0.4)
    assert main(["preprocess", "--config", cfg, "--seed", "3"]) == 0
    with_seed3 = read_bytes(tmp_path / "train.jsonl")
    assert main(["preprocess", "--config", cfg, "--seed", "4"]) == 0
    with_seed4 = read_bytes(tmp_path / "train.jsonl")
    assert with_seed3 != with_seed4  # the split hash is seeded


def test_log_level_env_var_accepted(tmp_path, monkeypatch):
    monkeypatch.setenv("STRATA_LOG", "debug")
    write_fixture(tmp_path)
    cfg = write_config(tmp_path)
    assert main(["preprocess", "--config", cfg]) == 0
