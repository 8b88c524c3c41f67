"""Command-line pipeline: every subcommand, config layering, exit codes."""

import json
from pathlib import Path

import pytest

from mmir.bundles import make_devmap_documents
from mmir.cli import main, merge_settings, parse_config_text
from mmir.ircorpus import build_manifest

TINY = [
    "--set", "encoder.hidden_dim=16",
    "--set", "encoder.num_transformer_layers=1",
    "--set", "encoder.num_attention_heads=2",
    "--set", "encoder.num_gcn_layers=2",
    "--set", "encoder.latent_dim=8",
    "--set", "encoder.match_hidden_dim=16",
]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One full pipeline run shared by the subcommand assertions."""
    root = tmp_path_factory.mktemp("cliwork")
    corpus = root / "corpus"
    corpus.mkdir()
    docs, labels, aux = make_devmap_documents(8, seed=5)
    for doc in docs:
        (corpus / f"{doc.id}.ll").write_text(doc.raw_text)
    manifest = build_manifest(corpus, {"pretrain": 1.0}, seed=0)
    mf = root / "manifest.jsonl"
    manifest.save(mf)

    with open(root / "labels.csv", "w") as fh:
        fh.write("sample_id,program_id,label,transfer_size,workgroup_size\n")
        for doc, label, a in zip(docs, labels, aux):
            fh.write(f"{doc.id},{doc.id},{label},{a[0]:.6g},{a[1]:.6g}\n")

    assert main(["tokenizer-train", "--manifest", str(mf), "--vocab-size", "600",
                 "--out", str(root / "tok")]) == 0
    vocab = root / "tok" / "vocab.json"

    assert main(["graph-build", "--manifest", str(mf), "--vocab", str(vocab),
                 "--out", str(root / "graphs")]) == 0

    assert main(["pretrain", "--manifest", str(mf), "--vocab", str(vocab),
                 "--graphs", str(root / "graphs"), "--epochs", "1",
                 "--batch-size", "4", "--out", str(root / "ckpt"), *TINY]) == 0

    assert main(["embed", "--manifest", str(mf), "--vocab", str(vocab),
                 "--checkpoint", str(root / "ckpt"), "--graphs", str(root / "graphs"),
                 "--out", str(root / "emb")]) == 0

    return root


def test_tokenizer_train_outputs(workdir):
    out = workdir / "tok"
    assert (out / "vocab.json").is_file()
    assert (out / "effective_config.json").is_file()
    stats = json.loads((out / "vocab_stats.json").read_text())
    assert stats["unk_rate"] == 0.0
    settings = json.loads((out / "effective_config.json").read_text())
    assert settings["vocab_size"] == 600


def test_graph_build_outputs(workdir):
    graphs = sorted((workdir / "graphs").glob("dm*.json"))
    assert len(graphs) == 8
    log = json.loads((workdir / "graphs" / "graph_build_log.json").read_text())
    assert log == {"written": 8, "failures": []}


def test_pretrain_outputs(workdir):
    ckpt = workdir / "ckpt"
    for name in ("params.bin", "config.json", "vocab.sha256", "trainlog.jsonl",
                 "effective_config.json"):
        assert (ckpt / name).is_file(), name
    config = json.loads((ckpt / "config.json").read_text())
    assert config["epoch_done"] == 1
    assert config["encoder"]["hidden_dim"] == 16


def test_embed_outputs(workdir):
    emb = workdir / "emb"
    lines = (emb / "embeddings.csv").read_text().splitlines()
    assert len(lines) == 9
    assert lines[0].startswith("id,dim_0,")
    meta = json.loads((emb / "embeddings.csv.meta.json").read_text())
    assert meta["rows"] == 8 and meta["failures"] == []
    assert meta["checkpoint_sha"]


def test_task_subcommand(workdir, tmp_path):
    rc = main(["task", "--task", "devmap", "--labels", str(workdir / "labels.csv"),
               "--embeddings", str(workdir / "emb" / "embeddings.csv"),
               "--k", "2", "--set", "head.epochs=40", "--out", str(tmp_path / "run")])
    assert rc == 0
    metrics = json.loads((tmp_path / "run" / "metrics.json").read_text())
    assert metrics["task"] == "devmap"
    assert 0.0 <= metrics["accuracy"] <= 1.0
    assert (tmp_path / "run" / "folds.csv").is_file()
    assert (tmp_path / "run" / "effective_config.json").is_file()


def test_task_requires_runtimes_for_runtime_tasks(workdir, tmp_path, capsys):
    rc = main(["task", "--task", "coarsen", "--labels", str(workdir / "labels.csv"),
               "--embeddings", str(workdir / "emb" / "embeddings.csv"),
               "--out", str(tmp_path / "run")])
    assert rc == 2
    assert "requires --runtimes" in capsys.readouterr().err


def test_task_unknown_name(workdir, tmp_path):
    rc = main(["task", "--task", "mystery", "--labels", str(workdir / "labels.csv"),
               "--embeddings", str(workdir / "emb" / "embeddings.csv"),
               "--out", str(tmp_path / "run")])
    assert rc == 2


def test_overhead_subcommand(workdir, tmp_path):
    rc = main(["overhead", "--vocab", str(workdir / "tok" / "vocab.json"),
               "--checkpoint", str(workdir / "ckpt"),
               "--n-documents", "4", "--epochs", "2", "--out", str(tmp_path / "oh")])
    assert rc == 0
    result = json.loads((tmp_path / "oh" / "overhead.json").read_text())
    assert result["frozen_seconds"] > 0
    assert result["finetune_seconds"] > 0
    assert result["ratio"] == pytest.approx(
        result["finetune_seconds"] / result["frozen_seconds"])


def test_report_subcommand(workdir, tmp_path):
    task_dir = tmp_path / "taskrun"
    rc = main(["task", "--task", "devmap", "--labels", str(workdir / "labels.csv"),
               "--embeddings", str(workdir / "emb" / "embeddings.csv"),
               "--k", "2", "--set", "head.epochs=20", "--out", str(task_dir)])
    assert rc == 0
    rc = main(["report", "--runs", str(task_dir), "--out", str(tmp_path / "rep")])
    assert rc == 0
    report = (tmp_path / "rep" / "report.md").read_text()
    assert "accuracy=" in report
    payload = json.loads((tmp_path / "rep" / "report.json").read_text())
    assert payload[0]["kind"] == "metrics"


def test_report_missing_run_dir(tmp_path):
    assert main(["report", "--runs", str(tmp_path / "nope"),
                 "--out", str(tmp_path / "rep")]) == 2


def test_bad_paths_exit_2(workdir, tmp_path, capsys):
    assert main(["embed", "--manifest", str(tmp_path / "missing.jsonl"),
                 "--vocab", str(workdir / "tok" / "vocab.json"),
                 "--checkpoint", str(workdir / "ckpt"),
                 "--out", str(tmp_path / "x")]) == 2
    assert main(["tokenizer-train", "--manifest", str(tmp_path / "missing.jsonl"),
                 "--out", str(tmp_path / "x")]) == 2
    assert main(["pretrain", "--manifest", str(tmp_path / "missing.jsonl"),
                 "--vocab", str(workdir / "tok" / "vocab.json"),
                 "--out", str(tmp_path / "x")]) == 2
    err = capsys.readouterr().err
    assert "not found" in err


def test_graph_build_reports_per_item_failures(tmp_path):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    docs, _, _ = make_devmap_documents(2, seed=0)
    for doc in docs:
        (corpus / f"{doc.id}.ll").write_text(doc.raw_text)
    (corpus / "broken.ll").write_text("define i32 @broken(\n")
    manifest = build_manifest(corpus, {"pretrain": 1.0}, seed=0)
    mf = tmp_path / "m.jsonl"
    manifest.save(mf)
    rc = main(["tokenizer-train", "--manifest", str(mf), "--vocab-size", "600",
               "--out", str(tmp_path / "tok")])
    assert rc == 0
    rc = main(["graph-build", "--manifest", str(mf),
               "--vocab", str(tmp_path / "tok" / "vocab.json"),
               "--out", str(tmp_path / "graphs")])
    assert rc == 1
    log = json.loads((tmp_path / "graphs" / "graph_build_log.json").read_text())
    assert log["written"] == 2
    assert log["failures"][0][0] == "broken"


# ------------------------------------------------------------ config layering

def test_parse_config_text():
    cfg = parse_config_text(
        "# comment\n"
        "vocab_size = 500\n"
        "encoder.hidden_dim=32\n"
        'modality = "text"  # trailing comment\n'
        "learning_rate = 0.005\n"
    )
    assert cfg == {"vocab_size": 500, "encoder.hidden_dim": 32,
                   "modality": "text", "learning_rate": 0.005}


def test_parse_config_rejects_garbage():
    from mmir.cli import CliError

    with pytest.raises(CliError, match="key=value"):
        parse_config_text("this is not a setting\n")


def test_merge_settings_precedence():
    merged = merge_settings(
        {"seed": 0, "vocab_size": 8192},
        {"seed": 3, "vocab_size": 500, "extra.key": 1},
        {"seed": 7, "vocab_size": None},
    )
    assert merged == {"seed": 7, "vocab_size": 500, "extra.key": 1}


def test_config_file_feeds_commands(tmp_path):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    docs, _, _ = make_devmap_documents(3, seed=1)
    for doc in docs:
        (corpus / f"{doc.id}.ll").write_text(doc.raw_text)
    manifest = build_manifest(corpus, {"pretrain": 1.0}, seed=0)
    mf = tmp_path / "m.jsonl"
    manifest.save(mf)
    cfg = tmp_path / "run.cfg"
    cfg.write_text("vocab_size = 512\n")

    rc = main(["tokenizer-train", "--manifest", str(mf), "--config", str(cfg),
               "--out", str(tmp_path / "a")])
    assert rc == 0
    assert json.loads((tmp_path / "a" / "effective_config.json").read_text())["vocab_size"] == 512

    # explicit flag beats the file
    rc = main(["tokenizer-train", "--manifest", str(mf), "--config", str(cfg),
               "--vocab-size", "600", "--out", str(tmp_path / "b")])
    assert rc == 0
    assert json.loads((tmp_path / "b" / "effective_config.json").read_text())["vocab_size"] == 600

    rc = main(["tokenizer-train", "--manifest", str(mf),
               "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path / "c")])
    assert rc == 2


def test_console_entry_point():
    import subprocess

    out = subprocess.run(["mmir", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for sub in ("tokenizer-train", "graph-build", "pretrain", "embed",
                "task", "overhead", "report"):
        assert sub in out.stdout
