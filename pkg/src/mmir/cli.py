"""Command-line front end.

Subcommands cover the full pipeline: tokenizer-train, graph-build, pretrain,
embed, task, overhead, report. Options resolve in three layers: built-in
defaults, then the --config file (dotted key=value lines), then explicit
flags. The effective settings are echoed as JSON into every output
directory so runs are reconstructable from their artifacts.

Exit codes: 0 success, 1 completed with per-item failures, 2 bad input
(missing path, malformed invocation).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__


class CliError(Exception):
    """Invocation problem: missing input path, bad flag value. Exit 2."""


# ------------------------------------------------------------ config plumbing

def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse dotted key=value lines; values are JSON where possible.

    Blank lines and #-comments are ignored. Section headers are not
    supported; write the full dotted key on every line.
    """
    out: dict[str, object] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{source}:{ln}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise CliError(f"{source}:{ln}: empty key")
        out[key] = _parse_value(value.strip())
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text.strip('"')


def load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise CliError(f"config file not found: {path}")
    return parse_config_text(p.read_text(encoding="utf-8"), source=str(path))


def merge_settings(defaults: dict, config: dict, flag_values: dict) -> dict:
    """defaults < config file < explicit flags; unknown config keys pass through."""
    merged = dict(defaults)
    merged.update(config)
    for key, value in flag_values.items():
        if value is not None:
            merged[key] = value
    return merged


def echo_settings(settings: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {k: (str(v) if isinstance(v, Path) else v) for k, v in settings.items()}
    (out_dir / "effective_config.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n"
    )


def _require_file(path: str | None, what: str) -> Path:
    if path is None:
        raise CliError(f"missing required --{what}")
    p = Path(path)
    if not p.exists():
        raise CliError(f"{what} path not found: {path}")
    return p


def _encoder_config(settings: dict, vocab_size: int):
    from .premodel import EncoderConfig

    kwargs = {"vocab_size": vocab_size}
    for field in ("hidden_dim", "num_transformer_layers", "num_attention_heads",
                  "num_gcn_layers", "latent_dim", "match_hidden_dim",
                  "max_seq_len", "seed"):
        key = f"encoder.{field}"
        if key in settings:
            kwargs[field] = int(settings[key])
    return EncoderConfig(**kwargs)


# -------------------------------------------------------------------- commands

def cmd_tokenizer_train(args, config: dict) -> int:
    from .ircorpus import Manifest, ingest_ir_file
    from .irtok import train_tokenizer, vocab_stats

    manifest_path = _require_file(args.manifest, "manifest")
    settings = merge_settings(
        {"vocab_size": 8192, "seed": 0, "split": "pretrain"},
        config,
        {"vocab_size": args.vocab_size, "seed": args.seed, "manifest": str(manifest_path)},
    )
    manifest = Manifest.load(manifest_path)
    docs = []
    for doc_id in manifest.ids(settings["split"]):
        entry = manifest.entry(doc_id)
        docs.append(ingest_ir_file(entry.path, doc_id))
    if not docs:
        raise CliError(f"manifest split {settings['split']!r} is empty")
    vocab = train_tokenizer(docs, vocab_size=int(settings["vocab_size"]),
                            seed=int(settings["seed"]))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    vocab.save(out_dir / "vocab.json")
    stats = vocab_stats(vocab, docs)
    (out_dir / "vocab_stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    echo_settings(settings, out_dir)
    print(f"trained vocab: {len(vocab)} tokens, unk_rate={stats['unk_rate']:.6f} -> {out_dir}")
    return 0


def cmd_graph_build(args, config: dict) -> int:
    from .ircorpus import Manifest
    from .irgraph import graph_from_text, serialize_graph
    from .irtok import Vocab

    manifest_path = _require_file(args.manifest, "manifest")
    vocab_path = _require_file(args.vocab, "vocab")
    settings = merge_settings(
        {"seq_len": 64},
        config,
        {"manifest": str(manifest_path), "vocab": str(vocab_path)},
    )
    manifest = Manifest.load(manifest_path)
    vocab = Vocab.load(vocab_path)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    failures: list[tuple[str, str]] = []
    written = 0
    for doc_id in manifest.ids():
        entry = manifest.entry(doc_id)
        try:
            text = Path(entry.path).read_text(encoding="utf-8")
            graph = graph_from_text(text, vocab, int(settings["seq_len"]))
            (out_dir / f"{doc_id}.json").write_bytes(serialize_graph(graph))
            written += 1
        except Exception as exc:  # record and continue; summarized below
            failures.append((doc_id, f"{type(exc).__name__}: {exc}"))
    echo_settings(settings, out_dir)
    (out_dir / "graph_build_log.json").write_text(
        json.dumps({"written": written, "failures": failures}, indent=2) + "\n"
    )
    print(f"built {written} graphs, {len(failures)} failures -> {out_dir}")
    for doc_id, msg in failures:
        print(f"  FAILED {doc_id}: {msg}", file=sys.stderr)
    return 1 if failures else 0


def cmd_pretrain(args, config: dict) -> int:
    from .irtok import Vocab
    from .ircorpus import Manifest
    from .pretrain import PretrainConfig, load_examples, pretrain

    manifest_path = _require_file(args.manifest, "manifest")
    vocab_path = _require_file(args.vocab, "vocab")
    settings = merge_settings(
        {"epochs": 10, "batch_size": 4, "learning_rate": 1e-3, "seed": 0,
         "split": "pretrain", "graphs": None, "resume": False},
        config,
        {"epochs": args.epochs, "batch_size": args.batch_size, "seed": args.seed,
         "graphs": args.graphs, "resume": args.resume or None,
         "manifest": str(manifest_path), "vocab": str(vocab_path)},
    )
    manifest = Manifest.load(manifest_path)
    vocab = Vocab.load(vocab_path)
    encoder = _encoder_config(settings, vocab_size=len(vocab))
    pconfig = PretrainConfig(
        encoder=encoder,
        epochs=int(settings["epochs"]),
        batch_size=int(settings["batch_size"]),
        learning_rate=float(settings["learning_rate"]),
        seed=int(settings["seed"]),
    )
    graph_dir = settings["graphs"]
    if graph_dir is not None:
        graph_dir = Path(graph_dir)
        if not graph_dir.is_dir():
            raise CliError(f"graphs path not found: {graph_dir}")
    examples = load_examples(manifest, vocab, split=str(settings["split"]),
                             graph_dir=graph_dir, seq_len=encoder.max_seq_len)
    if not examples:
        raise CliError(f"no documents in split {settings['split']!r}")
    out_dir = Path(args.out)
    state = pretrain(pconfig, examples, vocab_path, out_dir, resume=bool(settings["resume"]))
    echo_settings(settings, out_dir)
    last = state.trainlog[-1] if state.trainlog else None
    tail = f", final total={last['total']:.4f}" if last else ""
    print(f"pretrained {state.epoch_done} epochs on {len(examples)} documents{tail} -> {out_dir}")
    return 0


def cmd_embed(args, config: dict) -> int:
    from .embed import embed_corpus
    from .ircorpus import Manifest
    from .pretrain import load_checkpoint, sha256_file

    manifest_path = _require_file(args.manifest, "manifest")
    vocab_path = _require_file(args.vocab, "vocab")
    ckpt_dir = _require_file(args.checkpoint, "checkpoint")
    settings = merge_settings(
        {"modality": "both", "split": None, "graphs": None},
        config,
        {"modality": args.modality, "split": args.split, "graphs": args.graphs,
         "manifest": str(manifest_path), "vocab": str(vocab_path),
         "checkpoint": str(ckpt_dir)},
    )
    state = load_checkpoint(ckpt_dir, vocab_path=vocab_path)
    manifest = Manifest.load(manifest_path)
    graph_dir = Path(settings["graphs"]) if settings["graphs"] else None
    if graph_dir is not None and not graph_dir.is_dir():
        raise CliError(f"graphs path not found: {graph_dir}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, failures = embed_corpus(
        state.model, state.vocab, manifest, out_dir / "embeddings.csv",
        modality=str(settings["modality"]), graph_dir=graph_dir,
        split=settings["split"], checkpoint_sha=sha256_file(Path(ckpt_dir) / "params.bin"),
    )
    echo_settings(settings, out_dir)
    print(f"embedded {rows} documents, {len(failures)} failures -> {out_dir}")
    for doc_id, msg in failures:
        print(f"  FAILED {doc_id}: {msg}", file=sys.stderr)
    return 1 if failures else 0


def cmd_task(args, config: dict) -> int:
    from .embed import load_embedding_table
    from .tasks import (TASKS, HeadConfig, RuntimeTable, TaskBundle,
                        load_labels_csv, run_task)

    if args.task not in TASKS:
        raise CliError(f"unknown task {args.task!r}; choose from {sorted(TASKS)}")
    spec = TASKS[args.task]
    labels_path = _require_file(args.labels, "labels")
    embeddings_path = _require_file(args.embeddings, "embeddings")
    settings = merge_settings(
        {"seed": 0, "k": None, "reduced_fraction": None, "runtimes": None,
         "head.epochs": 300, "head.hidden_dim": 64},
        config,
        {"seed": args.seed, "k": args.k, "reduced_fraction": args.reduced_fraction,
         "runtimes": args.runtimes, "task": args.task,
         "labels": str(labels_path), "embeddings": str(embeddings_path)},
    )
    table = None
    if settings["runtimes"] is not None:
        table = RuntimeTable.load(_require_file(str(settings["runtimes"]), "runtimes"))
    elif spec.needs_runtime:
        raise CliError(f"task {spec.name!r} requires --runtimes")
    sample_ids, programs, labels, aux = load_labels_csv(labels_path, spec.aux_feature_names)
    embeddings = load_embedding_table(embeddings_path)
    missing = [s for s in sample_ids if s not in embeddings]
    if missing:
        raise CliError(f"{len(missing)} sample ids lack embeddings, e.g. {missing[:3]}")
    bundle = TaskBundle(
        sample_ids=sample_ids, program_ids=programs, labels=labels,
        embeddings={s: embeddings[s] for s in sample_ids}, aux=aux,
        runtime_table=table,
    )
    head = HeadConfig(hidden_dim=int(settings["head.hidden_dim"]),
                      epochs=int(settings["head.epochs"]))
    out_dir = Path(args.out)
    rf = settings["reduced_fraction"]
    metrics = run_task(
        spec, bundle, out_dir, seed=int(settings["seed"]), head_config=head,
        reduced_fraction=float(rf) if rf is not None else None,
        k_override=int(settings["k"]) if settings["k"] is not None else None,
    )
    echo_settings(settings, out_dir)
    gm = metrics.geometric_mean_speedup
    extra = f", geomean speedup={gm:.3f}" if gm is not None else ""
    print(f"task {spec.name}: accuracy={metrics.accuracy:.4f}, "
          f"f1_macro={metrics.f1_macro:.4f}{extra} -> {out_dir}")
    return 0


def cmd_overhead(args, config: dict) -> int:
    from .bundles import make_devmap_documents
    from .irgraph import graph_from_text
    from .pretrain import load_checkpoint
    from .tasks import time_frozen_vs_finetune

    vocab_path = _require_file(args.vocab, "vocab")
    ckpt_dir = _require_file(args.checkpoint, "checkpoint")
    settings = merge_settings(
        {"n_documents": 12, "epochs": 6, "seed": 0},
        config,
        {"seed": args.seed, "n_documents": args.n_documents, "epochs": args.epochs,
         "vocab": str(vocab_path), "checkpoint": str(ckpt_dir)},
    )
    state = load_checkpoint(ckpt_dir, vocab_path=vocab_path)
    docs, labels, _ = make_devmap_documents(int(settings["n_documents"]),
                                            seed=int(settings["seed"]))
    graphs = [graph_from_text(d.raw_text, state.vocab, state.model.config.max_seq_len)
              for d in docs]
    result = time_frozen_vs_finetune(
        state.model, state.vocab, docs, graphs, labels, ("CPU", "GPU"),
        epochs=int(settings["epochs"]), seed=int(settings["seed"]),
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "overhead.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    echo_settings(settings, out_dir)
    print(f"frozen: {result['frozen_seconds']:.3f}s, "
          f"fine-tune: {result['finetune_seconds']:.3f}s, "
          f"ratio: {result['ratio']:.2f}x -> {out_dir}")
    return 0


def cmd_report(args, config: dict) -> int:
    runs = []
    for run_dir in args.runs:
        p = Path(run_dir)
        if not p.is_dir():
            raise CliError(f"run directory not found: {run_dir}")
        for name in ("metrics.json", "overhead.json"):
            f = p / name
            if f.is_file():
                runs.append((p.name, name, json.loads(f.read_text())))
    if not runs:
        raise CliError("no metrics.json or overhead.json found in the given runs")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["# Run report", "", "| run | kind | headline |", "|---|---|---|"]
    for name, kind, payload in runs:
        if kind == "metrics.json":
            head = f"accuracy={payload['accuracy']:.4f}"
            if payload.get("geometric_mean_speedup"):
                head += f", geomean speedup={payload['geometric_mean_speedup']:.3f}"
        else:
            head = f"fine-tune/frozen ratio={payload['ratio']:.2f}x"
        lines.append(f"| {name} | {kind.removesuffix('.json')} | {head} |")
    (out_dir / "report.md").write_text("\n".join(lines) + "\n")
    (out_dir / "report.json").write_text(
        json.dumps(
            [{"run": n, "kind": k.removesuffix(".json"), "payload": p} for n, k, p in runs],
            indent=2, sort_keys=True,
        ) + "\n"
    )
    echo_settings({"runs": [str(r) for r in args.runs]}, out_dir)
    print(f"report over {len(runs)} runs -> {out_dir}")
    return 0


# --------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmir",
        description="Multi-modal IR encoder pipeline: tokenize, graph, pretrain, embed, evaluate.",
    )
    parser.add_argument("--version", action="version", version=f"mmir {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="corpus manifest (JSONL)")
    common.add_argument("--vocab", help="trained vocabulary (JSON)")
    common.add_argument("--checkpoint", help="checkpoint directory")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--modality", choices=("text", "graph", "both"), default=None)
    common.add_argument("--config", help="dotted key=value config file")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override one config entry")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tokenizer-train", parents=[common],
                       help="train the subword vocabulary on the pretrain split")
    p.add_argument("--vocab-size", type=int, default=None)
    p.set_defaults(func=cmd_tokenizer_train)

    p = sub.add_parser("graph-build", parents=[common],
                       help="parse every manifest document into a serialized multi-graph")
    p.add_argument("--seq-len", type=int, default=None)
    p.set_defaults(func=cmd_graph_build)

    p = sub.add_parser("pretrain", parents=[common],
                       help="run the three-objective pretraining loop")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--graphs", help="directory of prebuilt graphs")
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("embed", parents=[common],
                       help="extract frozen embeddings for manifest documents")
    p.add_argument("--split", default=None)
    p.add_argument("--graphs", help="directory of prebuilt graphs")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("task", parents=[common],
                       help="cross-validated downstream evaluation")
    p.add_argument("--task", required=True)
    p.add_argument("--labels", help="labels CSV (sample_id,program_id,label,aux...)")
    p.add_argument("--embeddings", help="embeddings CSV from the embed command")
    p.add_argument("--runtimes", help="runtime table CSV")
    p.add_argument("--k", type=int, default=None, help="fold count override")
    p.add_argument("--reduced-fraction", type=float, default=None)
    p.set_defaults(func=cmd_task)

    p = sub.add_parser("overhead", parents=[common],
                       help="wall-time comparison: frozen head vs full fine-tune")
    p.add_argument("--n-documents", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=cmd_overhead)

    p = sub.add_parser("report", parents=[common],
                       help="summarize metrics from earlier runs")
    p.add_argument("--runs", nargs="+", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config_file(args.config)
        for item in args.overrides:
            if "=" not in item:
                raise CliError(f"--set expects KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            config[key.strip()] = _parse_value(value.strip())
        return args.func(args, config)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
