"""Frozen-encoder embedding extraction.

A document embedding is the concatenation of a text part (mean of
per-statement CLS hidden states) and a graph part (mean of node latents
from the all-edges subgraph). Single-modality extraction zeroes the
absent half so every table row has the same width.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .ircorpus import IRDocument, Manifest, ingest_ir_file
from .irgraph import ProGraph, deserialize_graph, graph_from_text
from .irtok import Vocab, encode_statement
from .premodel import (
    GraphTensors,
    MultiModalEncoder,
    aggregate_statement_embeddings,
    gae_encode,
    graph_to_tensors,
    seqs_to_tensors,
)

MODALITIES = ("text", "graph", "both")


@dataclass
class EmbeddingVector:
    text_part: np.ndarray  # hidden_dim; zeros when modality == "graph"
    graph_part: np.ndarray  # latent_dim; zeros when modality == "text"
    modality: str

    @property
    def concat(self) -> np.ndarray:
        return np.concatenate([self.text_part, self.graph_part])


def embed_ir(
    model: MultiModalEncoder,
    vocab: Vocab,
    document: IRDocument,
    graph: ProGraph | GraphTensors | None = None,
    modality: str = "both",
) -> EmbeddingVector:
    """Embed one document with the encoder frozen (eval mode, no gradients)."""
    if modality not in MODALITIES:
        raise ValueError(f"modality must be one of {MODALITIES}, got {modality!r}")
    cfg = model.config
    text_part = np.zeros(cfg.hidden_dim, dtype=np.float32)
    graph_part = np.zeros(cfg.latent_dim, dtype=np.float32)

    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            if modality in ("text", "both"):
                seqs = [encode_statement(vocab, s, cfg.max_seq_len) for s in document.statements]
                cls = model.cls_embedding(*seqs_to_tensors(seqs))
                text_part = aggregate_statement_embeddings(cls).numpy().astype(np.float32)
            if modality in ("graph", "both"):
                if graph is None:
                    raise ValueError(f"modality {modality!r} needs a graph")
                gt = graph if isinstance(graph, GraphTensors) else graph_to_tensors(graph)
                graph_part = gae_encode(model, gt, "all").mean(0).numpy().astype(np.float32)
    finally:
        if was_training:
            model.train()

    vec = EmbeddingVector(text_part=text_part, graph_part=graph_part, modality=modality)
    if not np.all(np.isfinite(vec.concat)):
        raise ValueError(f"non-finite embedding for document {document.id}")
    return vec


def embed_corpus(
    model: MultiModalEncoder,
    vocab: Vocab,
    manifest: Manifest,
    out_csv: Path | str,
    modality: str = "both",
    graph_dir: Path | str | None = None,
    split: str | None = None,
    checkpoint_sha: str = "",
) -> tuple[int, list[tuple[str, str]]]:
    """Write one embedding row per manifest document, ordered by id.

    Returns (rows_written, failures); a per-document failure is recorded
    and skipped rather than aborting the sweep. The sidecar meta JSON
    lands next to the CSV as <out_csv>.meta.json.
    """
    out_csv = Path(out_csv)
    dim = model.config.hidden_dim + model.config.latent_dim
    entries = sorted(
        (e for e in manifest.entries if split is None or e.split == split),
        key=lambda e: e.id,
    )
    failures: list[tuple[str, str]] = []
    rows = []
    for entry in entries:
        try:
            document = ingest_ir_file(entry.path, doc_id=entry.id)
            graph = None
            if modality != "text":
                if graph_dir is not None:
                    cache = Path(graph_dir) / f"{entry.id}.json"
                    graph = deserialize_graph(cache.read_bytes())
                else:
                    graph = graph_from_text(document.raw_text, vocab, model.config.max_seq_len)
            vec = embed_ir(model, vocab, document, graph, modality)
            rows.append((entry.id, vec.concat))
        except Exception as exc:  # noqa: BLE001 - sweep must survive bad files
            failures.append((entry.id, f"{type(exc).__name__}: {exc}"))

    header = "id," + ",".join(f"dim_{i}" for i in range(dim))
    with open(out_csv, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for doc_id, vec in rows:
            fh.write(doc_id + "," + ",".join(f"{x:.8g}" for x in vec.tolist()) + "\n")
    meta = {
        "checkpoint_sha": checkpoint_sha,
        "modality": modality,
        "dim": dim,
        "rows": len(rows),
        "failures": [{"id": i, "error": e} for i, e in failures],
    }
    Path(str(out_csv) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return len(rows), failures


def load_embedding_table(path: Path | str) -> dict[str, np.ndarray]:
    """Read an embedding CSV back into {id: vector}."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"empty embedding table {path}")
    out = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        doc_id, *vals = line.split(",")
        out[doc_id] = np.asarray([float(v) for v in vals], dtype=np.float32)
    return out
