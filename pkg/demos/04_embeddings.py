"""Frozen program embeddings, one vector per document.

The text half is the mean of per-statement CLS states, the graph half the
mean node latent from the graph autoencoder; either half can be ablated.
Requires the checkpoint written by 03_pretraining.py.
"""

from pathlib import Path

import numpy as np

from mmir.embed import embed_corpus, embed_ir, load_embedding_table
from mmir.ircorpus import build_manifest, ingest_ir_file
from mmir.irgraph import graph_from_text
from mmir.pretrain import load_checkpoint, sha256_file

ROOT = Path(__file__).resolve().parent.parent
OUT = Path(__file__).resolve().parent / "out"
ckpt_dir = OUT / "ckpt"
vocab_path = OUT / "pretrain_vocab.json"
if not ckpt_dir.exists():
    raise SystemExit("run demos/03_pretraining.py first to produce a checkpoint")

state = load_checkpoint(ckpt_dir, vocab_path=vocab_path)
model, vocab = state.model, state.vocab
manifest = build_manifest(ROOT / "data" / "kernels", {"pretrain": 1.0}, seed=0)

doc = ingest_ir_file(manifest.entries[0].path, doc_id=manifest.entries[0].id)
graph = graph_from_text(doc.raw_text, vocab)
for modality in ("text", "graph", "both"):
    vec = embed_ir(model, vocab, doc, graph if modality != "text" else None, modality)
    parts = np.concatenate([vec.text_part, vec.graph_part])
    print(f"{doc.id} [{modality:5s}] dim {parts.size}, norm {np.linalg.norm(parts):.4f}")

csv_path = OUT / "embeddings.csv"
rows, failures = embed_corpus(
    model,
    vocab,
    manifest,
    csv_path,
    modality="both",
    checkpoint_sha=sha256_file(ckpt_dir / "params.bin"),
)
print(f"\nwrote {rows} rows to {csv_path} ({len(failures)} failures)")

table = load_embedding_table(csv_path)
ids = sorted(table)
print(f"view as a table: {len(ids)} ids, vector width {table[ids[0]].size}")
print(f"first id {ids[0]}, leading values {np.round(table[ids[0]][:4], 4)}")
