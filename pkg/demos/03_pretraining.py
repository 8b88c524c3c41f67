"""Joint pretraining over masked IR text, graph autoencoding, and matching.

Runs a deliberately tiny configuration for a handful of epochs, prints the
per-objective loss trajectory, then extends the same run through the resume
path to show checkpoints pick up exactly where they stopped.
"""

from pathlib import Path

from mmir.ircorpus import build_manifest, ingest_ir_file
from mmir.irtok import train_tokenizer
from mmir.premodel import EncoderConfig
from mmir.pretrain import PretrainConfig, load_examples, pretrain

ROOT = Path(__file__).resolve().parent.parent
OUT = Path(__file__).resolve().parent / "out"
OUT.mkdir(exist_ok=True)

manifest = build_manifest(ROOT / "data" / "kernels", {"pretrain": 1.0}, seed=0)
docs = [ingest_ir_file(e.path, doc_id=e.id) for e in manifest.entries]
vocab = train_tokenizer(docs, vocab_size=2048, seed=0)
vocab_path = OUT / "pretrain_vocab.json"
vocab.save(vocab_path)

examples = load_examples(manifest, vocab)
print(f"{len(examples)} documents, {sum(len(e.seqs) for e in examples)} statements")

encoder = EncoderConfig(
    vocab_size=len(vocab),
    hidden_dim=32,
    num_transformer_layers=1,
    num_attention_heads=2,
    num_gcn_layers=2,
    latent_dim=16,
    match_hidden_dim=32,
)
config = PretrainConfig(encoder=encoder, epochs=5, batch_size=4, learning_rate=1e-3, seed=0)

ckpt = OUT / "ckpt"
state = pretrain(config, examples, vocab_path, ckpt)
print("\nloss trajectory (mlm / gae / match / total):")
for rec in state.trainlog:
    print(
        f"  epoch {rec['epoch']:2d}: {rec['mlm']:.4f} / {rec['gae']:.4f} / "
        f"{rec['match']:.4f} / {rec['total']:.4f}"
    )

# same config with a higher epoch target resumes from the saved state
from dataclasses import replace

state = pretrain(replace(config, epochs=8), examples, vocab_path, ckpt, resume=True)
print(f"\nresumed to epoch {state.epoch_done}; checkpoint dir: {ckpt}")
for name in ("params.bin", "config.json", "vocab.sha256", "trainlog.jsonl"):
    size = (ckpt / name).stat().st_size
    print(f"  {name:15s} {size} bytes")
