"""Downstream auto-tuning harness on a synthetic device-mapping bundle.

Builds a labeled corpus whose CPU/GPU split is carried by both the IR and
the auxiliary features, embeds it with a fresh encoder, cross-validates the
prediction head, and then prices the frozen-versus-fine-tune tradeoff.
"""

from pathlib import Path

from mmir.bundles import make_devmap_bundle, make_devmap_documents, make_runtime_bundle
from mmir.irgraph import graph_from_text
from mmir.irtok import train_tokenizer
from mmir.premodel import EncoderConfig, build_encoder
from mmir.tasks import HeadConfig, TASKS, run_task, time_frozen_vs_finetune

OUT = Path(__file__).resolve().parent / "out"
OUT.mkdir(exist_ok=True)

docs, labels, _ = make_devmap_documents(120, seed=0)
vocab = train_tokenizer(docs, vocab_size=512, seed=0)
encoder = EncoderConfig(
    vocab_size=len(vocab),
    hidden_dim=32,
    num_transformer_layers=1,
    num_attention_heads=2,
    num_gcn_layers=2,
    latent_dim=16,
    match_hidden_dim=32,
)
model = build_encoder(encoder)

print("search spaces:")
for name, spec in TASKS.items():
    print(f"  {name:9s} {len(spec.label_space):3d} configs, {spec.cv_scheme}")

bundle = make_devmap_bundle(model, vocab, n=120, seed=0)
metrics = run_task(TASKS["devmap"], bundle, OUT / "devmap", seed=0,
                   head_config=HeadConfig(epochs=150))
print(f"\ndevmap 10-fold: accuracy {metrics.accuracy:.3f}, macro F1 {metrics.f1_macro:.3f}")
print(f"artifacts: {sorted(p.name for p in (OUT / 'devmap').iterdir())}")

runtime = make_runtime_bundle(model, vocab, "coarsen", n_programs=12, seed=1)
metrics = run_task(TASKS["coarsen"], runtime, OUT / "coarsen", seed=0,
                   head_config=HeadConfig(epochs=150))
print(f"\ncoarsen leave-one-out: accuracy {metrics.accuracy:.3f}")
print(f"geometric-mean speedup {metrics.geometric_mean_speedup:.3f} "
      f"(oracle ceiling {metrics.oracle_geometric_mean:.3f})")
print(f"mean error rate vs oracle {metrics.mean_error_rate:.3f}")

timing_docs, timing_labels, _ = make_devmap_documents(8, seed=3)
tv = train_tokenizer(timing_docs, vocab_size=512)
tmodel = build_encoder(EncoderConfig(
    vocab_size=len(tv), hidden_dim=16, num_transformer_layers=1,
    num_attention_heads=2, num_gcn_layers=2, latent_dim=8, match_hidden_dim=16,
))
graphs = [graph_from_text(d.raw_text, tv) for d in timing_docs]
report = time_frozen_vs_finetune(tmodel, tv, timing_docs, graphs, timing_labels,
                                 ["CPU", "GPU"], epochs=20)
print(f"\nfrozen head: {report['frozen_seconds']:.2f}s for {report['epochs']} epochs")
print(f"fine-tuning: {report['finetune_seconds']:.2f}s ({report['ratio']:.1f}x the cost)")
