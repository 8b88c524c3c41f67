"""Build typed program multi-graphs from IR text.

Every instruction, variable, and constant becomes a node; control flow,
dataflow, and call relations become typed edge sets that partition the
full edge list.
"""

from pathlib import Path

from mmir.ircorpus import ingest_ir_file
from mmir.irgraph import deserialize_graph, extract_subgraph, graph_from_text, serialize_graph
from mmir.irtok import train_tokenizer

ROOT = Path(__file__).resolve().parent.parent
OUT = Path(__file__).resolve().parent / "out"
OUT.mkdir(exist_ok=True)

kernels = sorted((ROOT / "data" / "kernels").glob("*.ll"))
docs = [ingest_ir_file(p) for p in kernels]
vocab = train_tokenizer(docs, vocab_size=2048, seed=0)

graph = graph_from_text((ROOT / "data" / "kernels" / "maxphi.ll").read_text(), vocab)
print(f"maxphi.ll -> {graph.num_nodes} nodes, {len(graph.edges)} edges")
for node in graph.nodes:
    print(f"  [{node.index}] {node.kind:11s} {node.text}")

print("\nedges by type:")
for etype in ("control", "data", "call"):
    sub = extract_subgraph(graph, etype)
    pairs = [(e.src, e.dst) for e in sub.edges]
    print(f"  {etype:7s} {len(pairs)}: {pairs}")

blob = serialize_graph(graph)
(OUT / "maxphi_graph.json").write_bytes(blob)
again = deserialize_graph(blob)
print(f"\nserialized to {len(blob)} bytes; round trip stable: {serialize_graph(again) == blob}")

print("\ncorpus-wide edge totals:")
totals = {"control": 0, "data": 0, "call": 0}
for doc in docs:
    g = graph_from_text(doc.raw_text, vocab)
    for e in g.edges:
        totals[e.etype] += 1
for etype, count in totals.items():
    print(f"  {etype:7s} {count}")
