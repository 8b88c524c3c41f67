"""Joint pretraining over the three objectives plus checkpoint plumbing.

Every epoch reseeds from (seed, epoch) and every step from (seed, epoch,
step), so training is a pure function of the config: interrupting after
any epoch and resuming reproduces the uninterrupted run bit-for-bit. The
checkpoint keeps model and optimizer tensors in a flat little-endian blob
(params.bin) so reruns can be compared byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .ircorpus import Manifest, ingest_ir_file
from .irgraph import deserialize_graph, graph_from_text
from .irtok import TokenSeq, Vocab, encode_statement
from .premodel import (
    EncoderConfig,
    GraphTensors,
    MatchPair,
    MultiModalEncoder,
    apply_mask,
    build_encoder,
    document_summary,
    gae_loss,
    graph_summary,
    graph_to_tensors,
    match_loss,
    plan_mask,
    seqs_to_tensors,
)

_MAGIC = b"MMPB\x01\n"


@dataclass
class PretrainConfig:
    encoder: EncoderConfig
    epochs: int = 10
    batch_size: int = 4
    learning_rate: float = 1e-3
    loss_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)  # (mlm, gae, match)
    mask_fraction: float = 0.15
    grad_clip: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.loss_weights = tuple(float(w) for w in self.loss_weights)
        if len(self.loss_weights) != 3 or any(w < 0 for w in self.loss_weights):
            raise ValueError("loss_weights must be three non-negative values")
        if not any(self.loss_weights):
            raise ValueError("loss_weights must not all be zero")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (matching needs mismatch partners)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    def to_dict(self) -> dict:
        return {
            "encoder": self.encoder.to_dict(),
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "loss_weights": list(self.loss_weights),
            "mask_fraction": self.mask_fraction,
            "grad_clip": self.grad_clip,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PretrainConfig":
        d = dict(d)
        d["encoder"] = EncoderConfig(**d["encoder"])
        d["loss_weights"] = tuple(d["loss_weights"])
        return cls(**d)


@dataclass
class PretrainExample:
    doc_id: str
    seqs: list[TokenSeq]
    graph: GraphTensors


def load_examples(
    manifest: Manifest,
    vocab: Vocab,
    split: str = "pretrain",
    graph_dir: Path | str | None = None,
    seq_len: int | None = None,
) -> list[PretrainExample]:
    """Materialize (statements, graph) pairs for a split, sorted by id.

    With graph_dir, graphs come from the JSON cache and a missing entry is
    an error; otherwise each document is parsed and built in memory.
    """
    from .irtok import SEQ_LEN

    seq_len = seq_len or SEQ_LEN
    out = []
    for entry in sorted(manifest.entries, key=lambda e: e.id):
        if entry.split != split:
            continue
        doc = ingest_ir_file(entry.path, doc_id=entry.id)
        seqs = [encode_statement(vocab, s, seq_len) for s in doc.statements]
        if graph_dir is not None:
            cache = Path(graph_dir) / f"{entry.id}.json"
            if not cache.exists():
                raise FileNotFoundError(f"graph cache missing for {entry.id}: {cache}")
            graph = deserialize_graph(cache.read_bytes())
        else:
            graph = graph_from_text(doc.raw_text, vocab, seq_len)
        out.append(PretrainExample(doc_id=entry.id, seqs=seqs, graph=graph_to_tensors(graph)))
    return out


# ------------------------------------------------------------- pair building

def plan_match_assignments(n: int, seed: int) -> list[tuple[int, int, int]]:
    """Per document i: (i, graph_index, label); label 0 means a swapped graph."""
    if n < 2:
        raise ValueError("matching needs at least 2 documents")
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        if rng.random() < 0.5:
            j = int(rng.integers(n - 1))
            j += j >= i
            out.append((i, j, 0))
        else:
            out.append((i, i, 1))
    return out


def make_match_pairs(
    summaries: list[torch.Tensor],
    graphs: list[GraphTensors],
    seed: int,
    ids: list[str] | None = None,
) -> list[MatchPair]:
    """One pair per document; half are swapped to a different document's graph."""
    if len(summaries) != len(graphs):
        raise ValueError("summaries and graphs must be parallel")
    ids = ids if ids is not None else [str(i) for i in range(len(summaries))]
    pairs = []
    for i, j, label in plan_match_assignments(len(summaries), seed):
        pairs.append(
            MatchPair(
                sequence_summary=summaries[i],
                graph=graphs[j],
                label=label,
                sequence_id=ids[i],
                graph_id=ids[j],
            )
        )
    return pairs


# ------------------------------------------------------------- training step

def pretrain_step(
    model: MultiModalEncoder,
    optimizer: torch.optim.Optimizer,
    batch: list[PretrainExample],
    config: PretrainConfig,
    epoch: int,
    step: int,
) -> dict[str, float]:
    """One joint update; returns the component and total losses."""
    rng = np.random.default_rng([config.seed, epoch, step])
    vocab_size = config.encoder.vocab_size

    # MLM over every statement of every document in the batch
    masked, rows, cols, targets = [], [], [], []
    for ex in batch:
        for seq in ex.seqs:
            plan = plan_mask(seq, int(rng.integers(2**31)), config.mask_fraction)
            masked.append(apply_mask(seq, plan, vocab_size, int(rng.integers(2**31))))
            r = len(masked) - 1
            rows.extend([r] * len(plan.positions))
            cols.extend(plan.positions.tolist())
            targets.extend(plan.originals.tolist())
    ids, mask = seqs_to_tensors(masked)
    logits = model.mlm_head(model.text_hidden(ids, mask))
    mlm = nn.functional.cross_entropy(
        logits[torch.tensor(rows), torch.tensor(cols)], torch.tensor(targets)
    )

    # GAE, averaged over the batch documents that have edges at all; a
    # single-instruction document has no positive pairs to reconstruct
    gae_terms = []
    for ex in batch:
        gae_seed = int(rng.integers(2**31))
        if any(int(e.numel()) for e in ex.graph.edge_sets.values()):
            gae_terms.append(gae_loss(model, ex.graph, gae_seed))
    gae = torch.stack(gae_terms).mean() if gae_terms else torch.zeros(())

    # IR-graph matching with half the pairs swapped
    summaries = [document_summary(model, ex.seqs) for ex in batch]
    gsummaries = [graph_summary(model, ex.graph) for ex in batch]
    assignments = plan_match_assignments(len(batch), int(rng.integers(2**31)))
    match_logits = torch.stack(
        [model.match_logit(summaries[i], gsummaries[j]) for i, j, _ in assignments]
    )
    labels = torch.tensor([float(label) for _, _, label in assignments])
    match = match_loss(match_logits, labels)

    w_mlm, w_gae, w_match = config.loss_weights
    total = w_mlm * mlm + w_gae * gae + w_match * match
    if not torch.isfinite(total):
        raise RuntimeError(
            f"non-finite loss at epoch {epoch} step {step}: "
            f"mlm={mlm.item()} gae={gae.item()} match={match.item()}"
        )

    optimizer.zero_grad(set_to_none=True)
    total.backward()
    nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
    optimizer.step()
    return {
        "mlm": float(mlm.item()),
        "gae": float(gae.item()),
        "match": float(match.item()),
        "total": float(total.item()),
    }


# ----------------------------------------------------------------- training

@dataclass
class CheckpointState:
    model: MultiModalEncoder
    optimizer: torch.optim.Optimizer
    config: PretrainConfig
    epoch_done: int
    trainlog: list[dict]
    vocab_sha: str
    path: Path | None = None
    vocab: Vocab | None = None


def sha256_file(path: Path | str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def pretrain(
    config: PretrainConfig,
    examples: list[PretrainExample],
    vocab_path: Path | str,
    out_dir: Path | str,
    resume: bool = False,
) -> CheckpointState:
    """Run (or resume) pretraining and leave a checkpoint in out_dir."""
    if not examples:
        raise ValueError("no pretraining examples")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vocab_sha = sha256_file(vocab_path)

    if resume and (out_dir / "params.bin").exists():
        state = load_checkpoint(out_dir, vocab_path=vocab_path)
        saved, wanted = state.config.to_dict(), config.to_dict()
        saved.pop("epochs"), wanted.pop("epochs")  # extending the run is the point
        if saved != wanted:
            raise ValueError("resume config does not match the saved checkpoint")
        model, optimizer = state.model, state.optimizer
        start_epoch, trainlog = state.epoch_done, state.trainlog
    else:
        model = build_encoder(config.encoder)
        optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
        start_epoch, trainlog = 0, []

    examples = sorted(examples, key=lambda e: e.doc_id)
    for epoch in range(start_epoch, config.epochs):
        perm = np.random.default_rng([config.seed, epoch]).permutation(len(examples))
        order = [examples[int(i)] for i in perm]
        sums = {"mlm": 0.0, "gae": 0.0, "match": 0.0, "total": 0.0}
        steps = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            if len(batch) < 2:
                continue  # a lone trailing document cannot form mismatch pairs
            record = pretrain_step(model, optimizer, batch, config, epoch, steps)
            for k in sums:
                sums[k] += record[k]
            steps += 1
        entry = {"epoch": epoch}
        entry.update({k: sums[k] / max(steps, 1) for k in ("mlm", "gae", "match", "total")})
        trainlog.append(entry)
        save_checkpoint(out_dir, model, optimizer, config, vocab_sha, trainlog, epoch + 1)

    if config.epochs == 0 or start_epoch >= config.epochs:
        save_checkpoint(out_dir, model, optimizer, config, vocab_sha, trainlog,
                        max(start_epoch, config.epochs))
    return CheckpointState(
        model=model, optimizer=optimizer, config=config,
        epoch_done=max(start_epoch, config.epochs), trainlog=trainlog,
        vocab_sha=vocab_sha, path=out_dir,
    )


# -------------------------------------------------------------- persistence

_DTYPES = {"float32": np.float32, "float64": np.float64, "int64": np.int64}


def _collect_tensors(model: nn.Module, optimizer: torch.optim.Optimizer) -> dict[str, torch.Tensor]:
    out = {f"model.{k}": v for k, v in model.state_dict().items()}
    for pidx, pstate in optimizer.state_dict()["state"].items():
        for key, val in pstate.items():
            if not isinstance(val, torch.Tensor):
                val = torch.tensor(float(val))
            out[f"optim.{pidx}.{key}"] = val
    return out


def _write_params(path: Path, tensors: dict[str, torch.Tensor]) -> None:
    entries = []
    blobs = []
    for name in sorted(tensors):
        arr = tensors[name].detach().cpu().numpy()
        if str(arr.dtype) not in _DTYPES:
            arr = arr.astype(np.float64)
        blob = np.ascontiguousarray(arr).tobytes()
        entries.append(
            {"name": name, "dtype": str(arr.dtype), "shape": list(arr.shape), "nbytes": len(blob)}
        )
        blobs.append(blob)
    header = json.dumps({"tensors": entries}, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def _read_params(path: Path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if not data.startswith(_MAGIC):
        raise ValueError(f"{path} is not a parameter blob")
    n = int.from_bytes(data[len(_MAGIC) : len(_MAGIC) + 8], "little")
    head = len(_MAGIC) + 8
    header = json.loads(data[head : head + n].decode())
    out = {}
    offset = head + n
    for entry in header["tensors"]:
        dtype = _DTYPES[entry["dtype"]]
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
        out[entry["name"]] = arr.reshape(entry["shape"]).copy()
        offset += entry["nbytes"]
    return out


def save_checkpoint(
    out_dir: Path | str,
    model: MultiModalEncoder,
    optimizer: torch.optim.Optimizer,
    config: PretrainConfig,
    vocab_sha: str,
    trainlog: list[dict],
    epoch_done: int,
) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    record = config.to_dict()
    record["epoch_done"] = epoch_done
    (out_dir / "config.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    (out_dir / "vocab.sha256").write_text(vocab_sha + "\n")
    with open(out_dir / "trainlog.jsonl", "w") as fh:
        for row in trainlog:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    _write_params(out_dir / "params.bin", _collect_tensors(model, optimizer))


def load_checkpoint(ckpt_dir: Path | str, vocab_path: Path | str | None = None) -> CheckpointState:
    """Rebuild model + optimizer from a checkpoint directory.

    With vocab_path, the file's sha256 must equal the recorded one; a
    mismatch means embeddings would silently disagree with training.
    """
    ckpt_dir = Path(ckpt_dir)
    record = json.loads((ckpt_dir / "config.json").read_text())
    epoch_done = record.pop("epoch_done")
    config = PretrainConfig.from_dict(record)
    vocab_sha = (ckpt_dir / "vocab.sha256").read_text().strip()
    vocab = None
    if vocab_path is not None:
        if sha256_file(vocab_path) != vocab_sha:
            raise ValueError(f"vocab hash mismatch: {vocab_path} is not the training vocab")
        vocab = Vocab.load(vocab_path)

    trainlog = []
    log_path = ckpt_dir / "trainlog.jsonl"
    if log_path.exists():
        for line in log_path.read_text().splitlines():
            if line.strip():
                trainlog.append(json.loads(line))

    tensors = _read_params(ckpt_dir / "params.bin")
    model = build_encoder(config.encoder)
    state = {
        k[len("model."):]: torch.from_numpy(v)
        for k, v in tensors.items()
        if k.startswith("model.")
    }
    model.load_state_dict(state)

    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    opt_state: dict[int, dict] = {}
    for name, arr in tensors.items():
        if not name.startswith("optim."):
            continue
        _, pidx, key = name.split(".", 2)
        opt_state.setdefault(int(pidx), {})[key] = torch.from_numpy(arr)
    if opt_state:
        sd = optimizer.state_dict()
        sd["state"] = opt_state
        optimizer.load_state_dict(sd)

    return CheckpointState(
        model=model, optimizer=optimizer, config=config, epoch_done=epoch_done,
        trainlog=trainlog, vocab_sha=vocab_sha, path=ckpt_dir, vocab=vocab,
    )
