"""Two-modality encoder networks and the three pretraining objectives.

Text modality: token + position embeddings into a standard transformer
encoder; masked-language-model head over the vocabulary. Graph modality:
GCN stack over a typed subgraph (self-loops, symmetric degree
normalization) ending in a latent node matrix Z; edges are reconstructed
by the inner-product decoder sigmoid(Zi . Zj). A small MLP scores whether
a sequence summary and a graph summary come from the same file.

All randomness enters through explicit integer seeds; dropout is zero so
repeated forward passes are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .irgraph import EDGE_TYPES, ProGraph
from .irtok import MASK_ID, PAD_ID, TokenSeq

ETYPE_MODES = EDGE_TYPES + ("all",)
MASK, RANDOM, KEEP = "MASK", "RANDOM", "KEEP"
NUM_SPECIAL = 5  # ids below this are never drawn as RANDOM replacements


@dataclass
class EncoderConfig:
    vocab_size: int
    hidden_dim: int = 128
    num_transformer_layers: int = 2
    num_attention_heads: int = 4
    num_gcn_layers: int = 2
    latent_dim: int = 64
    match_hidden_dim: int = 128
    max_seq_len: int = 64
    seed: int = 0

    def __post_init__(self):
        dims = (
            self.vocab_size, self.hidden_dim, self.num_transformer_layers,
            self.num_attention_heads, self.num_gcn_layers, self.latent_dim,
            self.match_hidden_dim, self.max_seq_len,
        )
        if any(d < 1 for d in dims):
            raise ValueError("all dimensions must be >= 1")
        if self.hidden_dim % self.num_attention_heads:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} not divisible by "
                f"num_attention_heads {self.num_attention_heads}"
            )

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "hidden_dim": self.hidden_dim,
            "num_transformer_layers": self.num_transformer_layers,
            "num_attention_heads": self.num_attention_heads,
            "num_gcn_layers": self.num_gcn_layers,
            "latent_dim": self.latent_dim,
            "match_hidden_dim": self.match_hidden_dim,
            "max_seq_len": self.max_seq_len,
            "seed": self.seed,
        }


@dataclass
class MaskPlan:
    positions: np.ndarray  # strictly increasing body positions
    actions: list[str]  # parallel, each MASK / RANDOM / KEEP
    originals: np.ndarray  # parallel, the uncorrupted ids

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.int64)
        self.originals = np.asarray(self.originals, dtype=np.int64)
        if not (len(self.positions) == len(self.actions) == len(self.originals)):
            raise ValueError("positions, actions, originals must be parallel")
        if np.any(np.diff(self.positions) <= 0):
            raise ValueError("positions must be strictly increasing")
        bad = set(self.actions) - {MASK, RANDOM, KEEP}
        if bad:
            raise ValueError(f"unknown actions: {sorted(bad)}")


@dataclass
class MatchPair:
    sequence_summary: torch.Tensor
    graph: "GraphTensors"
    label: int  # 1 = match, 0 = mismatch
    sequence_id: str = ""
    graph_id: str = ""


class _GCNLayer(nn.Module):
    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.lin = nn.Linear(in_dim, out_dim)

    def forward(self, x: torch.Tensor, norm_adj: torch.Tensor) -> torch.Tensor:
        return norm_adj @ self.lin(x)


class MultiModalEncoder(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        h = config.hidden_dim
        self.token_embedding = nn.Embedding(config.vocab_size, h, padding_idx=PAD_ID)
        self.position_embedding = nn.Embedding(config.max_seq_len, h)
        layer = nn.TransformerEncoderLayer(
            d_model=h,
            nhead=config.num_attention_heads,
            dim_feedforward=4 * h,
            dropout=0.0,
            activation="gelu",
            batch_first=True,
        )
        self.transformer = nn.TransformerEncoder(layer, config.num_transformer_layers)
        self.mlm_head = nn.Linear(h, config.vocab_size)
        widths = [h] * config.num_gcn_layers + [config.latent_dim]
        self.gcn_layers = nn.ModuleList(
            _GCNLayer(widths[i], widths[i + 1]) for i in range(config.num_gcn_layers)
        )
        self.match_head = nn.Sequential(
            nn.Linear(h + config.latent_dim, config.match_hidden_dim),
            nn.ReLU(),
            nn.Linear(config.match_hidden_dim, 1),
        )

    # ------------------------------------------------------------ text side

    def text_hidden(self, ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        """Transformer hidden states [B, L, H]; PAD positions never attend."""
        if ids.dim() == 1:
            ids, attention_mask = ids.unsqueeze(0), attention_mask.unsqueeze(0)
        if ids.shape[1] != self.config.max_seq_len:
            raise ValueError(
                f"sequence length {ids.shape[1]} != configured {self.config.max_seq_len}"
            )
        pos = torch.arange(ids.shape[1], device=ids.device)
        x = self.token_embedding(ids) + self.position_embedding(pos)
        return self.transformer(x, src_key_padding_mask=attention_mask == 0)

    def cls_embedding(self, ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        """CLS-position hidden state [B, H]."""
        return self.text_hidden(ids, attention_mask)[:, 0]

    # ----------------------------------------------------------- graph side

    def node_features(self, ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        """Masked mean of token embeddings over each node's text [N, H]."""
        e = self.token_embedding(ids)
        m = attention_mask.unsqueeze(-1).to(e.dtype)
        return (e * m).sum(1) / m.sum(1).clamp(min=1.0)

    def gcn_forward(self, x: torch.Tensor, norm_adj: torch.Tensor) -> torch.Tensor:
        for i, layer in enumerate(self.gcn_layers):
            x = layer(x, norm_adj)
            if i + 1 < len(self.gcn_layers):
                x = F.relu(x)
        return x

    def match_logit(self, sequence_summary: torch.Tensor, graph_summary: torch.Tensor) -> torch.Tensor:
        expected = self.config.hidden_dim + self.config.latent_dim
        joint = torch.cat([sequence_summary, graph_summary], dim=-1)
        if joint.shape[-1] != expected:
            raise ValueError(f"match input width {joint.shape[-1]} != {expected}")
        return self.match_head(joint).squeeze(-1)


def build_encoder(config: EncoderConfig) -> MultiModalEncoder:
    """Construct the encoder with parameters drawn deterministically from config.seed."""
    with torch.random.fork_rng():
        torch.manual_seed(config.seed)
        return MultiModalEncoder(config)


def param_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


# ------------------------------------------------------------- graph tensors

@dataclass
class GraphTensors:
    """ProGraph lowered to tensors plus normalized adjacencies per edge mode."""

    ids: torch.Tensor  # [N, L] int64
    attention_mask: torch.Tensor  # [N, L] int64
    edge_sets: dict[str, torch.Tensor]  # etype -> [E, 2] int64 (src, dst)
    norm_adj: dict[str, torch.Tensor] = field(default_factory=dict)  # mode -> [N, N]

    @property
    def num_nodes(self) -> int:
        return int(self.ids.shape[0])


def _normalize_adjacency(n: int, edges: torch.Tensor) -> torch.Tensor:
    a = torch.zeros((n, n))
    if edges.numel():
        a[edges[:, 0], edges[:, 1]] = 1.0
    a = torch.maximum(a, a.T)  # undirected propagation
    a += torch.eye(n)
    d = a.sum(1).pow(-0.5)
    return a * d.unsqueeze(1) * d.unsqueeze(0)


def graph_to_tensors(graph: ProGraph) -> GraphTensors:
    if not graph.nodes:
        raise ValueError("graph has no nodes")
    ids = torch.from_numpy(np.stack([n.feature.ids for n in graph.nodes]))
    mask = torch.from_numpy(np.stack([n.feature.attention_mask for n in graph.nodes]))
    n = len(graph.nodes)
    edge_sets = {}
    for etype in EDGE_TYPES:
        pairs = [(e.src, e.dst) for e in graph.edges_of(etype)]
        edge_sets[etype] = torch.tensor(pairs, dtype=torch.int64).reshape(-1, 2)
    gt = GraphTensors(ids=ids, attention_mask=mask, edge_sets=edge_sets)
    for mode in ETYPE_MODES:
        if mode == "all":
            edges = torch.cat(list(edge_sets.values()), dim=0)
        else:
            edges = edge_sets[mode]
        gt.norm_adj[mode] = _normalize_adjacency(n, edges)
    return gt


# -------------------------------------------------------------------- masking

def plan_mask(seq: TokenSeq, seed: int, fraction: float = 0.15) -> MaskPlan:
    """Select round(fraction * body_length) body positions (at least one).

    Each selected position independently gets MASK with p=0.8, RANDOM with
    p=0.1, KEEP with p=0.1. Deterministic under seed.
    """
    n = seq.body_length
    if n < 1:
        raise ValueError("cannot plan a mask for an empty body")
    k = max(1, int(fraction * n + 0.5))
    rng = np.random.default_rng(seed)
    positions = np.sort(rng.choice(seq.body_positions(), size=k, replace=False))
    draws = rng.random(k)
    actions = [MASK if u < 0.8 else RANDOM if u < 0.9 else KEEP for u in draws]
    return MaskPlan(positions=positions, actions=actions, originals=seq.ids[positions])


def apply_mask(seq: TokenSeq, plan: MaskPlan, vocab_size: int, seed: int) -> TokenSeq:
    """Corrupt seq according to plan; RANDOM draws a uniform non-special id."""
    body = seq.body_positions()
    if not np.all(np.isin(plan.positions, body)):
        raise ValueError("plan positions fall outside the sequence body")
    if not np.array_equal(seq.ids[plan.positions], plan.originals):
        raise ValueError("plan originals do not match the sequence")
    rng = np.random.default_rng(seed)
    ids = seq.ids.copy()
    for pos, action in zip(plan.positions, plan.actions):
        if action == MASK:
            ids[pos] = MASK_ID
        elif action == RANDOM:
            ids[pos] = int(rng.integers(NUM_SPECIAL, vocab_size))
    return TokenSeq(ids=ids, attention_mask=seq.attention_mask.copy())


# ------------------------------------------------------------------ MLM loss

def mlm_forward(model: MultiModalEncoder, seq: TokenSeq) -> torch.Tensor:
    """Per-position vocabulary logits [L, V] for one (masked) sequence."""
    ids = torch.from_numpy(seq.ids)
    mask = torch.from_numpy(seq.attention_mask)
    return model.mlm_head(model.text_hidden(ids, mask))[0]


def mlm_loss(logits: torch.Tensor, plan: MaskPlan) -> torch.Tensor:
    """Mean cross-entropy over the planned positions only."""
    if len(plan.positions) == 0:
        raise ValueError("empty mask plan")
    pos = torch.from_numpy(plan.positions)
    targets = torch.from_numpy(plan.originals)
    return F.cross_entropy(logits[pos], targets)


# ------------------------------------------------------------------ GAE loss

def gae_encode(model: MultiModalEncoder, gt: GraphTensors, etype_mode: str) -> torch.Tensor:
    """Node latent matrix Z [N, latent_dim] from GCN propagation over one mode."""
    if etype_mode not in ETYPE_MODES:
        raise ValueError(f"etype_mode must be one of {ETYPE_MODES}, got {etype_mode!r}")
    if gt.num_nodes == 0:
        raise ValueError("empty node set")
    x = model.node_features(gt.ids, gt.attention_mask)
    return model.gcn_forward(x, gt.norm_adj[etype_mode])


def gae_decode(z: torch.Tensor, i: int, j: int) -> torch.Tensor:
    """Edge probability sigmoid(Z[i] . Z[j])."""
    n = z.shape[0]
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"node index out of range for {n} nodes: ({i}, {j})")
    return torch.sigmoid(z[i] @ z[j])


def _undirected_pairs(edges: torch.Tensor) -> set[tuple[int, int]]:
    return {(min(int(s), int(d)), max(int(s), int(d))) for s, d in edges.tolist()}


def sample_negative_pairs(
    n: int, positives: set[tuple[int, int]], k: int, rng: np.random.Generator
) -> list[tuple[int, int]]:
    """k uniformly sampled unordered non-edge pairs (i < j, no self pairs)."""
    complement = [
        (i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in positives
    ]
    if not complement:
        return []
    idx = rng.choice(len(complement), size=k, replace=len(complement) < k)
    return [complement[int(t)] for t in np.atleast_1d(idx)]


def gae_loss(model: MultiModalEncoder, gt: GraphTensors, seed: int = 0) -> torch.Tensor:
    """Sum over typed subgraphs of BCE on positive edges vs sampled non-edges.

    For each edge type with at least one edge the graph is re-encoded over
    that subgraph; positives are its unordered edge pairs, negatives an
    equal count of uniformly sampled absent pairs. The per-type means are
    summed so one backward pass covers the aggregate.
    """
    rng = np.random.default_rng(seed)
    total = None
    for etype in EDGE_TYPES:
        edges = gt.edge_sets[etype]
        if edges.numel() == 0:
            continue
        z = gae_encode(model, gt, etype)
        pos = sorted(_undirected_pairs(edges))
        neg = sample_negative_pairs(gt.num_nodes, set(pos), len(pos), rng)
        pairs = pos + neg
        ii = torch.tensor([p[0] for p in pairs])
        jj = torch.tensor([p[1] for p in pairs])
        logits = (z[ii] * z[jj]).sum(-1)
        labels = torch.cat([torch.ones(len(pos)), torch.zeros(len(neg))]).to(logits.dtype)
        term = F.binary_cross_entropy_with_logits(logits, labels)
        total = term if total is None else total + term
    if total is None:
        raise ValueError("graph has no edges in any subgraph")
    return total


# ------------------------------------------------------------------ matching

def aggregate_statement_embeddings(vectors) -> torch.Tensor:
    """Element-wise arithmetic mean of equal-width vectors."""
    if isinstance(vectors, torch.Tensor):
        if vectors.numel() == 0:
            raise ValueError("no vectors to aggregate")
        return vectors.mean(dim=0)
    vectors = list(vectors)
    if not vectors:
        raise ValueError("no vectors to aggregate")
    if isinstance(vectors[0], torch.Tensor):
        return torch.stack(vectors).mean(dim=0)
    return np.stack(vectors).mean(axis=0)


def graph_summary(model: MultiModalEncoder, gt: GraphTensors) -> torch.Tensor:
    """Mean-pooled node latents from the all-edges subgraph."""
    return gae_encode(model, gt, "all").mean(dim=0)


def match_forward(model: MultiModalEncoder, pair: MatchPair) -> torch.Tensor:
    """Probability that the sequence summary and graph share a source file."""
    return torch.sigmoid(match_logit_for_pair(model, pair))


def match_logit_for_pair(model: MultiModalEncoder, pair: MatchPair) -> torch.Tensor:
    return model.match_logit(pair.sequence_summary, graph_summary(model, pair.graph))


def match_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Binary cross-entropy on match logits."""
    return F.binary_cross_entropy_with_logits(logits, labels.to(logits.dtype))


# ------------------------------------------------------------------- helpers

def seqs_to_tensors(seqs: list[TokenSeq]) -> tuple[torch.Tensor, torch.Tensor]:
    ids = torch.from_numpy(np.stack([s.ids for s in seqs]))
    mask = torch.from_numpy(np.stack([s.attention_mask for s in seqs]))
    return ids, mask


def document_summary(model: MultiModalEncoder, seqs: list[TokenSeq]) -> torch.Tensor:
    """Mean of per-statement CLS hidden states [H]."""
    ids, mask = seqs_to_tensors(seqs)
    return aggregate_statement_embeddings(model.cls_embedding(ids, mask))
