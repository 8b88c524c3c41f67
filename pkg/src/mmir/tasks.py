"""Downstream auto-tuning harness over frozen embeddings.

Task definitions carry their full search spaces; predictions come from a
three-layer MLP head trained per cross-validation fold on [embedding ++
standardized aux features]. Metrics cover classification (accuracy, F1)
and runtime-table tasks (speedup over a baseline config, geometric mean,
relative error against the oracle config).
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

MAX_VF = 64
MAX_IF = 16
VF_VALUES = (1, 2, 4, 8, 16, 32, 64)
IF_VALUES = (1, 2, 4, 8, 16)
COARSEN_FACTORS = (1, 2, 4, 8, 16, 32)
OMP_POWER = (75, 100, 120, 150)
OMP_THREADS = (1, 4, 8, 16, 32, 64)
OMP_SCHEDULE = ("STATIC", "DYNAMIC", "GUIDED")
OMP_CHUNK = (1, 8, 32, 64, 128, 256, 512)
NUMA_CONFIGS = 13
CUDA_MATRIX_SIZES = (240, 496, 784, 1016, 1232, 1680, 2024)
CUDA_BLOCK_SHAPES = (
    (8, 8), (16, 16), (24, 24), (32, 32),
    (1, 64), (1, 128), (1, 192), (1, 256), (1, 320), (1, 384), (1, 448),
    (1, 512), (1, 576), (1, 640), (1, 704), (1, 768), (1, 832), (1, 896),
    (1, 960), (1, 1024),
)


@dataclass(frozen=True)
class TaskSpec:
    name: str
    label_space: tuple[str, ...]
    aux_feature_names: tuple[str, ...]
    cv_scheme: str  # "stratified_kfold" or "leave_one_out"
    k: int = 10
    needs_runtime: bool = False

    def __post_init__(self):
        if not self.label_space:
            raise ValueError("label_space must be non-empty")
        if len(set(self.label_space)) != len(self.label_space):
            raise ValueError("label_space entries must be unique")


def _build_tasks() -> dict[str, TaskSpec]:
    vectorize = tuple(f"vf{v}_if{i}" for v in VF_VALUES for i in IF_VALUES)
    omp = tuple(
        f"p{p}_t{t}_{s}_c{c}"
        for p in OMP_POWER
        for t in OMP_THREADS
        for s in OMP_SCHEDULE
        for c in OMP_CHUNK
    )
    cudablock = tuple(
        f"m{m}_b{x}x{y}" for m in CUDA_MATRIX_SIZES for (x, y) in CUDA_BLOCK_SHAPES
    )
    return {
        "devmap": TaskSpec(
            name="devmap",
            label_space=("CPU", "GPU"),
            aux_feature_names=("transfer_size", "workgroup_size"),
            cv_scheme="stratified_kfold",
            k=10,
        ),
        "coarsen": TaskSpec(
            name="coarsen",
            label_space=tuple(str(f) for f in COARSEN_FACTORS),
            aux_feature_names=(),
            cv_scheme="leave_one_out",
            needs_runtime=True,
        ),
        "vectorize": TaskSpec(
            name="vectorize",
            label_space=vectorize,
            aux_feature_names=(),
            cv_scheme="stratified_kfold",
            k=10,
            needs_runtime=True,
        ),
        "omp": TaskSpec(
            name="omp",
            label_space=omp,
            aux_feature_names=(),
            cv_scheme="stratified_kfold",
            k=10,
            needs_runtime=True,
        ),
        "numa": TaskSpec(
            name="numa",
            label_space=tuple(f"numa_{i:02d}" for i in range(NUMA_CONFIGS)),
            aux_feature_names=(),
            cv_scheme="stratified_kfold",
            k=10,
            needs_runtime=True,
        ),
        "cudablock": TaskSpec(
            name="cudablock",
            label_space=cudablock,
            aux_feature_names=(),
            cv_scheme="stratified_kfold",
            k=10,
            needs_runtime=True,
        ),
    }


TASKS = _build_tasks()


# ------------------------------------------------------------ runtime tables

@dataclass
class RuntimeTable:
    runtimes: dict[tuple[str, str], float] = field(default_factory=dict)
    config_order: list[str] = field(default_factory=list)
    baselines: dict[str, str] = field(default_factory=dict)

    def add(self, program_id: str, config_id: str, runtime: float) -> None:
        if runtime <= 0:
            raise ValueError(f"runtime must be positive: {program_id}/{config_id}={runtime}")
        key = (program_id, config_id)
        if key in self.runtimes:
            raise ValueError(f"duplicate runtime row {key}")
        self.runtimes[key] = float(runtime)
        if config_id not in self.config_order:
            self.config_order.append(config_id)

    def runtime(self, program_id: str, config_id: str) -> float:
        try:
            return self.runtimes[(program_id, config_id)]
        except KeyError:
            raise KeyError(f"no runtime for program {program_id!r} config {config_id!r}") from None

    def program_ids(self) -> list[str]:
        return sorted({p for p, _ in self.runtimes})

    def configs_for(self, program_id: str) -> list[str]:
        present = {c for p, c in self.runtimes if p == program_id}
        return [c for c in self.config_order if c in present]

    def save(self, path: Path | str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("program_id,config_id,runtime_seconds\n")
            for (p, c), t in sorted(self.runtimes.items()):
                fh.write(f"{p},{c},{t:.9g}\n")

    @classmethod
    def load(cls, path: Path | str) -> "RuntimeTable":
        table = cls()
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or lines[0].split(",")[:2] != ["program_id", "config_id"]:
            raise ValueError(f"{path} is not a runtime table")
        for line in lines[1:]:
            if not line.strip():
                continue
            p, c, t = line.split(",")
            table.add(p, c, float(t))
        return table


def oracle_config(table: RuntimeTable, program_id: str) -> str:
    """Config with the minimum runtime; ties go to the earliest config."""
    configs = table.configs_for(program_id)
    if not configs:
        raise KeyError(f"no rows for program {program_id!r}")
    return min(configs, key=lambda c: (table.runtime(program_id, c), table.config_order.index(c)))


def compute_speedup(table: RuntimeTable, baseline_config: str, predicted: str, program_id: str) -> float:
    return table.runtime(program_id, baseline_config) / table.runtime(program_id, predicted)


def compute_error_rate(table: RuntimeTable, predicted: str, program_id: str) -> float:
    """Relative runtime gap (t_pred - t_best) / t_best; zero at the oracle."""
    best = table.runtime(program_id, oracle_config(table, program_id))
    return (table.runtime(program_id, predicted) - best) / best


def geometric_mean(values) -> float:
    values = np.asarray(list(values), dtype=np.float64)
    if values.size == 0:
        raise ValueError("geometric mean of nothing")
    if np.any(values <= 0):
        raise ValueError("geometric mean requires strictly positive values")
    return float(np.exp(np.mean(np.log(values))))


# -------------------------------------------------------------------- folds

@dataclass
class FoldSpec:
    folds: list[list[str]]
    scheme: str

    def __post_init__(self):
        flat = [i for fold in self.folds for i in fold]
        if len(flat) != len(set(flat)):
            raise ValueError("folds overlap")

    @property
    def k(self) -> int:
        return len(self.folds)

    def split(self, fold_index: int) -> tuple[list[str], list[str]]:
        test = list(self.folds[fold_index])
        train = [i for f, fold in enumerate(self.folds) for i in fold if f != fold_index]
        return train, test


def make_folds(sample_ids: list[str], labels: list[str], k: int, seed: int) -> FoldSpec:
    """Stratified k-fold partition, deterministic under seed.

    Per-class counts differ by at most one across folds; classes with fewer
    than k samples trigger a warning and are spread best-effort.
    """
    if k > len(sample_ids):
        raise ValueError(f"k={k} exceeds {len(sample_ids)} samples")
    if len(sample_ids) != len(labels):
        raise ValueError("sample_ids and labels must be parallel")
    by_class: dict[str, list[str]] = {}
    for sid, lab in zip(sample_ids, labels):
        by_class.setdefault(lab, []).append(sid)
    rng = np.random.default_rng(seed)
    folds: list[list[str]] = [[] for _ in range(k)]
    offset = 0
    for lab in sorted(by_class):
        ids = sorted(by_class[lab])
        if len(ids) < k:
            warnings.warn(
                f"class {lab!r} has {len(ids)} samples for {k} folds; stratification is best-effort",
                stacklevel=2,
            )
        order = rng.permutation(len(ids))
        for pos, idx in enumerate(order):
            folds[(offset + pos) % k].append(ids[int(idx)])
        offset = (offset + len(ids)) % k
    return FoldSpec(folds=folds, scheme=f"stratified_kfold({k})")


def leave_one_out_folds(program_ids: list[str]) -> FoldSpec:
    if len(program_ids) < 2:
        raise ValueError("leave-one-out needs at least 2 programs")
    return FoldSpec(folds=[[p] for p in sorted(program_ids)], scheme="leave_one_out")


def reduced_data_subsample(train_ids: list[str], fraction: float, seed: int) -> list[str]:
    """Uniform subsample of the training ids; validation ids are untouched."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return list(train_ids)
    k = int(len(train_ids) * fraction + 0.5)
    if k == 0:
        raise ValueError(f"fraction {fraction} of {len(train_ids)} ids leaves nothing")
    idx = np.random.default_rng(seed).choice(len(train_ids), size=k, replace=False)
    return [train_ids[i] for i in sorted(int(i) for i in idx)]


# --------------------------------------------------------------------- heads

@dataclass
class HeadConfig:
    hidden_dim: int = 64
    epochs: int = 300
    learning_rate: float = 1e-2
    weight_decay: float = 1e-4


@dataclass
class TrainedHead:
    net: nn.Module
    label_space: tuple[str, ...]
    aux_mean: np.ndarray
    aux_std: np.ndarray
    feature_dim: int


def _head_net(in_dim: int, hidden: int, n_classes: int) -> nn.Module:
    return nn.Sequential(
        nn.Linear(in_dim, hidden),
        nn.ReLU(),
        nn.Linear(hidden, hidden),
        nn.ReLU(),
        nn.Linear(hidden, n_classes),
    )


def _standardize(aux: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (aux - mean) / std


def train_head(
    features: np.ndarray,
    aux_features: np.ndarray | None,
    labels: list[str],
    label_space: tuple[str, ...],
    config: HeadConfig,
    seed: int,
) -> TrainedHead:
    """Fit the three-layer MLP on [embedding ++ z-scored aux]; deterministic.

    Aux standardization statistics come from these (training) rows only, so
    the head can be applied to unseen rows without leakage.
    """
    features = np.asarray(features, dtype=np.float32)
    if aux_features is None:
        aux_features = np.zeros((len(features), 0), dtype=np.float32)
    aux_features = np.asarray(aux_features, dtype=np.float32)
    unknown = set(labels) - set(label_space)
    if unknown:
        raise ValueError(f"labels outside the label space: {sorted(unknown)[:5]}")

    if aux_features.shape[1]:
        aux_mean = aux_features.mean(axis=0)
        aux_std = aux_features.std(axis=0)
        aux_std[aux_std == 0] = 1.0
    else:
        aux_mean = np.zeros(0, dtype=np.float32)
        aux_std = np.ones(0, dtype=np.float32)
    x = np.concatenate([features, _standardize(aux_features, aux_mean, aux_std)], axis=1)
    y = np.asarray([label_space.index(l) for l in labels], dtype=np.int64)

    with torch.random.fork_rng():
        torch.manual_seed(seed)
        net = _head_net(x.shape[1], config.hidden_dim, len(label_space))
    xt = torch.from_numpy(x)
    yt = torch.from_numpy(y)
    opt = torch.optim.Adam(net.parameters(), lr=config.learning_rate,
                           weight_decay=config.weight_decay)
    for _ in range(config.epochs):
        opt.zero_grad(set_to_none=True)
        loss = nn.functional.cross_entropy(net(xt), yt)
        loss.backward()
        opt.step()
    net.eval()
    return TrainedHead(net=net, label_space=tuple(label_space), aux_mean=aux_mean,
                       aux_std=aux_std, feature_dim=x.shape[1])


def head_logits(head: TrainedHead, features: np.ndarray, aux_features: np.ndarray | None) -> np.ndarray:
    features = np.atleast_2d(np.asarray(features, dtype=np.float32))
    if aux_features is None:
        aux_features = np.zeros((len(features), 0), dtype=np.float32)
    aux_features = np.atleast_2d(np.asarray(aux_features, dtype=np.float32))
    aux = _standardize(aux_features, head.aux_mean, head.aux_std)
    x = np.concatenate([features, aux], axis=1)
    if x.shape[1] != head.feature_dim:
        raise ValueError(f"feature width {x.shape[1]} != trained width {head.feature_dim}")
    with torch.no_grad():
        return head.net(torch.from_numpy(x.astype(np.float32))).numpy()


def predict_config(head: TrainedHead, features: np.ndarray, aux_features=None) -> str | list[str]:
    """Argmax label; exact ties resolve to the lowest label index."""
    logits = head_logits(head, features, aux_features)
    picks = [head.label_space[int(np.argmax(row))] for row in logits]
    return picks[0] if np.asarray(features).ndim == 1 else picks


# ------------------------------------------------------------------- metrics

@dataclass
class Metrics:
    task: str
    accuracy: float
    f1_binary: float | None
    f1_macro: float
    per_fold_accuracy: list[float]
    speedups: dict[str, float] = field(default_factory=dict)
    geometric_mean_speedup: float | None = None
    oracle_geometric_mean: float | None = None
    error_rates: dict[str, float] = field(default_factory=dict)
    mean_error_rate: float | None = None
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "accuracy": self.accuracy,
            "f1_binary": self.f1_binary,
            "f1_macro": self.f1_macro,
            "per_fold_accuracy": self.per_fold_accuracy,
            "speedups": self.speedups,
            "geometric_mean_speedup": self.geometric_mean_speedup,
            "oracle_geometric_mean": self.oracle_geometric_mean,
            "error_rates": self.error_rates,
            "mean_error_rate": self.mean_error_rate,
            "summary": self.summary,
        }


def binary_f1(y_true: list[str], y_pred: list[str], positive: str) -> float:
    tp = sum(t == positive and p == positive for t, p in zip(y_true, y_pred))
    fp = sum(t != positive and p == positive for t, p in zip(y_true, y_pred))
    fn = sum(t == positive and p != positive for t, p in zip(y_true, y_pred))
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def macro_f1(y_true: list[str], y_pred: list[str]) -> float:
    """Mean of per-class F1 over the classes present in the true labels."""
    classes = sorted(set(y_true))
    return float(np.mean([binary_f1(y_true, y_pred, c) for c in classes]))


def accuracy(y_true: list[str], y_pred: list[str]) -> float:
    if not y_true:
        raise ValueError("empty evaluation set")
    return sum(t == p for t, p in zip(y_true, y_pred)) / len(y_true)


# ------------------------------------------------------------------ bundles

@dataclass
class TaskBundle:
    """Everything run_task reads: per-sample features, labels, aux, runtimes."""

    sample_ids: list[str]
    program_ids: dict[str, str]  # sample -> program (for runtime lookups)
    labels: dict[str, str]
    embeddings: dict[str, np.ndarray]
    aux: dict[str, np.ndarray]
    runtime_table: RuntimeTable | None = None


def load_labels_csv(path: Path | str, aux_names: tuple[str, ...]) -> tuple[list[str], dict, dict, dict]:
    """Read "sample_id,program_id,label,aux..." rows; aux column order must match."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    head = lines[0].split(",")
    expected = ["sample_id", "program_id", "label", *aux_names]
    if head != expected:
        raise ValueError(f"labels header {head} != expected {expected}")
    sample_ids, programs, labels, aux = [], {}, {}, {}
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split(",")
        sid, pid, lab = parts[:3]
        sample_ids.append(sid)
        programs[sid] = pid
        labels[sid] = lab
        aux[sid] = np.asarray([float(v) for v in parts[3:]], dtype=np.float32)
    return sample_ids, programs, labels, aux


def run_task(
    spec: TaskSpec,
    bundle: TaskBundle,
    out_dir: Path | str,
    seed: int = 0,
    head_config: HeadConfig | None = None,
    reduced_fraction: float | None = None,
    k_override: int | None = None,
) -> Metrics:
    """Cross-validated evaluation of a frozen-embedding head on one task.

    Trains a fresh head per fold (fold-derived seeds), aggregates accuracy
    and F1, and, when the task has a runtime table, per-program speedups
    over the recorded baselines plus error rates against the oracle.
    Writes metrics.json, folds.csv, and a bar plot into out_dir.
    """
    head_config = head_config or HeadConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if spec.needs_runtime and bundle.runtime_table is None:
        raise ValueError(f"task {spec.name} needs a runtime table")
    ids = list(bundle.sample_ids)
    labels = [bundle.labels[i] for i in ids]
    unknown = set(labels) - set(spec.label_space)
    if unknown:
        raise ValueError(f"labels outside {spec.name} label space: {sorted(unknown)[:5]}")

    if spec.cv_scheme == "leave_one_out":
        folds = leave_one_out_folds(ids)
    else:
        k = k_override or spec.k
        folds = make_folds(ids, labels, k, seed)

    predictions: dict[str, str] = {}
    per_fold_acc = []
    for f in range(folds.k):
        train_ids, test_ids = folds.split(f)
        if reduced_fraction is not None:
            train_ids = reduced_data_subsample(train_ids, reduced_fraction, seed + f)
        head = train_head(
            np.stack([bundle.embeddings[i] for i in train_ids]),
            np.stack([bundle.aux[i] for i in train_ids]) if bundle.aux else None,
            [bundle.labels[i] for i in train_ids],
            spec.label_space,
            head_config,
            seed=seed * 1000 + f,
        )
        preds = predict_config(
            head,
            np.stack([bundle.embeddings[i] for i in test_ids]),
            np.stack([bundle.aux[i] for i in test_ids]) if bundle.aux else None,
        )
        for sid, pred in zip(test_ids, preds):
            predictions[sid] = pred
        per_fold_acc.append(accuracy([bundle.labels[i] for i in test_ids], preds))

    y_true = [bundle.labels[i] for i in ids]
    y_pred = [predictions[i] for i in ids]
    f1b = binary_f1(y_true, y_pred, spec.label_space[1]) if len(spec.label_space) == 2 else None

    speedups: dict[str, float] = {}
    error_rates: dict[str, float] = {}
    oracle_speedups: dict[str, float] = {}
    if bundle.runtime_table is not None:
        table = bundle.runtime_table
        for sid in ids:
            pid = bundle.program_ids[sid]
            pred = predictions[sid]
            error_rates[sid] = compute_error_rate(table, pred, pid)
            base = table.baselines.get(pid)
            if base is not None:
                speedups[sid] = compute_speedup(table, base, pred, pid)
                oracle_speedups[sid] = compute_speedup(table, base, oracle_config(table, pid), pid)

    metrics = Metrics(
        task=spec.name,
        accuracy=accuracy(y_true, y_pred),
        f1_binary=f1b,
        f1_macro=macro_f1(y_true, y_pred),
        per_fold_accuracy=per_fold_acc,
        speedups=speedups,
        geometric_mean_speedup=geometric_mean(speedups.values()) if speedups else None,
        oracle_geometric_mean=geometric_mean(oracle_speedups.values()) if oracle_speedups else None,
        error_rates=error_rates,
        mean_error_rate=float(np.mean(list(error_rates.values()))) if error_rates else None,
        summary={
            "samples": len(ids),
            "folds": folds.k,
            "scheme": folds.scheme,
            "label_space_size": len(spec.label_space),
            "reduced_fraction": reduced_fraction,
        },
    )

    (out_dir / "metrics.json").write_text(
        json.dumps(metrics.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    with open(out_dir / "folds.csv", "w", encoding="utf-8") as fh:
        fh.write("sample_id,fold,true,predicted\n")
        fold_of = {sid: f for f, fold in enumerate(folds.folds) for sid in fold}
        for sid in ids:
            fh.write(f"{sid},{fold_of[sid]},{bundle.labels[sid]},{predictions[sid]}\n")
    _plot_metrics(metrics, out_dir / "metrics.png")
    return metrics


def _plot_metrics(metrics: Metrics, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 3.2))
    if metrics.speedups:
        vals = list(metrics.speedups.values())[:40]
        ax.bar(range(len(vals)), vals, color="#4878d0")
        ax.axhline(1.0, color="black", linewidth=0.8)
        ax.set_ylabel("speedup over baseline")
        ax.set_xlabel("sample")
    else:
        ax.bar(range(len(metrics.per_fold_accuracy)), metrics.per_fold_accuracy, color="#4878d0")
        ax.set_ylim(0, 1)
        ax.set_ylabel("fold accuracy")
        ax.set_xlabel("fold")
    ax.set_title(f"{metrics.task}: accuracy={metrics.accuracy:.3f}")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


# ------------------------------------------------------- overhead comparison

def time_frozen_vs_finetune(
    model,
    vocab,
    documents: list,
    graphs: list,
    labels: list[str],
    label_space: tuple[str, ...],
    head_config: HeadConfig | None = None,
    epochs: int = 8,
    seed: int = 0,
) -> dict:
    """Wall-clock comparison: frozen-embedding head vs full fine-tuning.

    The frozen path embeds every document once and fits the head on fixed
    vectors; the fine-tune path pushes every document through the encoder
    on every epoch and backpropagates into it. Returns both times and the
    fine-tune/frozen ratio.
    """
    from .embed import embed_ir
    from .premodel import document_summary, gae_encode, graph_to_tensors

    head_config = head_config or HeadConfig()
    y = torch.tensor([label_space.index(l) for l in labels])
    gts = [g if hasattr(g, "norm_adj") else graph_to_tensors(g) for g in graphs]

    # untimed warmup: the first forward, backward, and optimizer step in a
    # process each pay one-off dispatch setup that belongs to neither path
    embed_ir(model, vocab, documents[0], gts[0], "both")
    scratch = torch.zeros(1, requires_grad=True)
    warm_opt = torch.optim.Adam([scratch])
    scratch.sum().backward()
    warm_opt.step()

    t0 = time.perf_counter()
    feats = np.stack(
        [embed_ir(model, vocab, d, g, "both").concat for d, g in zip(documents, gts)]
    )
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        head = _head_net(feats.shape[1], head_config.hidden_dim, len(label_space))
    xt = torch.from_numpy(feats.astype(np.float32))
    opt = torch.optim.Adam(head.parameters(), lr=head_config.learning_rate)
    for _ in range(epochs):
        opt.zero_grad(set_to_none=True)
        nn.functional.cross_entropy(head(xt), y).backward()
        opt.step()
    frozen_s = time.perf_counter() - t0

    import copy

    t0 = time.perf_counter()
    ft_model = copy.deepcopy(model)
    ft_model.train()
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        ft_head = _head_net(
            ft_model.config.hidden_dim + ft_model.config.latent_dim,
            head_config.hidden_dim,
            len(label_space),
        )
    seq_cache = [ex for ex in documents]
    opt = torch.optim.Adam(
        list(ft_model.parameters()) + list(ft_head.parameters()),
        lr=head_config.learning_rate,
    )
    from .irtok import encode_statement
    from .premodel import seqs_to_tensors as _stt

    encoded = [
        [encode_statement(vocab, s, ft_model.config.max_seq_len) for s in d.statements]
        for d in seq_cache
    ]
    for _ in range(epochs):
        opt.zero_grad(set_to_none=True)
        rows = []
        for seqs, gt in zip(encoded, gts):
            text = document_summary(ft_model, seqs)
            graph_part = gae_encode(ft_model, gt, "all").mean(0)
            rows.append(torch.cat([text, graph_part]))
        loss = nn.functional.cross_entropy(ft_head(torch.stack(rows)), y)
        loss.backward()
        opt.step()
    finetune_s = time.perf_counter() - t0

    return {
        "frozen_seconds": frozen_s,
        "finetune_seconds": finetune_s,
        "ratio": finetune_s / frozen_s,
        "epochs": epochs,
        "documents": len(documents),
    }
