"""Synthetic task bundles for end-to-end exercises.

Generates small but structurally honest inputs: parseable IR kernels in two
planted families (memory-bound vs compute-bound), device-mapping labels with
weakly informative aux features, and runtime tables with per-program
baselines. Everything is deterministic under its seed.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .embed import embed_ir
from .ircorpus import IRDocument, normalize_lines
from .irgraph import graph_from_text
from .tasks import TASKS, RuntimeTable, TaskBundle

_MEM_TYPES = ("float", "i32", "double")
_CMP_OPS = ("fmul", "fadd", "fsub", "mul", "add")


def _memory_kernel(i: int, rng: np.random.Generator) -> str:
    """Load/store heavy function: streams values between two buffers."""
    ty = _MEM_TYPES[int(rng.integers(len(_MEM_TYPES)))]
    n = int(rng.integers(3, 7))
    lines = [f"define void @memk{i}(ptr %src, ptr %dst) {{", "entry:"]
    for j in range(n):
        off = int(rng.integers(0, 64))
        lines.append(f"  %p{j} = getelementptr {ty}, ptr %src, i32 {off}")
        lines.append(f"  %v{j} = load {ty}, ptr %p{j}")
        lines.append(f"  %q{j} = getelementptr {ty}, ptr %dst, i32 {off}")
        lines.append(f"  store {ty} %v{j}, ptr %q{j}")
    lines.append("  ret void")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _compute_kernel(i: int, rng: np.random.Generator) -> str:
    """Arithmetic-chain function: repeated multiply/add on registers."""
    n = int(rng.integers(5, 11))
    lines = [f"define float @cmpk{i}(float %a, float %b) {{", "entry:"]
    prev = "%a"
    for j in range(n):
        op = _CMP_OPS[int(rng.integers(2))]  # fmul or fadd
        other = "%b" if rng.random() < 0.5 else prev
        lines.append(f"  %t{j} = {op} float {prev}, {other}")
        prev = f"%t{j}"
    lines.append(f"  ret float {prev}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def make_devmap_documents(n: int, seed: int = 0):
    """n synthetic kernels, alternating families.

    Returns (documents, labels, aux) where the memory-bound family is
    labeled CPU and the compute-bound family GPU. Aux features overlap
    between families so the IR content carries most of the signal.
    """
    if n < 2:
        raise ValueError("need at least 2 documents")
    rng = np.random.default_rng(seed)
    documents, labels, aux = [], [], []
    for i in range(n):
        if i % 2 == 0:
            text = _memory_kernel(i, rng)
            label = "CPU"
            transfer = rng.normal(2048.0, 900.0)
            workgroup = rng.normal(64.0, 40.0)
        else:
            text = _compute_kernel(i, rng)
            label = "GPU"
            transfer = rng.normal(1400.0, 900.0)
            workgroup = rng.normal(128.0, 40.0)
        doc = IRDocument(
            id=f"dm{i:04d}",
            source_path=None,
            statements=normalize_lines(text),
            raw_text=text,
        )
        documents.append(doc)
        labels.append(label)
        aux.append(np.asarray([max(transfer, 1.0), max(workgroup, 1.0)], dtype=np.float32))
    return documents, labels, aux


def make_devmap_bundle(model, vocab, n: int = 220, seed: int = 0, modality: str = "both") -> TaskBundle:
    """Device-mapping bundle with embeddings from the given frozen encoder."""
    documents, labels, aux = make_devmap_documents(n, seed)
    embeddings = {}
    for doc in documents:
        graph = graph_from_text(doc.raw_text, vocab, model.config.max_seq_len)
        embeddings[doc.id] = embed_ir(model, vocab, doc, graph, modality).concat
    return TaskBundle(
        sample_ids=[d.id for d in documents],
        program_ids={d.id: d.id for d in documents},
        labels={d.id: lab for d, lab in zip(documents, labels)},
        embeddings=embeddings,
        aux={d.id: a for d, a in zip(documents, aux)},
    )


def write_labels_csv(bundle: TaskBundle, aux_names: tuple[str, ...], path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("sample_id,program_id,label," + ",".join(aux_names) + "\n")
        for sid in bundle.sample_ids:
            aux = ",".join(f"{v:.6g}" for v in bundle.aux[sid])
            row = f"{sid},{bundle.program_ids[sid]},{bundle.labels[sid]}"
            fh.write(row + ("," + aux if aux else "") + "\n")


def make_runtime_table(task_name: str, program_ids: list[str], seed: int = 0) -> RuntimeTable:
    """Full runtime grid for one task's config space.

    Runtimes are positive with a planted optimum per program; the baseline
    is the task's conventional default configuration.
    """
    spec = TASKS[task_name]
    rng = np.random.default_rng(seed)
    table = RuntimeTable()
    configs = list(spec.label_space)
    for pid in program_ids:
        base = float(rng.uniform(0.5, 4.0))
        best = int(rng.integers(len(configs)))
        for ci, config in enumerate(configs):
            penalty = 1.0 + 0.4 * abs(ci - best) / len(configs) + float(rng.uniform(0, 0.05))
            table.add(pid, config, base * penalty)
        table.baselines[pid] = _default_config(task_name)
    return table


def _default_config(task_name: str) -> str:
    """Conventional untuned setting for each search space."""
    defaults = {
        "coarsen": "1",
        "vectorize": "vf1_if1",
        "omp": "p150_t64_STATIC_c1",
        "numa": "numa_00",
        "cudablock": "m240_b32x32",
    }
    if task_name not in defaults:
        raise KeyError(f"no baseline convention for task {task_name!r}")
    return defaults[task_name]


def make_runtime_bundle(model, vocab, task_name: str, n_programs: int, seed: int = 0,
                        modality: str = "both") -> TaskBundle:
    """Runtime-task bundle: one sample per synthetic program, labels = oracle."""
    from .tasks import oracle_config

    documents, _, _ = make_devmap_documents(n_programs, seed)
    table = make_runtime_table(task_name, [d.id for d in documents], seed=seed + 1)
    embeddings = {}
    for doc in documents:
        graph = graph_from_text(doc.raw_text, vocab, model.config.max_seq_len)
        embeddings[doc.id] = embed_ir(model, vocab, doc, graph, modality).concat
    return TaskBundle(
        sample_ids=[d.id for d in documents],
        program_ids={d.id: d.id for d in documents},
        labels={d.id: oracle_config(table, d.id) for d in documents},
        embeddings=embeddings,
        aux={d.id: np.zeros(0, dtype=np.float32) for d in documents},
        runtime_table=table,
    )
