"""Ingestion of textual LLVM IR files into normalized statement documents.

A document is the unit everything downstream works with: an ordered list of
normalized IR statements (one per surviving physical line). Normalization is
deliberately aggressive — lowercase, single-space — so the token stream is
case-insensitive and free of layout noise.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

SPLITS = ("pretrain", "train", "valid", "test")


class EmptyDocumentError(ValueError):
    """Raised when a file has no statements left after stripping comments."""


@dataclass
class IRDocument:
    id: str
    source_path: Path
    statements: list[str]
    raw_text: str = ""


@dataclass
class ManifestEntry:
    id: str
    path: Path
    split: str


@dataclass
class Manifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    seed: int = 0

    def ids(self, split: str | None = None) -> list[str]:
        return [e.id for e in self.entries if split is None or e.split == split]

    def entry(self, doc_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.id == doc_id:
                return e
        raise KeyError(doc_id)

    def save(self, path: Path | str) -> None:
        path = Path(path)
        rows = sorted(self.entries, key=lambda e: e.id)
        with open(path, "w", encoding="utf-8") as fh:
            for e in rows:
                fh.write(json.dumps({"id": e.id, "path": str(e.path), "split": e.split}) + "\n")

    @classmethod
    def load(cls, path: Path | str) -> "Manifest":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                entries.append(ManifestEntry(obj["id"], Path(obj["path"]), obj["split"]))
        seen = set()
        for e in entries:
            if e.id in seen:
                raise ValueError(f"duplicate id in manifest: {e.id}")
            seen.add(e.id)
        return cls(entries=entries)


def strip_comment(line: str) -> str:
    """Drop a trailing ';' comment, respecting double-quoted string constants."""
    in_string = False
    for i, ch in enumerate(line):
        if ch == '"':
            in_string = not in_string
        elif ch == ";" and not in_string:
            return line[:i]
    return line


def normalize_statement(line: str) -> str:
    """Lowercase and collapse all internal whitespace to single spaces."""
    return " ".join(line.split()).lower()


def normalize_lines(text: str) -> list[str]:
    """Comment-stripped, normalized, non-empty lines of ``text`` in order."""
    out = []
    for line in text.splitlines():
        stmt = normalize_statement(strip_comment(line))
        if stmt:
            out.append(stmt)
    return out


def ingest_ir_file(path: Path | str, doc_id: str | None = None) -> IRDocument:
    """Read one .ll file into an IRDocument.

    Raises EmptyDocumentError if nothing survives comment stripping, and lets
    OSError/UnicodeDecodeError propagate for unreadable files.
    """
    path = Path(path)
    raw = path.read_text(encoding="utf-8")
    statements = normalize_lines(raw)
    if not statements:
        raise EmptyDocumentError(f"no statements in {path}")
    if doc_id is None:
        doc_id = path.stem
    return IRDocument(id=doc_id, source_path=path, statements=statements, raw_text=raw)


def _resolve_fractions(split_fractions) -> dict[str, float]:
    if isinstance(split_fractions, dict):
        fractions = dict(split_fractions)
        unknown = set(fractions) - set(SPLITS)
        if unknown:
            raise ValueError(f"unknown split names: {sorted(unknown)}")
    else:
        values = list(split_fractions)
        if len(values) > len(SPLITS):
            raise ValueError(f"at most {len(SPLITS)} split fractions, got {len(values)}")
        fractions = dict(zip(SPLITS, values))
    total = sum(fractions.values())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"split fractions sum to {total}, expected 1.0")
    if any(f < 0 for f in fractions.values()):
        raise ValueError("split fractions must be non-negative")
    return fractions


def build_manifest(root_dir: Path | str, split_fractions, seed: int = 0) -> Manifest:
    """Assign every .ll file under ``root_dir`` to exactly one split.

    ``split_fractions`` is either a mapping {split: fraction} or a sequence
    interpreted in (pretrain, train, valid, test) order; fractions must sum
    to 1. The shuffle and the largest-remainder split sizing are both
    deterministic under ``seed``.
    """
    fractions = _resolve_fractions(split_fractions)
    root = Path(root_dir)
    files = sorted(root.rglob("*.ll"))
    if not files:
        raise ValueError(f"no .ll files under {root}")

    ids = []
    for f in files:
        rel = f.relative_to(root).as_posix()
        ids.append((rel[: -len(".ll")].replace("/", "__"), f))
    ids.sort(key=lambda t: t[0])
    rng = random.Random(seed)
    rng.shuffle(ids)

    n = len(ids)
    ordered = [s for s in SPLITS if s in fractions]
    counts = {s: int(fractions[s] * n) for s in ordered}
    remainders = sorted(
        ordered, key=lambda s: (-(fractions[s] * n - counts[s]), ordered.index(s))
    )
    i = 0
    while sum(counts.values()) < n:
        counts[remainders[i % len(remainders)]] += 1
        i += 1

    entries = []
    cursor = 0
    for s in ordered:
        for doc_id, path in ids[cursor : cursor + counts[s]]:
            entries.append(ManifestEntry(doc_id, path, s))
        cursor += counts[s]
    entries.sort(key=lambda e: e.id)
    return Manifest(entries=entries, seed=seed)


def sample_corpus(manifest: Manifest, n: int, seed: int = 0, split: str = "pretrain") -> list[IRDocument]:
    """Load ``n`` distinct documents sampled from a split, deterministic under seed."""
    pool = [e for e in manifest.entries if e.split == split]
    pool.sort(key=lambda e: e.id)
    if n > len(pool):
        raise ValueError(f"requested {n} documents but split '{split}' has {len(pool)}")
    rng = random.Random(seed)
    chosen = rng.sample(pool, n)
    return [ingest_ir_file(e.path, doc_id=e.id) for e in chosen]
