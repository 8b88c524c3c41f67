from pathlib import Path

import pytest

from mmir.ircorpus import ingest_ir_file
from mmir.irtok import train_tokenizer

REPO = Path(__file__).resolve().parent.parent
KERNELS = REPO / "data" / "kernels"


@pytest.fixture(scope="session")
def kernel_paths():
    paths = sorted(KERNELS.glob("*.ll"))
    assert paths, f"kernel corpus missing under {KERNELS}"
    return paths


@pytest.fixture(scope="session")
def corpus_docs(kernel_paths):
    return [ingest_ir_file(p) for p in kernel_paths]


@pytest.fixture(scope="session")
def vocab(corpus_docs):
    return train_tokenizer(corpus_docs, vocab_size=8192)
