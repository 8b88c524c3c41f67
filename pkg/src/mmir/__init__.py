"""Multi-modal encoder for LLVM IR: tokenized text plus program multi-graphs.

Submodules:
    ircorpus  corpus ingestion, normalization, manifests
    irtok     punctuation-aware subword tokenizer with exact detokenization
    irgraph   IR-subset parser and typed program multi-graph
    premodel  encoder networks and the three pretraining objectives
    pretrain  training loop, checkpoints, determinism plumbing
    embed     frozen-encoder embedding extraction
    tasks     downstream heads, cross-validation, tuning metrics
    cli       command-line entry points
"""

__version__ = "0.1.0"
