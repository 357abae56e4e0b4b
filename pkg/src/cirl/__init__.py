"""Desk-scale composed-retrieval pipeline with an intent-aware encoder.

The package is organised as a plain numpy library:

- ``synthcorpus``: deterministic synthetic scenes, edit scripts and corpora
  with an analytic target oracle,
- ``visual_frontend``: frozen toy vision encoder + trainable connector,
- ``prompt_pool``: dual-key learnable prompt pool (selection + assembly),
- ``intent_encoder``: instruction assembly, causal decoder, pooling,
- ``objective_trainer``: in-batch contrastive objective, Adam, grad audit,
- ``eval_bench``: exhaustive retrieval index, metrics, latency, attention,
- ``config`` / ``checkpoint`` / ``cli``: run configuration, binary
  persistence and the command-line surface.
"""

from cirl.errors import (
    CapacityExceeded,
    ChecksumError,
    ContextOverflow,
    DegenerateEmbedding,
    DegenerateQuery,
    EmptySequence,
    InvalidConfig,
    InvalidScene,
    MissingSubset,
    NonFiniteLoss,
    ShapeMismatch,
    UnresolvableSelector,
    ZeroEmbedding,
)

__version__ = "0.1.0"

__all__ = [
    "CapacityExceeded",
    "ChecksumError",
    "ContextOverflow",
    "DegenerateEmbedding",
    "DegenerateQuery",
    "EmptySequence",
    "InvalidConfig",
    "InvalidScene",
    "MissingSubset",
    "NonFiniteLoss",
    "ShapeMismatch",
    "UnresolvableSelector",
    "ZeroEmbedding",
]
