"""Corpus-level encoding helpers shared by training, eval and the CLI.

Per-instance encodes are independent pure functions of the parameters, so
they may fan out across threads; results are written by index, which keeps
output bit-identical regardless of scheduling. The ``CIRL_THREADS``
environment variable caps the worker count (default: serial).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from cirl.model import IntentModel
from cirl.synthcorpus import caption_tokens, render
from cirl.synthcorpus.generate import Corpus, Triplet


def thread_cap() -> int:
    value = os.environ.get("CIRL_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def candidate_patches(corpus: Corpus, candidate_id: int) -> np.ndarray:
    cc = corpus.config
    return render(corpus.candidates[candidate_id], corpus.seed, candidate_id,
                  cc.sigma, cc.patches, cc.d_raw)


def query_patches(corpus: Corpus, triplet: Triplet) -> np.ndarray:
    cc = corpus.config
    return render(triplet.reference, corpus.seed, triplet.nonce,
                  cc.sigma, cc.patches, cc.d_raw)


def _map_indexed(fn, count: int) -> list:
    workers = thread_cap()
    out = [None] * count
    if workers == 1:
        for i in range(count):
            out[i] = fn(i)
        return out
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for i, value in enumerate(pool.map(fn, range(count))):
            out[i] = value
    return out


def encode_candidates(model: IntentModel, corpus: Corpus) -> np.ndarray:
    """Target-role embeddings for every candidate, row i = candidate i."""
    rows = _map_indexed(
        lambda i: model.encode_target_values(candidate_patches(corpus, i)),
        corpus.n_candidates,
    )
    return np.stack(rows)


def encode_queries(model: IntentModel, corpus: Corpus, split: str):
    """Query embeddings for a split.

    Returns (embeddings (Q, d), ground-truth candidate ids, subset ids).
    """
    triplets = corpus.splits[split]
    rows = _map_indexed(
        lambda i: model.encode_query_values(
            query_patches(corpus, triplets[i]), caption_tokens(triplets[i].edits)
        ),
        len(triplets),
    )
    emb = np.stack(rows) if rows else np.zeros((0, model.config.d_t))
    gt = [t.target_id for t in triplets]
    subsets = [t.subset_id for t in triplets]
    return emb, gt, subsets
