"""Dual-key learnable prompt pool.

Each pool entry holds an image key, a text key and a trainable prompt
block. An instance selects the top-K entries by the sum of the two cosine
distances (image query vs image key, text query vs text key); selection is
a hard, non-differentiable choice, so gradients reach the keys only
through the explicit surrogate loss and reach the prompts only for the
selected entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cirl.autodiff import Tensor, concat
from cirl.errors import DegenerateQuery, EmptySequence, InvalidConfig

_NORM_FLOOR = 1e-12


class PromptPool:
    """M records of (image key d_i, text key d_t, prompt block L_p x d_t)."""

    def __init__(self, image_keys: Tensor, text_keys: Tensor, prompts: Tensor):
        m = image_keys.shape[0]
        if not (text_keys.shape[0] == m and prompts.shape[0] == m):
            raise InvalidConfig("pool tensors disagree on pool size")
        if prompts.ndim != 3:
            raise InvalidConfig("prompts must be (M, L_p, d_t)")
        self.image_keys = image_keys
        self.text_keys = text_keys
        self.prompts = prompts

    @property
    def size(self) -> int:
        return self.image_keys.shape[0]

    @property
    def prompt_len(self) -> int:
        return self.prompts.shape[1]

    def parameters(self) -> dict[str, Tensor]:
        return {
            "pool.image_keys": self.image_keys,
            "pool.text_keys": self.text_keys,
            "pool.prompts": self.prompts,
        }


@dataclass(frozen=True)
class Selection:
    """Top-K pool ids in ascending combined-distance order."""

    indices: tuple[int, ...]
    distances: tuple[float, ...]


def text_key_query(token_embeddings: np.ndarray) -> np.ndarray:
    """q(T): mean of the instance's text-side input embeddings."""
    emb = np.asarray(token_embeddings, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[0] == 0:
        raise EmptySequence("text key query needs at least one embedding")
    return emb.mean(axis=0)


def _cosine_to_rows(query: np.ndarray, rows: np.ndarray) -> np.ndarray:
    qn = np.linalg.norm(query)
    if qn < _NORM_FLOOR:
        raise DegenerateQuery("query vector has zero norm; cosine undefined")
    rn = np.linalg.norm(rows, axis=1)
    return (rows @ query) / (qn * rn)


def combined_distances(pool: PromptPool, q_img: np.ndarray,
                       q_text: np.ndarray) -> np.ndarray:
    """Per-entry (1 - cos(qI, k_img)) + (1 - cos(qT, k_text))."""
    d_img = 1.0 - _cosine_to_rows(q_img, pool.image_keys.data)
    d_text = 1.0 - _cosine_to_rows(q_text, pool.text_keys.data)
    return d_img + d_text


def select(pool: PromptPool, q_img: np.ndarray, q_text: np.ndarray,
           top_k: int) -> Selection:
    """K smallest combined distances, ascending; ties to the lower index.

    A sum over K distinct entries of independent per-entry distances is
    minimised exactly by the K smallest entries, so this is the argmin of
    the subset objective without enumerating subsets.
    """
    if not (1 <= top_k <= pool.size):
        raise InvalidConfig(f"top_k {top_k} outside [1, {pool.size}]")
    dist = combined_distances(pool, q_img, q_text)
    order = np.argsort(dist, kind="stable")[:top_k]
    return Selection(tuple(int(i) for i in order), tuple(float(dist[i]) for i in order))


def assemble(pool: PromptPool, selection: Selection, sp_open: Tensor,
             sp_close: Tensor) -> Tensor:
    """Sentinel-wrapped concatenation of the selected blocks, in selection
    order. Gradients flow into the selected prompt rows and the sentinels
    only."""
    idx = np.asarray(selection.indices, dtype=np.intp)
    blocks = pool.prompts.take_rows(idx)             # (K, L_p, d_t)
    k, l_p, d_t = blocks.shape
    flat = blocks.reshape(k * l_p, d_t)
    return concat([sp_open.reshape(1, -1), flat, sp_close.reshape(1, -1)], axis=0)


def key_match_loss(pool: PromptPool, q_img: np.ndarray, q_text: np.ndarray,
                   selection: Selection) -> Tensor:
    """Pull the selected keys toward the (stop-gradient) queries.

    Mean over selected entries of the combined cosine distance; queries
    enter as constants so only the keys receive gradient.
    """
    idx = np.asarray(selection.indices, dtype=np.intp)
    img_rows = pool.image_keys.take_rows(idx)        # (K, d_i)
    txt_rows = pool.text_keys.take_rows(idx)         # (K, d_t)
    total = None
    for query, rows in ((q_img, img_rows), (q_text, txt_rows)):
        qn = float(np.linalg.norm(query))
        if qn < _NORM_FLOOR:
            raise DegenerateQuery("query vector has zero norm; cosine undefined")
        q_const = Tensor(query / qn)
        dots = (rows * q_const).sum(axis=1)          # (K,)
        norms = ((rows * rows).sum(axis=1)).sqrt()
        cos = dots / norms
        term = (1.0 - cos).mean()
        total = term if total is None else total + term
    return total
