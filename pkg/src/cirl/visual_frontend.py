"""Frozen toy vision encoder and the trainable connector.

The encoder is a seeded random linear map plus layer norm; it is a plain
numpy function (never a graph node), so nothing can backpropagate into it.
The connector cross-attends a fixed set of learnable query embeddings over
the patch features and emits the sentence-level prompt that stands in for
the image inside the decoder input.
"""

from __future__ import annotations

import hashlib

import numpy as np

from cirl.autodiff import Tensor, layer_norm, softmax
from cirl.errors import ShapeMismatch
from cirl.rng import derive_seed


def _plain_layer_norm(x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


class FrozenVisionEncoder:
    """Seeded random projection d_raw -> d_i with layer norm; frozen."""

    def __init__(self, d_raw: int, d_i: int, seed: int, eps: float = 1e-5):
        self.d_raw = d_raw
        self.d_i = d_i
        self.eps = eps
        rng = np.random.default_rng(derive_seed(seed, "frozen-vision"))
        self.weight = rng.standard_normal((d_raw, d_i)) / np.sqrt(d_raw)
        self.weight.setflags(write=False)

    def __call__(self, patches: np.ndarray) -> np.ndarray:
        patches = np.asarray(patches, dtype=np.float64)
        if patches.ndim != 2 or patches.shape[1] != self.d_raw:
            raise ShapeMismatch(
                f"expected (P, {self.d_raw}) patches, got {patches.shape}"
            )
        return _plain_layer_norm(patches @ self.weight, self.eps)

    def checksum(self) -> str:
        """Digest of the frozen weights (training must not change it)."""
        return hashlib.sha256(np.ascontiguousarray(self.weight).tobytes()).hexdigest()


def image_key_query(features: np.ndarray) -> np.ndarray:
    """q(I): plain average over the patch axis."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ShapeMismatch(f"expected non-empty (P, d_i) features, got {features.shape}")
    return features.mean(axis=0)


class Connector:
    """Single-head cross-attention from learnable queries to patch features."""

    def __init__(self, queries: Tensor, w_q: Tensor, w_k: Tensor, w_v: Tensor,
                 ln_gain: Tensor, ln_bias: Tensor, eps: float = 1e-5):
        self.queries = queries      # (N_q, d_t)
        self.w_q = w_q              # (d_t, d_h)
        self.w_k = w_k              # (d_i, d_h)
        self.w_v = w_v              # (d_i, d_t)
        self.ln_gain = ln_gain
        self.ln_bias = ln_bias
        self.eps = eps

    @property
    def n_queries(self) -> int:
        return self.queries.shape[0]

    def __call__(self, features: np.ndarray, return_attention: bool = False):
        """Sentence-level prompt (N_q, d_t) for one image."""
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.w_k.shape[0]:
            raise ShapeMismatch(
                f"expected (P, {self.w_k.shape[0]}) features, got {features.shape}"
            )
        feats = Tensor(features)
        q = self.queries @ self.w_q                      # (N_q, d_h)
        k = feats @ self.w_k                             # (P, d_h)
        v = feats @ self.w_v                             # (P, d_t)
        scale = 1.0 / np.sqrt(self.w_q.shape[1])
        attn = softmax((q @ k.transpose((1, 0))) * scale, axis=-1)
        out = layer_norm(attn @ v, self.ln_gain, self.ln_bias, self.eps)
        if return_attention:
            return out, attn.data.copy()
        return out

    def parameters(self) -> dict[str, Tensor]:
        return {
            "connector.queries": self.queries,
            "connector.w_q": self.w_q,
            "connector.w_k": self.w_k,
            "connector.w_v": self.w_v,
            "connector.ln_gain": self.ln_gain,
            "connector.ln_bias": self.ln_bias,
        }
