"""Instruction assembly, the causal decoder, and hidden-state pooling.

An intent instruction is an embedding sequence laid out as
``task input (sentence prompt [+ caption]) -> task prompt -> soft prompt``
with a boundary map recording where each segment lives. The decoder is a
small pre-norm causal transformer; attention tensors can be captured per
call for diagnostics. Pooling turns the hidden states into one embedding
via position-weighted mean, last-token, or plain mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cirl.autodiff import Tensor, concat, gelu, layer_norm, softmax
from cirl.errors import ContextOverflow, InvalidConfig

MAX_CONTEXT = 128

POOLING_STRATEGIES = ("weighted_mean", "last", "mean")


@dataclass
class IntentInstruction:
    """Concatenated embedding sequence plus its segment boundary map."""

    embeddings: Tensor                     # (k, d_t)
    segments: tuple[tuple[str, int, int], ...]
    role: str                              # "query" | "target"

    @property
    def length(self) -> int:
        return self.embeddings.shape[0]

    def span(self, name: str) -> tuple[int, int] | None:
        for seg, lo, hi in self.segments:
            if seg == name:
                return (lo, hi)
        return None


def _assemble(parts: list[tuple[str, Tensor | None]], role: str,
              max_len: int) -> IntentInstruction:
    segments = []
    tensors = []
    cursor = 0
    for name, tensor in parts:
        if tensor is None or tensor.shape[0] == 0:
            continue
        length = tensor.shape[0]
        segments.append((name, cursor, cursor + length))
        tensors.append(tensor)
        cursor += length
    if cursor == 0:
        raise InvalidConfig("instruction would be empty")
    if cursor > max_len:
        raise ContextOverflow(f"instruction length {cursor} exceeds context {max_len}")
    return IntentInstruction(concat(tensors, axis=0), tuple(segments), role)


def build_query_instruction(sentence_prompt: Tensor, caption_embeddings: Tensor,
                            task_prompt: Tensor | None, soft_prompt: Tensor | None,
                            max_len: int = MAX_CONTEXT) -> IntentInstruction:
    """Query layout: sentence prompt, caption, query task prompt, soft prompt."""
    return _assemble(
        [
            ("sentence", sentence_prompt),
            ("caption", caption_embeddings),
            ("task_prompt", task_prompt),
            ("soft_prompt", soft_prompt),
        ],
        "query",
        max_len,
    )


def build_target_instruction(sentence_prompt: Tensor, task_prompt: Tensor | None,
                             soft_prompt: Tensor | None,
                             max_len: int = MAX_CONTEXT) -> IntentInstruction:
    """Target layout: sentence prompt, target task prompt, soft prompt."""
    return _assemble(
        [
            ("sentence", sentence_prompt),
            ("task_prompt", task_prompt),
            ("soft_prompt", soft_prompt),
        ],
        "target",
        max_len,
    )


class Decoder:
    """Pre-norm causal transformer over embedded sequences.

    ``forward_count`` counts decoder passes; the retrieval pipeline must
    spend exactly one per encoded instance (single-pass contract).
    """

    def __init__(self, params: dict[str, Tensor], n_heads: int, n_layers: int,
                 eps: float = 1e-5, max_len: int = MAX_CONTEXT):
        self.params = params
        self.n_heads = n_heads
        self.n_layers = n_layers
        self.eps = eps
        self.max_len = max_len
        self.forward_count = 0
        d_t = params["decoder.tok_emb"].shape[1]
        if d_t % n_heads != 0:
            raise InvalidConfig("embedding width must divide into heads")
        self.d_t = d_t
        self.d_head = d_t // n_heads

    def embed_tokens(self, token_ids) -> Tensor:
        return self.params["decoder.tok_emb"].take_rows(np.asarray(token_ids, dtype=np.intp))

    def _attention(self, x: Tensor, layer: int, attn_out: list | None) -> Tensor:
        p = self.params
        k_len = x.shape[0]
        q = (x @ p[f"decoder.layer{layer}.attn_wq"]).reshape(k_len, self.n_heads, self.d_head)
        k = (x @ p[f"decoder.layer{layer}.attn_wk"]).reshape(k_len, self.n_heads, self.d_head)
        v = (x @ p[f"decoder.layer{layer}.attn_wv"]).reshape(k_len, self.n_heads, self.d_head)
        q = q.transpose((1, 0, 2))                     # (H, k, d_head)
        k = k.transpose((1, 0, 2))
        v = v.transpose((1, 0, 2))
        scale = 1.0 / np.sqrt(self.d_head)
        scores = (q @ k.transpose((0, 2, 1))) * scale  # (H, k, k)
        mask = np.triu(np.full((k_len, k_len), -np.inf), k=1)  # 0 on/below diag
        weights = softmax(scores + Tensor(mask), axis=-1)
        if attn_out is not None:
            attn_out.append(weights.data.copy())
        ctx = weights @ v                              # (H, k, d_head)
        ctx = ctx.transpose((1, 0, 2)).reshape(k_len, self.d_t)
        return ctx @ p[f"decoder.layer{layer}.attn_wo"]

    def __call__(self, seq: Tensor, capture_attention: bool = False):
        """Run the decoder; returns (hidden states, attention tensors)."""
        k_len = seq.shape[0]
        if k_len < 1:
            raise InvalidConfig("decoder input must be non-empty")
        if k_len > self.max_len:
            raise ContextOverflow(f"sequence length {k_len} exceeds context {self.max_len}")
        self.forward_count += 1
        p = self.params
        x = seq + p["decoder.pos_emb"][:k_len]
        attns: list[np.ndarray] = [] if capture_attention else None
        for layer in range(self.n_layers):
            normed = layer_norm(
                x, p[f"decoder.layer{layer}.ln1_gain"], p[f"decoder.layer{layer}.ln1_bias"],
                self.eps,
            )
            x = x + self._attention(normed, layer, attns)
            normed = layer_norm(
                x, p[f"decoder.layer{layer}.ln2_gain"], p[f"decoder.layer{layer}.ln2_bias"],
                self.eps,
            )
            h = gelu(normed @ p[f"decoder.layer{layer}.ff_w1"] + p[f"decoder.layer{layer}.ff_b1"])
            x = x + (h @ p[f"decoder.layer{layer}.ff_w2"] + p[f"decoder.layer{layer}.ff_b2"])
        hidden = layer_norm(x, p["decoder.ln_f_gain"], p["decoder.ln_f_bias"], self.eps)
        return hidden, (attns if capture_attention else [])


def position_weights(k: int) -> np.ndarray:
    """Weights i / sum(1..k) for positions 1..k; sum to 1, strictly increasing."""
    idx = np.arange(1, k + 1, dtype=np.float64)
    return idx / idx.sum()


def pool_hidden(hidden: Tensor, strategy: str) -> Tensor:
    """Aggregate (k, d_t) hidden states into one embedding vector."""
    k = hidden.shape[0]
    if strategy == "weighted_mean":
        w = Tensor(position_weights(k).reshape(1, k))
        return (w @ hidden).reshape(hidden.shape[1])
    if strategy == "last":
        return hidden[k - 1]
    if strategy == "mean":
        return hidden.mean(axis=0)
    raise InvalidConfig(f"unknown pooling strategy {strategy!r}")
