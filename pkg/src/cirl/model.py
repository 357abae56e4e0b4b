"""The full intent-aware encoder: frozen vision map, connector, prompt
pool, task/sentinel tokens and causal decoder behind two entry points,
``encode_query`` and ``encode_target``. One parameter set serves both
roles.

All trainable tensors are kept exactly float32-representable (stored as
float64 for the math, rounded through float32 after init and after every
optimizer step) so checkpoints -- which store float32 -- round-trip
bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from cirl.autodiff import Tensor, concat, no_grad
from cirl.errors import InvalidConfig
from cirl.intent_encoder import (
    Decoder,
    IntentInstruction,
    build_query_instruction,
    build_target_instruction,
    pool_hidden,
    POOLING_STRATEGIES,
)
from cirl.prompt_pool import (
    PromptPool,
    Selection,
    assemble,
    key_match_loss,
    select,
    text_key_query,
)
from cirl.rng import derive_seed
from cirl.synthcorpus.captions import VOCAB_SIZE
from cirl.visual_frontend import Connector, FrozenVisionEncoder, image_key_query

SOFT_MODES = ("none", "universal", "instance")
TASK_PROMPT_LENGTHS = (0, 2, 4)


@dataclass
class ModelConfig:
    d_raw: int = 48
    d_i: int = 32
    d_t: int = 64
    d_h: int = 32
    n_q: int = 8
    n_heads: int = 4
    n_layers: int = 2
    max_len: int = 128
    pool_size: int = 16
    prompt_len: int = 2
    top_k: int = 4
    soft_mode: str = "instance"
    task_prompt_len: int = 4
    pooling: str = "weighted_mean"
    ln_eps: float = 1e-5
    emb_init_std: float = 0.1

    def validate(self) -> None:
        checks = [
            (self.d_raw >= 1 and self.d_i >= 1 and self.d_t >= 1 and self.d_h >= 1,
             "dimensions must be positive"),
            (self.n_q >= 1, "need at least one connector query"),
            (self.n_layers >= 1, "need at least one decoder layer"),
            (self.d_t % self.n_heads == 0, "n_heads must divide d_t"),
            (self.pool_size >= self.top_k >= 1, "need pool_size >= top_k >= 1"),
            (self.prompt_len >= 1, "prompt_len must be positive"),
            (self.soft_mode in SOFT_MODES, f"soft_mode must be one of {SOFT_MODES}"),
            (self.task_prompt_len in TASK_PROMPT_LENGTHS,
             f"task_prompt_len must be one of {TASK_PROMPT_LENGTHS}"),
            (self.pooling in POOLING_STRATEGIES,
             f"pooling must be one of {POOLING_STRATEGIES}"),
            (self.max_len >= 1, "max_len must be positive"),
            (self.emb_init_std > 0, "emb_init_std must be positive"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InvalidConfig(msg)
        if self.soft_mode == "instance" and self.task_prompt_len == 0:
            raise InvalidConfig(
                "instance soft mode needs task-prompt tokens: the target-side "
                "text key is the mean of the task-prompt embeddings"
            )


@dataclass
class EncodeTrace:
    """Side products of one encode: selection, boundaries, attention."""

    instruction: IntentInstruction
    selection: Optional[Selection] = None
    q_img: Optional[np.ndarray] = None
    q_text: Optional[np.ndarray] = None
    attentions: list = field(default_factory=list)


def _round_fp32(x: np.ndarray) -> np.ndarray:
    return x.astype(np.float32).astype(np.float64)


class IntentModel:
    def __init__(self, config: ModelConfig, seed: int):
        config.validate()
        self.config = config
        self.seed = seed
        self.frozen = FrozenVisionEncoder(config.d_raw, config.d_i, seed, config.ln_eps)
        rng = np.random.default_rng(derive_seed(seed, "model-init"))
        c = config

        def normal(shape, std):
            return Tensor(_round_fp32(rng.standard_normal(shape) * std), requires_grad=True)

        def full(shape, value):
            return Tensor(np.full(shape, float(value)), requires_grad=True)

        emb_std = c.emb_init_std
        self.params: dict[str, Tensor] = {}
        p = self.params
        # creation order is fixed: it defines the init stream layout
        p["connector.queries"] = normal((c.n_q, c.d_t), emb_std)
        p["connector.w_q"] = normal((c.d_t, c.d_h), 1.0 / np.sqrt(c.d_t))
        p["connector.w_k"] = normal((c.d_i, c.d_h), 1.0 / np.sqrt(c.d_i))
        p["connector.w_v"] = normal((c.d_i, c.d_t), 1.0 / np.sqrt(c.d_i))
        p["connector.ln_gain"] = full((c.d_t,), 1.0)
        p["connector.ln_bias"] = full((c.d_t,), 0.0)
        p["pool.image_keys"] = normal((c.pool_size, c.d_i), 1.0 / np.sqrt(c.d_i))
        p["pool.text_keys"] = normal((c.pool_size, c.d_t), 1.0 / np.sqrt(c.d_t))
        p["pool.prompts"] = normal((c.pool_size, c.prompt_len, c.d_t), emb_std)
        p["pool.universal"] = normal((c.top_k * c.prompt_len, c.d_t), emb_std)
        p["sentinels"] = normal((2, c.d_t), emb_std)
        p["task_tokens"] = normal((8, c.d_t), emb_std)
        p["decoder.tok_emb"] = normal((VOCAB_SIZE, c.d_t), emb_std)
        p["decoder.pos_emb"] = normal((c.max_len, c.d_t), emb_std)
        for i in range(c.n_layers):
            p[f"decoder.layer{i}.ln1_gain"] = full((c.d_t,), 1.0)
            p[f"decoder.layer{i}.ln1_bias"] = full((c.d_t,), 0.0)
            p[f"decoder.layer{i}.attn_wq"] = normal((c.d_t, c.d_t), 1.0 / np.sqrt(c.d_t))
            p[f"decoder.layer{i}.attn_wk"] = normal((c.d_t, c.d_t), 1.0 / np.sqrt(c.d_t))
            p[f"decoder.layer{i}.attn_wv"] = normal((c.d_t, c.d_t), 1.0 / np.sqrt(c.d_t))
            p[f"decoder.layer{i}.attn_wo"] = normal((c.d_t, c.d_t), 1.0 / np.sqrt(c.d_t))
            p[f"decoder.layer{i}.ln2_gain"] = full((c.d_t,), 1.0)
            p[f"decoder.layer{i}.ln2_bias"] = full((c.d_t,), 0.0)
            p[f"decoder.layer{i}.ff_w1"] = normal((c.d_t, 4 * c.d_t), 1.0 / np.sqrt(c.d_t))
            p[f"decoder.layer{i}.ff_b1"] = full((4 * c.d_t,), 0.0)
            p[f"decoder.layer{i}.ff_w2"] = normal((4 * c.d_t, c.d_t), 1.0 / np.sqrt(4 * c.d_t))
            p[f"decoder.layer{i}.ff_b2"] = full((c.d_t,), 0.0)
        p["decoder.ln_f_gain"] = full((c.d_t,), 1.0)
        p["decoder.ln_f_bias"] = full((c.d_t,), 0.0)

        self.connector = Connector(
            p["connector.queries"], p["connector.w_q"], p["connector.w_k"],
            p["connector.w_v"], p["connector.ln_gain"], p["connector.ln_bias"],
            c.ln_eps,
        )
        self.pool = PromptPool(p["pool.image_keys"], p["pool.text_keys"], p["pool.prompts"])
        self.decoder = Decoder(p, c.n_heads, c.n_layers, c.ln_eps, c.max_len)

    # -- parameter bookkeeping ---------------------------------------------

    def parameter_names(self) -> list[str]:
        return list(self.params)

    def param_groups(self) -> dict[str, list[str]]:
        """Two learning-rate groups: the prompt pool and everything else."""
        pool = [n for n in self.params if n.startswith("pool.")]
        rest = [n for n in self.params if not n.startswith("pool.")]
        return {"pool": pool, "rest": rest}

    def audit_groups(self) -> dict[str, list[str]]:
        """Finer-grained groups for the gradient audit."""
        groups: dict[str, list[str]] = {
            "connector": [], "decoder": [], "pool_prompts": [], "pool_keys": [],
            "task_tokens": [], "sentinels": [],
        }
        for name in self.params:
            if name.startswith("connector."):
                groups["connector"].append(name)
            elif name.startswith("decoder."):
                groups["decoder"].append(name)
            elif name in ("pool.prompts", "pool.universal"):
                groups["pool_prompts"].append(name)
            elif name in ("pool.image_keys", "pool.text_keys"):
                groups["pool_keys"].append(name)
            elif name == "task_tokens":
                groups["task_tokens"].append(name)
            elif name == "sentinels":
                groups["sentinels"].append(name)
        return groups

    def round_params_fp32(self) -> None:
        for t in self.params.values():
            t.data = _round_fp32(t.data)

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()

    # -- encoding ------------------------------------------------------------

    def _task_prompt(self, role: str) -> Tensor | None:
        n = self.config.task_prompt_len
        if n == 0:
            return None
        base = 0 if role == "query" else 4  # rows mirror vocab ids 3-6 / 7-10
        rows = np.arange(base, base + n, dtype=np.intp)
        return self.params["task_tokens"].take_rows(rows)

    def _soft_prompt(self, feats: np.ndarray, text_emb_values: np.ndarray):
        """Returns (soft prompt tensor or None, selection or None, qI, qT)."""
        mode = self.config.soft_mode
        sent = self.params["sentinels"]
        if mode == "none":
            return None, None, None, None
        if mode == "universal":
            block = self.params["pool.universal"]
            soft = concat([sent[0].reshape(1, -1), block, sent[1].reshape(1, -1)], axis=0)
            return soft, None, None, None
        if text_emb_values is None:
            raise InvalidConfig("instance soft mode needs text-side embeddings")
        q_img = image_key_query(feats)
        q_text = text_key_query(text_emb_values)
        selection = select(self.pool, q_img, q_text, self.config.top_k)
        soft = assemble(self.pool, selection, sent[0], sent[1])
        return soft, selection, q_img, q_text

    def encode_query(self, patches: np.ndarray, caption_ids,
                     capture_attention: bool = False) -> tuple[Tensor, EncodeTrace]:
        feats = self.frozen(patches)
        sentence = self.connector(feats)
        caption = self.decoder.embed_tokens(caption_ids)
        task = self._task_prompt("query")
        soft, selection, q_img, q_text = self._soft_prompt(feats, caption.data)
        instr = build_query_instruction(sentence, caption, task, soft, self.config.max_len)
        hidden, attns = self.decoder(instr.embeddings, capture_attention)
        emb = pool_hidden(hidden, self.config.pooling)
        return emb, EncodeTrace(instr, selection, q_img, q_text, attns)

    def encode_target(self, patches: np.ndarray,
                      capture_attention: bool = False) -> tuple[Tensor, EncodeTrace]:
        feats = self.frozen(patches)
        sentence = self.connector(feats)
        task = self._task_prompt("target")
        text_values = task.data if task is not None else None
        soft, selection, q_img, q_text = self._soft_prompt(feats, text_values)
        instr = build_target_instruction(sentence, task, soft, self.config.max_len)
        hidden, attns = self.decoder(instr.embeddings, capture_attention)
        emb = pool_hidden(hidden, self.config.pooling)
        return emb, EncodeTrace(instr, selection, q_img, q_text, attns)

    def encode_targets_batch(self, patches_list) -> tuple[Tensor, list[EncodeTrace]]:
        """Batched target encoding: one decoder pass over (B, k, d_t).

        All target instructions share one length, so the whole stack runs
        as stacked tensor ops. Returns embeddings (B, d_t) plus a trace
        per instance (selection and boundary map; no attention capture).
        """
        b = len(patches_list)
        if b == 0:
            raise InvalidConfig("empty target batch")
        feats = np.stack([self.frozen(p) for p in patches_list])   # (B, P, d_i)
        sentence = self.connector.batched(feats)                   # (B, N_q, d_t)
        task = self._task_prompt("target")
        text_values = task.data if task is not None else None

        parts = [sentence]
        segments = [("sentence", 0, sentence.shape[1])]
        cursor = sentence.shape[1]
        if task is not None:
            parts.append(concat([task.reshape(1, *task.shape)] * b, axis=0))
            segments.append(("task_prompt", cursor, cursor + task.shape[0]))
            cursor += task.shape[0]
        selections: list = [None] * b
        q_imgs: list = [None] * b
        q_texts: list = [None] * b
        if self.config.soft_mode != "none":
            softs = []
            for i in range(b):
                soft, sel, q_img, q_text = self._soft_prompt(feats[i], text_values)
                softs.append(soft.reshape(1, *soft.shape))
                selections[i], q_imgs[i], q_texts[i] = sel, q_img, q_text
            soft_stack = concat(softs, axis=0)
            segments.append(("soft_prompt", cursor, cursor + soft_stack.shape[1]))
            cursor += soft_stack.shape[1]
            parts.append(soft_stack)
        seq = concat(parts, axis=1)                                # (B, k, d_t)
        hidden = self.decoder.forward_batch(seq)
        emb = pool_hidden_batch(hidden, self.config.pooling)
        traces = [
            EncodeTrace(
                IntentInstruction(None, tuple(segments), "target"),
                selections[i], q_imgs[i], q_texts[i], [],
            )
            for i in range(b)
        ]
        return emb, traces

    def key_loss_for(self, trace: EncodeTrace) -> Tensor | None:
        if trace.selection is None:
            return None
        return key_match_loss(self.pool, trace.q_img, trace.q_text, trace.selection)

    def encode_query_values(self, patches, caption_ids) -> np.ndarray:
        with no_grad():
            emb, _ = self.encode_query(patches, caption_ids)
        return emb.data

    def encode_target_values(self, patches) -> np.ndarray:
        with no_grad():
            emb, _ = self.encode_target(patches)
        return emb.data
