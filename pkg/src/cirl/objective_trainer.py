"""In-batch contrastive training and the finite-difference gradient audit.

The loss for a batch of query/target embedding pairs is softmax cross
entropy over scaled cosine similarities: for each query the positive logit
is its own target and the negatives are the other targets in the batch.
Optimisation is Adam with two learning-rate groups (prompt pool vs rest).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from cirl.autodiff import Tensor, concat, no_grad
from cirl.encoding import encode_candidates, encode_queries
from cirl.errors import DegenerateEmbedding, InvalidConfig, NonFiniteLoss
from cirl.eval_bench import build_index, rank_of_ground_truth
from cirl.model import IntentModel, ModelConfig
from cirl.rng import Xoshiro256StarStar, derive_seed
from cirl.synthcorpus import caption_tokens, render
from cirl.synthcorpus.generate import Corpus


@dataclass
class TrainConfig:
    batch_size: int = 32
    lam: float = 20.0            # temperature multiplier on cosine logits
    epochs: int = 10
    lr_pool: float = 6e-3
    lr_rest: float = 2e-3
    key_loss_weight: float = 0.5
    seed: int = 42

    def validate(self) -> None:
        checks = [
            (self.batch_size >= 2, "batch_size must be at least 2"),
            (self.lam > 0, "temperature multiplier must be positive"),
            (self.epochs >= 1, "epochs must be at least 1"),
            # lr = 0 is allowed so a no-op optimizer run stays expressible
            (self.lr_pool >= 0 and self.lr_rest >= 0, "learning rates must be >= 0"),
            (self.key_loss_weight >= 0, "key_loss_weight must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InvalidConfig(msg)


def stack_rows(vectors: list[Tensor]) -> Tensor:
    """Stack (d,) tensors into an (N, d) tensor."""
    return concat([v.reshape(1, -1) for v in vectors], axis=0)


def contrastive_loss(vq: Tensor, vt: Tensor, lam: float) -> Tensor:
    """Batch classification loss over cosine similarities.

    L = mean_i -log softmax_j(lam * cos(vq_i, vt_j))[i], computed with
    max-subtracted log-sum-exp. Shapes (N, d) each, N >= 2.
    """
    n = vq.shape[0]
    if n < 2 or vt.shape[0] != n:
        raise InvalidConfig("contrastive loss needs matched batches of size >= 2")
    for mat in (vq, vt):
        norms = np.linalg.norm(mat.data, axis=1)
        if np.any(norms < 1e-12):
            raise DegenerateEmbedding("zero-norm embedding in contrastive batch")
    qn = vq / ((vq * vq).sum(axis=1, keepdims=True)).sqrt()
    tn = vt / ((vt * vt).sum(axis=1, keepdims=True)).sqrt()
    logits = (qn @ tn.transpose((1, 0))) * lam          # (N, N)
    shift = Tensor(logits.data.max(axis=1, keepdims=True))
    lse = shift + ((logits - shift).exp().sum(axis=1, keepdims=True)).log()
    diag = (logits * Tensor(np.eye(n))).sum(axis=1, keepdims=True)
    return (lse - diag).mean()


class Adam:
    """Adam with per-parameter-group learning rates.

    After every step parameters are rounded through float32 so their
    values stay exactly float32-representable (the checkpoint contract).
    """

    def __init__(self, params: dict[str, Tensor], lr_by_name: dict[str, float],
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr_by_name = lr_by_name
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {n: np.zeros_like(t.data) for n, t in params.items()}
        self.v = {n: np.zeros_like(t.data) for n, t in params.items()}
        self.t = 0

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1**self.t)
            v_hat = self.v[name] / (1 - b2**self.t)
            p.data = p.data - self.lr_by_name[name] * m_hat / (np.sqrt(v_hat) + self.eps)
            p.data = p.data.astype(np.float32).astype(np.float64)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


def make_optimizer(model: IntentModel, config: TrainConfig) -> Adam:
    groups = model.param_groups()
    lr_by_name = {n: config.lr_pool for n in groups["pool"]}
    lr_by_name.update({n: config.lr_rest for n in groups["rest"]})
    return Adam(model.params, lr_by_name)


@dataclass
class TrainResult:
    model: IntentModel
    log: list[dict] = field(default_factory=list)


def batch_loss(model: IntentModel, corpus: Corpus, batch, lam: float,
               key_weight: float) -> Tensor:
    """Total loss for one batch of triplets (contrastive + key surrogate)."""
    cc = corpus.config
    vq, vt, key_losses = [], [], []
    for triplet in batch:
        q_patches = render(triplet.reference, corpus.seed, triplet.nonce,
                           cc.sigma, cc.patches, cc.d_raw)
        q_emb, q_trace = model.encode_query(q_patches, caption_tokens(triplet.edits))
        t_patches = render(corpus.candidates[triplet.target_id], corpus.seed,
                           triplet.target_id, cc.sigma, cc.patches, cc.d_raw)
        t_emb, t_trace = model.encode_target(t_patches)
        vq.append(q_emb)
        vt.append(t_emb)
        for trace in (q_trace, t_trace):
            kl = model.key_loss_for(trace)
            if kl is not None:
                key_losses.append(kl)
    loss = contrastive_loss(stack_rows(vq), stack_rows(vt), lam)
    if key_losses and key_weight > 0:
        key_term = key_losses[0]
        for kl in key_losses[1:]:
            key_term = key_term + kl
        loss = loss + (key_weight / len(key_losses)) * key_term
    return loss


def _diagnostics(model: IntentModel, epoch: int, step: int) -> dict:
    out = {"epoch": epoch, "step": step}
    for name, p in model.params.items():
        out[f"norm.{name}"] = float(np.linalg.norm(p.data))
        if p.grad is not None:
            out[f"gradnorm.{name}"] = float(np.linalg.norm(p.grad))
    return out


def validation_recall1(model: IntentModel, corpus: Corpus, split: str = "val") -> float:
    """Recall@1 of a split against the full candidate index."""
    index = build_index(encode_candidates(model, corpus), list(range(corpus.n_candidates)),
                        {i: corpus.subset_of_candidate(i) for i in range(corpus.n_candidates)})
    queries, gt_ids, _ = encode_queries(model, corpus, split)
    if len(gt_ids) == 0:
        return 0.0
    hits = sum(
        1 for q, gt in zip(queries, gt_ids)
        if rank_of_ground_truth(index, q, gt) == 1
    )
    return hits / len(gt_ids)


def train(train_config: TrainConfig, corpus: Corpus,
          model_config: ModelConfig | None = None,
          log_file=None) -> TrainResult:
    """Train a fresh model on the corpus train split.

    Deterministic given (train_config, model_config, corpus): batch order
    comes from a dedicated seeded stream. Per-epoch entries record mean
    loss, validation Recall@1 and wall time; entries are returned and, if
    ``log_file`` is given, appended there as JSON lines.
    """
    train_config.validate()
    model_config = model_config or ModelConfig()
    model = IntentModel(model_config, seed=train_config.seed)
    optimizer = make_optimizer(model, train_config)
    frozen_before = model.frozen.checksum()

    triplets = corpus.splits["train"]
    if not triplets:
        raise InvalidConfig("corpus has no training triplets")
    # batches follow a shuffled subset order with same-subset triplets kept
    # adjacent, so the curated hard negatives (other targets of the same
    # subset) appear inside each other's contrastive denominator
    by_subset: dict[int, list[int]] = {}
    for i, t in enumerate(triplets):
        by_subset.setdefault(t.subset_id, []).append(i)
    subset_ids = sorted(by_subset)
    log: list[dict] = []
    for epoch in range(train_config.epochs):
        t0 = time.perf_counter()
        epoch_subsets = subset_ids.copy()
        Xoshiro256StarStar(derive_seed(train_config.seed, "batch-order", epoch)).shuffle(epoch_subsets)
        order = [i for sid in epoch_subsets for i in by_subset[sid]]
        losses = []
        for step, start in enumerate(range(0, len(order), train_config.batch_size)):
            chunk = order[start : start + train_config.batch_size]
            if len(chunk) < 2:
                continue
            batch = [triplets[i] for i in chunk]
            optimizer.zero_grad()
            loss = batch_loss(model, corpus, batch, train_config.lam,
                              train_config.key_loss_weight)
            if not np.isfinite(loss.data):
                raise NonFiniteLoss(
                    f"non-finite loss at epoch {epoch} step {step}",
                    diagnostics=_diagnostics(model, epoch, step),
                )
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
        entry = {
            "epoch": epoch,
            "loss": float(np.mean(losses)) if losses else float("nan"),
            "val_recall1": validation_recall1(model, corpus),
            "wall_time_s": round(time.perf_counter() - t0, 4),
        }
        log.append(entry)
        if log_file is not None:
            log_file.write(json.dumps(entry, separators=(",", ":")) + "\n")
            log_file.flush()
    if model.frozen.checksum() != frozen_before:
        raise RuntimeError("frozen vision encoder changed during training")
    return TrainResult(model, log)


# ---------------------------------------------------------------------------
# gradient audit
# ---------------------------------------------------------------------------

def grad_audit(model: IntentModel, corpus: Corpus, batch=None, eps: float = 1e-5,
               samples_per_tensor: int = 6, seed: int = 0, lam: float = 20.0,
               key_weight: float = 0.5) -> dict:
    """Central finite differences vs reverse-mode, per parameter group.

    Samples a few coordinates of every trainable tensor, perturbs each by
    +/- eps and compares (f(x+eps) - f(x-eps)) / 2 eps against the recorded
    gradient. The loss is the full training objective on a small batch, so
    every parameter group is exercised. Reports max relative error per
    group plus the frozen-encoder contract.
    """
    if batch is None:
        batch = corpus.splits["train"][:2]

    def f() -> float:
        with no_grad():
            return batch_loss(model, corpus, batch, lam, key_weight).item()

    model.zero_grad()
    loss = batch_loss(model, corpus, batch, lam, key_weight)
    loss.backward()
    analytic = {n: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for n, p in model.params.items()}

    rng = np.random.default_rng(seed)
    group_of = {}
    for group, names in model.audit_groups().items():
        for n in names:
            group_of[n] = group
    report = {g: {"max_rel_err": 0.0, "coords": 0} for g in model.audit_groups()}
    for name, p in model.params.items():
        flat = p.data.reshape(-1)
        k = min(samples_per_tensor, flat.size)
        coords = rng.choice(flat.size, size=k, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            f_plus = f()
            flat[c] = orig - eps
            f_minus = f()
            flat[c] = orig
            fd = (f_plus - f_minus) / (2 * eps)
            ad = analytic[name].reshape(-1)[c]
            rel = abs(fd - ad) / max(abs(fd), abs(ad), 1e-6)
            g = report[group_of[name]]
            g["max_rel_err"] = max(g["max_rel_err"], rel)
            g["coords"] += 1
    report["frozen"] = {
        "frozen": True,
        "note": "vision map is a plain array outside the graph; gradient is identically zero",
    }
    return report
