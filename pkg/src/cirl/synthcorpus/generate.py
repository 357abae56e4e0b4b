"""Deterministic corpus generator.

Candidates come in subsets of six scenes sharing a shape multiset (the
curated hard-negative groups). Each subset is an edit chain:

    M0 --e0--> M1 --e1--> ... --e4--> M5

with every ``e_k`` an effective shape-preserving edit (color, size or
background) and every node carrying a globally unique attribute-count
signature. Triplets run along the chain in both directions, so all six
members are retrieval targets of some triplet:

- forward:  (M0 -> M2), (M1 -> M3), (M2 -> M4), (M3 -> M5), scripts of
  two consecutive chain edits;
- backward: (M2 -> M0), (M3 -> M1), scripts of two inverted edits;
- external (optional): a reference outside the subset built by inverting
  one shape-affecting edit against a chain node, with script
  [shape-edit, e_i, e_i+1] landing on M_i+2. These keep the add / remove /
  replace / shape-modify vocabulary exercised.

Every triplet's two partial-edit distractors (strict-subset applications
of its script, including the empty subset) are chain members by
construction, which is what makes the subsets genuinely hard.

All randomness flows through one xoshiro256** stream, so generation is a
pure function of (config, seed); rejection sampling just consumes more of
the stream.
"""

from __future__ import annotations

from dataclasses import dataclass

from cirl.errors import GenerationError, InvalidConfig
from cirl.rng import Xoshiro256StarStar, derive_seed
from cirl.synthcorpus.render import render_signature
from cirl.synthcorpus.scenes import (
    MAX_OBJECTS,
    N_BACKGROUNDS,
    N_COLORS,
    N_SHAPES,
    N_SIZES,
    Add,
    ChangeBackground,
    Edit,
    Modify,
    Remove,
    Replace,
    Scene,
    SceneObject,
    apply_edit,
    apply_edits,
    modified_object,
    preserves_shapes,
    validate_script,
)

SUBSET_SIZE = 6
CHAIN_EDITS = SUBSET_SIZE - 1
QUERY_NONCE_BASE = 1_000_000

_SUBSET_ATTEMPTS = 400
_INNER_ATTEMPTS = 64

# (reference node, target node) pairs; forward pairs use chain edits
# [i, j), backward pairs use inverted edits [j, i) reversed
_FORWARD_PAIRS = ((0, 2), (1, 3), (2, 4), (3, 5))
_BACKWARD_PAIRS = ((2, 0), (3, 1))


@dataclass
class CorpusConfig:
    n_subsets: int = 128
    n_external_triplets: int = 2      # per subset, 0..2
    val_subsets: int = 16
    test_subsets: int = 16
    # generator-side attribute ranges (must fit the scene domain)
    n_shapes: int = 8
    n_colors: int = 8
    n_sizes: int = 3
    n_backgrounds: int = 4
    min_objects: int = 2
    max_objects: int = 4
    # render parameters
    patches: int = 16
    d_raw: int = 48
    sigma: float = 0.05

    @property
    def n_candidates(self) -> int:
        return SUBSET_SIZE * self.n_subsets

    @property
    def triplets_per_subset(self) -> int:
        return len(_FORWARD_PAIRS) + len(_BACKWARD_PAIRS) + self.n_external_triplets

    def validate(self) -> None:
        checks = [
            (self.n_subsets >= 1, "n_subsets must be positive"),
            (0 <= self.n_external_triplets <= 2,
             "n_external_triplets must be 0, 1 or 2"),
            (self.val_subsets >= 1 and self.test_subsets >= 1,
             "val/test subset counts must be positive"),
            (self.val_subsets + self.test_subsets < self.n_subsets,
             "train split would be empty"),
            (2 <= self.n_shapes <= N_SHAPES, "n_shapes out of range"),
            (2 <= self.n_colors <= N_COLORS, "n_colors out of range"),
            (1 <= self.n_sizes <= N_SIZES, "n_sizes out of range"),
            (2 <= self.n_backgrounds <= N_BACKGROUNDS, "n_backgrounds out of range"),
            (1 <= self.min_objects <= self.max_objects <= MAX_OBJECTS,
             "object count bounds invalid"),
            (self.patches >= 1, "patches must be positive"),
            (self.d_raw >= 4, "d_raw too small"),
            (self.sigma >= 0.0, "sigma must be non-negative"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InvalidConfig(msg)


@dataclass(frozen=True)
class Triplet:
    reference: Scene
    edits: tuple[Edit, ...]
    target_id: int
    subset_id: int
    nonce: int


@dataclass
class Corpus:
    candidates: list[Scene]
    subsets: list[list[int]]
    splits: dict[str, list[Triplet]]
    seed: int
    config: CorpusConfig

    @property
    def n_candidates(self) -> int:
        return len(self.candidates)

    def subset_of_candidate(self, candidate_id: int) -> int:
        return candidate_id // SUBSET_SIZE

    def all_triplets(self) -> list[Triplet]:
        return [t for split in ("train", "val", "test") for t in self.splits[split]]


# ---------------------------------------------------------------------------
# random edit instantiation
# ---------------------------------------------------------------------------

def _random_object(rng: Xoshiro256StarStar, cfg: CorpusConfig) -> SceneObject:
    return SceneObject(
        rng.randint(cfg.n_shapes), rng.randint(cfg.n_colors), rng.randint(cfg.n_sizes)
    )


def _random_scene(rng: Xoshiro256StarStar, cfg: CorpusConfig) -> Scene | None:
    count = cfg.min_objects + rng.randint(cfg.max_objects - cfg.min_objects + 1)
    objects: list[SceneObject] = []
    for _ in range(_INNER_ATTEMPTS):
        if len(objects) == count:
            break
        obj = _random_object(rng, cfg)
        if obj not in objects:  # distinct triples keep selectors resolvable
            objects.append(obj)
    if len(objects) != count:
        return None
    return Scene(tuple(objects), rng.randint(cfg.n_backgrounds))


def _unique_objects(state: Scene) -> list[SceneObject]:
    counts: dict[SceneObject, int] = {}
    for o in state.objects:
        counts[o] = counts.get(o, 0) + 1
    return [o for o, c in counts.items() if c == 1]


_SP_KINDS = ("modify_color", "modify_size", "change_background")
_SA_KINDS = ("add", "remove", "replace", "modify_shape")


def _draw_sp_edit(rng, cfg, state: Scene) -> Edit | None:
    """One effective shape-preserving edit on the current scene."""
    kind = rng.choice(_SP_KINDS)
    selectable = _unique_objects(state)
    if kind == "modify_color" and selectable and cfg.n_colors >= 2:
        sel = rng.choice(selectable)
        value = rng.randint(cfg.n_colors - 1)
        if value >= sel.color:
            value += 1
        candidate = modified_object(sel, "color", value)
        if candidate in state.objects:
            return None
        return Modify(sel, "color", value)
    if kind == "modify_size" and selectable and cfg.n_sizes >= 2:
        sel = rng.choice(selectable)
        value = rng.randint(cfg.n_sizes - 1)
        if value >= sel.size:
            value += 1
        candidate = modified_object(sel, "size", value)
        if candidate in state.objects:
            return None
        return Modify(sel, "size", value)
    if kind == "change_background" and cfg.n_backgrounds >= 2:
        value = rng.randint(cfg.n_backgrounds - 1)
        if value >= state.background:
            value += 1
        return ChangeBackground(value)
    return None


def _draw_sa_reverse_edit(rng, cfg, state: Scene) -> Edit | None:
    """One effective shape-affecting edit on the current scene (used in
    reverse to manufacture an external reference)."""
    kind = rng.choice(_SA_KINDS)
    selectable = _unique_objects(state)
    if kind == "add":
        if len(state.objects) >= cfg.max_objects:
            return None
        for _ in range(_INNER_ATTEMPTS):
            obj = _random_object(rng, cfg)
            if obj not in state.objects:
                return Add(obj)
        return None
    if kind == "remove":
        if len(state.objects) <= max(1, cfg.min_objects - 1) or not selectable:
            return None
        return Remove(rng.choice(selectable))
    if kind == "replace":
        if not selectable:
            return None
        sel = rng.choice(selectable)
        for _ in range(_INNER_ATTEMPTS):
            obj = _random_object(rng, cfg)
            if obj.shape != sel.shape and obj not in state.objects:
                return Replace(sel, obj)
        return None
    if kind == "modify_shape":
        if not selectable or cfg.n_shapes < 2:
            return None
        sel = rng.choice(selectable)
        value = rng.randint(cfg.n_shapes - 1)
        if value >= sel.shape:
            value += 1
        candidate = modified_object(sel, "shape", value)
        if candidate in state.objects:
            return None
        return Modify(sel, "shape", value)
    return None


def _inverse_of(edit: Edit, state: Scene) -> Edit:
    """Edit that undoes ``edit`` (which is about to be applied to state)."""
    if isinstance(edit, Add):
        return Remove(edit.obj)
    if isinstance(edit, Remove):
        return Add(edit.selector)
    if isinstance(edit, Replace):
        return Replace(edit.obj, edit.selector)
    if isinstance(edit, Modify):
        after = modified_object(edit.selector, edit.attribute, edit.value)
        return Modify(after, edit.attribute, getattr(edit.selector, edit.attribute))
    if isinstance(edit, ChangeBackground):
        return ChangeBackground(state.background)
    raise TypeError(f"unknown edit type {type(edit)!r}")


# ---------------------------------------------------------------------------
# subset construction
# ---------------------------------------------------------------------------

def _try_script(reference: Scene, script, expected: Scene) -> bool:
    try:
        return validate_script(reference, script, require_effective=True) == expected
    except Exception:
        return False


def _build_chain(rng, cfg, used_signatures: set):
    """Six signature-fresh nodes joined by effective SP edits."""
    base = _random_scene(rng, cfg)
    if base is None:
        return None
    signatures = {render_signature(base)}
    if signatures & used_signatures:
        return None
    nodes, edits = [base], []
    for _ in range(CHAIN_EDITS):
        state = nodes[-1]
        nxt = None
        for _ in range(_INNER_ATTEMPTS):
            edit = _draw_sp_edit(rng, cfg, state)
            if edit is None:
                continue
            try:
                candidate = apply_edit(state, edit)
            except Exception:
                continue
            sig = render_signature(candidate)
            if candidate == state or sig in signatures or sig in used_signatures:
                continue
            nxt, chosen = candidate, edit
            signatures.add(sig)
            break
        if nxt is None:
            return None
        nodes.append(nxt)
        edits.append(chosen)
    return nodes, edits, signatures


def _chain_scripts(nodes, edits):
    """(ref node, target node, script) for the forward/backward pattern."""
    inverses = [_inverse_of(edits[k], nodes[k]) for k in range(CHAIN_EDITS)]
    out = []
    for i, j in _FORWARD_PAIRS:
        out.append((i, j, tuple(edits[i:j])))
    for j, i in _BACKWARD_PAIRS:
        script = tuple(inverses[k] for k in range(j - 1, i - 1, -1))
        out.append((j, i, script))
    return out


def _build_external(rng, cfg, nodes, edits):
    """External triplet: reference off the chain, script lands on M_i+2."""
    for _ in range(_INNER_ATTEMPTS):
        i = rng.randint(len(_FORWARD_PAIRS))  # start node 0..3
        anchor = nodes[i]
        reverse = _draw_sa_reverse_edit(rng, cfg, anchor)
        if reverse is None:
            continue
        forward = _inverse_of(reverse, anchor)
        try:
            reference = apply_edit(anchor, reverse)
        except Exception:
            continue
        script = (forward, edits[i], edits[i + 1])
        if _try_script(reference, script, nodes[i + 2]):
            return reference, i + 2, script
    return None


def _build_subset(rng, cfg, used_signatures: set):
    """One subset: six chain nodes plus its triplets; None to retry."""
    chain = _build_chain(rng, cfg, used_signatures)
    if chain is None:
        return None
    nodes, edits, signatures = chain
    triplets = []
    for ref_node, tgt_node, script in _chain_scripts(nodes, edits):
        if not _try_script(nodes[ref_node], script, nodes[tgt_node]):
            return None
        triplets.append((nodes[ref_node], script, tgt_node))
    for _ in range(cfg.n_external_triplets):
        ext = _build_external(rng, cfg, nodes, edits)
        if ext is None:
            return None
        reference, tgt_node, script = ext
        triplets.append((reference, script, tgt_node))
    order = list(range(SUBSET_SIZE))
    rng.shuffle(order)
    members = [nodes[i] for i in order]
    position_of_node = {node: pos for pos, node in enumerate(order)}
    used_signatures.update(signatures)
    return members, position_of_node, triplets


def gen_corpus(config: CorpusConfig, seed: int) -> Corpus:
    """Generate a corpus; pure function of (config, seed)."""
    config.validate()
    rng = Xoshiro256StarStar(derive_seed(seed, "corpus"))
    candidates: list[Scene] = []
    subsets: list[list[int]] = []
    raw_triplets: list[tuple[int, Scene, tuple[Edit, ...], int]] = []
    used_signatures: set = set()
    for subset_id in range(config.n_subsets):
        built = None
        for _ in range(_SUBSET_ATTEMPTS):
            built = _build_subset(rng, config, used_signatures)
            if built is not None:
                break
        if built is None:
            raise GenerationError(
                f"could not build subset {subset_id}; attribute ranges too tight"
            )
        members, position_of_node, triplets = built
        base = len(candidates)
        candidates.extend(members)
        subsets.append(list(range(base, base + SUBSET_SIZE)))
        for reference, script, tgt_node in triplets:
            target_id = base + position_of_node[tgt_node]
            raw_triplets.append((subset_id, reference, script, target_id))

    # split by subset so held-out triplets never share a training target
    order = list(range(config.n_subsets))
    rng.shuffle(order)
    split_of_subset: dict[int, str] = {}
    for i, sid in enumerate(order):
        if i < config.test_subsets:
            split_of_subset[sid] = "test"
        elif i < config.test_subsets + config.val_subsets:
            split_of_subset[sid] = "val"
        else:
            split_of_subset[sid] = "train"

    splits: dict[str, list[Triplet]] = {"train": [], "val": [], "test": []}
    for idx, (subset_id, reference, script, target_id) in enumerate(raw_triplets):
        triplet = Triplet(
            reference=reference,
            edits=script,
            target_id=target_id,
            subset_id=subset_id,
            nonce=QUERY_NONCE_BASE + idx,
        )
        splits[split_of_subset[subset_id]].append(triplet)
    return Corpus(candidates, subsets, splits, seed, config)
