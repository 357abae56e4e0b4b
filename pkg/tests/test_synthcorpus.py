"""Corpus layer: edit interpreter, captions, rendering, generation."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cirl.errors import CapacityExceeded, InvalidScene, UnresolvableSelector
from cirl.rng import Xoshiro256StarStar
from cirl.synthcorpus import (
    Add,
    CAPTION_BUDGET,
    ChangeBackground,
    CorpusConfig,
    Modify,
    Remove,
    Replace,
    Scene,
    SceneObject,
    apply_edits,
    caption_tokens,
    gen_corpus,
    load_corpus,
    parse_caption,
    render,
    render_signature,
    save_corpus,
    validate_script,
)
from cirl.synthcorpus.captions import BACKGROUND_BASE, EOS_EDIT, OP_BACKGROUND


def obj(s, c, z):
    return SceneObject(s, c, z)


# -- an independent second interpreter (different representation) ----------

def _interpret_with_dicts(scene: Scene, edits):
    """Oracle twin of apply_edits built on dict records instead of the
    dataclass pipeline; written independently for cross-checking."""
    state = [{"s": o.shape, "c": o.color, "z": o.size} for o in scene.objects]
    bg = scene.background

    def find(sel):
        hits = [i for i, o in enumerate(state)
                if (o["s"], o["c"], o["z"]) == (sel.shape, sel.color, sel.size)]
        if len(hits) != 1:
            raise UnresolvableSelector(str(sel))
        return hits[0]

    for e in edits:
        if isinstance(e, Add):
            if len(state) >= 4:
                raise CapacityExceeded("full")
            state.append({"s": e.obj.shape, "c": e.obj.color, "z": e.obj.size})
        elif isinstance(e, Remove):
            state.pop(find(e.selector))
        elif isinstance(e, Replace):
            state[find(e.selector)] = {"s": e.obj.shape, "c": e.obj.color, "z": e.obj.size}
        elif isinstance(e, Modify):
            i = find(e.selector)
            state[i] = dict(state[i])
            key = {"shape": "s", "color": "c", "size": "z"}[e.attribute]
            state[i][key] = e.value
        elif isinstance(e, ChangeBackground):
            bg = e.value
        else:
            raise TypeError(type(e))
    return Scene(tuple(SceneObject(o["s"], o["c"], o["z"]) for o in state), bg)


class TestApplyEdits:
    def test_identity_modify_leaves_scene_unchanged(self):
        scene = Scene((obj(2, 1, 0), obj(5, 3, 2)), background=1)
        out = apply_edits(scene, [Modify(obj(2, 1, 0), "color", 1)])
        assert out == scene

    def test_replace_single_attribute(self):
        scene = Scene((obj(2, 1, 0),), background=0)
        out = apply_edits(scene, [Replace(obj(2, 1, 0), obj(2, 5, 0))])
        assert out == Scene((obj(2, 5, 0),), background=0)

    def test_matches_independent_interpreter_on_random_scripts(self):
        rng = Xoshiro256StarStar(314)
        cfg = CorpusConfig()
        from cirl.synthcorpus.generate import _random_scene, _draw_sp_edit, _draw_sa_reverse_edit

        checked = 0
        while checked < 200:
            scene = _random_scene(rng, cfg)
            if scene is None:
                continue
            edits = []
            state = scene
            for _ in range(3):
                draw = _draw_sp_edit if rng.randint(2) == 0 else _draw_sa_reverse_edit
                e = draw(rng, cfg, state)
                if e is None:
                    break
                try:
                    state = apply_edits(state, [e])
                except (UnresolvableSelector, CapacityExceeded, InvalidScene):
                    break
                edits.append(e)
            if not edits:
                continue
            assert apply_edits(scene, edits) == _interpret_with_dicts(scene, edits)
            checked += 1

    def test_unresolvable_selector_zero_matches(self):
        scene = Scene((obj(1, 1, 1),), background=0)
        with pytest.raises(UnresolvableSelector):
            apply_edits(scene, [Remove(obj(2, 2, 2))])

    def test_unresolvable_selector_duplicate_matches(self):
        scene = Scene((obj(1, 1, 1), obj(1, 1, 1)), background=0)
        with pytest.raises(UnresolvableSelector):
            apply_edits(scene, [Modify(obj(1, 1, 1), "color", 3)])

    def test_capacity_exceeded(self):
        scene = Scene(tuple(obj(i, 0, 0) for i in range(4)), background=0)
        with pytest.raises(CapacityExceeded):
            apply_edits(scene, [Add(obj(7, 7, 2))])

    def test_canonical_ordering(self):
        a = Scene((obj(3, 1, 0), obj(1, 2, 2)), background=0)
        b = Scene((obj(1, 2, 2), obj(3, 1, 0)), background=0)
        assert a == b
        assert a.objects == tuple(sorted(a.objects))

    def test_scene_validation(self):
        with pytest.raises(InvalidScene):
            Scene((), background=0)
        with pytest.raises(InvalidScene):
            Scene(tuple(obj(i, 0, 0) for i in range(5)), background=0)
        with pytest.raises(InvalidScene):
            SceneObject(8, 0, 0)
        with pytest.raises(InvalidScene):
            Scene((obj(0, 0, 0),), background=4)

    def test_validate_script_length_and_budget(self):
        scene = Scene((obj(0, 0, 0), obj(1, 1, 1), obj(2, 2, 2)), background=0)
        with pytest.raises(InvalidScene):
            validate_script(scene, [])
        five = [Modify(obj(0, 0, 0), "color", i + 1) for i in range(5)]
        with pytest.raises(InvalidScene):
            validate_script(scene, five)
        # four replaces serialize past the caption budget
        replaces = [
            Replace(obj(0, 0, 0), obj(0, 3, 0)),
            Replace(obj(0, 3, 0), obj(0, 4, 0)),
            Replace(obj(1, 1, 1), obj(1, 5, 1)),
            Replace(obj(2, 2, 2), obj(2, 6, 2)),
        ]
        with pytest.raises(InvalidScene):
            validate_script(scene, replaces)


def _all_single_edits():
    objects = [obj(s, c, z) for s in range(8) for c in range(8) for z in range(3)]
    for o in objects:
        yield Add(o)
        yield Remove(o)
    for o in objects[:40]:
        for n in objects[::7]:
            yield Replace(o, n)
    for o in objects:
        for attr, count in (("shape", 8), ("color", 8), ("size", 3)):
            for v in range(count):
                yield Modify(o, attr, v)
    for b in range(4):
        yield ChangeBackground(b)


class TestCaptions:
    def test_background_edit_fixed_encoding(self):
        tokens = caption_tokens([ChangeBackground(2)])
        assert tokens == [OP_BACKGROUND, BACKGROUND_BASE + 2, EOS_EDIT]

    def test_tokens_in_caption_region(self):
        for edit in itertools.islice(_all_single_edits(), 0, None, 97):
            for tok in caption_tokens([edit]):
                assert 11 <= tok <= 42

    def test_injective_on_single_edits(self):
        seen = {}
        for edit in _all_single_edits():
            key = tuple(caption_tokens([edit]))
            assert key not in seen or seen[key] == edit
            seen[key] = edit

    def test_roundtrip_all_single_edits(self):
        for edit in _all_single_edits():
            assert parse_caption(caption_tokens([edit])) == (edit,)

    def test_roundtrip_two_edit_scripts_exhaustive_small_domain(self):
        # restricted attribute domain keeps the pair enumeration exact
        small_objects = [obj(s, c, 0) for s in range(2) for c in range(2)]
        pool = []
        for o in small_objects:
            pool.append(Add(o))
            pool.append(Remove(o))
            pool.append(Modify(o, "color", 1))
            pool.append(Modify(o, "shape", 1))
        for o in small_objects[:2]:
            for n in small_objects[2:]:
                pool.append(Replace(o, n))
        pool.append(ChangeBackground(1))
        for pair in itertools.product(pool, repeat=2):
            assert parse_caption(caption_tokens(pair)) == tuple(pair)

    @given(st.lists(st.sampled_from([
        Add(obj(1, 2, 0)), Remove(obj(3, 3, 1)), ChangeBackground(3),
        Replace(obj(0, 0, 0), obj(7, 7, 2)), Modify(obj(4, 5, 1), "size", 2),
    ]), min_size=1, max_size=4))
    @settings(max_examples=200, deadline=None)
    def test_roundtrip_property(self, edits):
        assert parse_caption(caption_tokens(edits)) == tuple(edits)

    def test_budget_holds_for_generated_corpora(self):
        corpus = gen_corpus(CorpusConfig(n_subsets=6, val_subsets=1, test_subsets=1), 5)
        for t in corpus.all_triplets():
            assert len(caption_tokens(t.edits)) <= CAPTION_BUDGET


class TestRender:
    def test_deterministic(self):
        scene = Scene((obj(1, 2, 0), obj(3, 4, 1)), background=2)
        a = render(scene, seed=9, nonce=5, sigma=0.1)
        b = render(scene, seed=9, nonce=5, sigma=0.1)
        np.testing.assert_array_equal(a, b)
        c = render(scene, seed=9, nonce=6, sigma=0.1)
        assert not np.array_equal(a, c)

    def test_zero_sigma_injective_on_attribute_change(self):
        base = Scene((obj(1, 2, 0),), background=0)
        tweaked = Scene((obj(1, 3, 0),), background=0)
        a = render(base, seed=3, nonce=0, sigma=0.0)
        b = render(tweaked, seed=3, nonce=0, sigma=0.0)
        assert not np.array_equal(a, b)

    def test_signature_equality_matches_zero_sigma_render(self):
        # color swap between objects: same counts, same additive render
        a = Scene((obj(1, 2, 0), obj(3, 4, 0)), background=1)
        b = Scene((obj(1, 4, 0), obj(3, 2, 0)), background=1)
        assert render_signature(a) == render_signature(b)
        np.testing.assert_allclose(
            render(a, seed=3, nonce=0, sigma=0.0),
            render(b, seed=3, nonce=0, sigma=0.0),
            atol=1e-12,
        )

    def test_noise_margin_same_scene_vs_single_edit_neighbor(self):
        # Monte-Carlo: with sigma=0.1, two renders of one scene stay closer
        # than renders of any single-edit neighbour, over 1000 trials
        rng = Xoshiro256StarStar(77)
        scene = Scene((obj(1, 2, 0), obj(3, 4, 1), obj(5, 6, 2)), background=0)
        neighbors = []
        for o in scene.objects:
            for attr, count in (("shape", 8), ("color", 8), ("size", 3)):
                for v in range(count):
                    if v != getattr(o, attr):
                        neighbors.append(apply_edits(scene, [Modify(o, attr, v)]))
        for b in range(1, 4):
            neighbors.append(apply_edits(scene, [ChangeBackground(b)]))

        def flat(s, nonce):
            return render(s, seed=123, nonce=nonce, sigma=0.1).ravel()

        def cos(u, v):
            return float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))

        for trial in range(1000):
            a = flat(scene, 2 * trial)
            b = flat(scene, 2 * trial + 1)
            neighbor = neighbors[rng.randint(len(neighbors))]
            n = flat(neighbor, 2 * trial + 1)
            assert cos(a, b) > cos(a, n)


class TestGenCorpus:
    @pytest.fixture(scope="class")
    def corpus(self):
        return gen_corpus(CorpusConfig(n_subsets=12, val_subsets=2, test_subsets=2), 42)

    def test_determinism_byte_identical(self, tmp_path, corpus):
        twin = gen_corpus(CorpusConfig(n_subsets=12, val_subsets=2, test_subsets=2), 42)
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_corpus(corpus, p1)
        save_corpus(twin, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_seed_sensitivity(self, corpus):
        other = gen_corpus(CorpusConfig(n_subsets=12, val_subsets=2, test_subsets=2), 43)
        assert other.candidates != corpus.candidates

    def test_oracle_soundness_exhaustive(self, corpus):
        for t in corpus.all_triplets():
            target = apply_edits(t.reference, t.edits)
            matches = [i for i, s in enumerate(corpus.candidates) if s == target]
            assert matches == [t.target_id]

    def test_subsets_partition_and_share_shapes(self, corpus):
        seen = set()
        for members in corpus.subsets:
            assert len(members) == 6
            assert not (set(members) & seen)
            seen.update(members)
            scenes = [corpus.candidates[i] for i in members]
            assert len({s.shape_multiset() for s in scenes}) == 1
            assert len(set(scenes)) == 6
        assert seen == set(range(corpus.n_candidates))

    def test_partial_edit_distractors_present(self, corpus):
        for t in corpus.all_triplets():
            members = set(corpus.subsets[t.subset_id])
            n = len(t.edits)
            found = set()
            for mask in range(0, (1 << n) - 1):
                subset = tuple(t.edits[i] for i in range(n) if mask & (1 << i))
                try:
                    scene = apply_edits(t.reference, subset)
                except (UnresolvableSelector, CapacityExceeded, InvalidScene):
                    continue
                for i in members:
                    if i != t.target_id and corpus.candidates[i] == scene:
                        found.add(i)
            assert len(found) >= 2

    def test_signatures_globally_unique(self, corpus):
        sigs = [render_signature(s) for s in corpus.candidates]
        assert len(set(sigs)) == len(sigs)

    def test_splits_are_subset_disjoint(self, corpus):
        by_split = {
            split: {t.subset_id for t in ts} for split, ts in corpus.splits.items()
        }
        assert not (by_split["train"] & by_split["val"])
        assert not (by_split["train"] & by_split["test"])
        assert not (by_split["val"] & by_split["test"])

    def test_edit_taxonomy_exercised(self, corpus):
        kinds = set()
        for t in corpus.all_triplets():
            for e in t.edits:
                kinds.add(type(e).__name__)
        assert {"Modify", "ChangeBackground"} <= kinds
        assert kinds & {"Add", "Remove", "Replace"}

    def test_io_roundtrip(self, tmp_path, corpus):
        path = tmp_path / "c.jsonl"
        save_corpus(corpus, path)
        loaded = load_corpus(path)
        assert loaded.candidates == corpus.candidates
        assert loaded.subsets == corpus.subsets
        assert loaded.splits == corpus.splits
        assert loaded.seed == corpus.seed
        save_corpus(loaded, tmp_path / "c2.jsonl")
        assert (tmp_path / "c2.jsonl").read_bytes() == path.read_bytes()

    def test_invalid_config_rejected(self):
        from cirl.errors import InvalidConfig

        with pytest.raises(InvalidConfig):
            gen_corpus(CorpusConfig(n_subsets=4, val_subsets=2, test_subsets=2), 1)
        with pytest.raises(InvalidConfig):
            gen_corpus(CorpusConfig(n_shapes=1), 1)
        with pytest.raises(InvalidConfig):
            gen_corpus(CorpusConfig(sigma=-0.1), 1)
