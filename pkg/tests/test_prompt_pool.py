"""Prompt pool: selection vs brute force, assembly, key surrogate loss."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cirl.autodiff import Tensor
from cirl.errors import DegenerateQuery, EmptySequence, InvalidConfig
from cirl.prompt_pool import (
    PromptPool,
    Selection,
    assemble,
    combined_distances,
    key_match_loss,
    select,
    text_key_query,
)

RNG = np.random.default_rng(99)


def make_pool(m=6, d_i=4, d_t=5, l_p=2, seed=0):
    r = np.random.default_rng(seed)
    return PromptPool(
        image_keys=Tensor(r.standard_normal((m, d_i)), requires_grad=True),
        text_keys=Tensor(r.standard_normal((m, d_t)), requires_grad=True),
        prompts=Tensor(r.standard_normal((m, l_p, d_t)), requires_grad=True),
    )


def brute_force_selection(distances: np.ndarray, k: int) -> tuple[int, ...]:
    """Independent oracle: enumerate every k-subset, minimise the summed
    distance, break ties toward the lexicographically smallest ordered
    (distance, index) profile."""
    best_key, best_order = None, None
    for subset in itertools.combinations(range(len(distances)), k):
        ordered = tuple(sorted(subset, key=lambda i: (distances[i], i)))
        key = (
            sum(distances[i] for i in subset),
            tuple((distances[i], i) for i in ordered),
        )
        if best_key is None or key < best_key:
            best_key, best_order = key, ordered
    return best_order


class TestTextKeyQuery:
    def test_single_embedding(self):
        v = RNG.standard_normal(5)
        np.testing.assert_array_equal(text_key_query(v.reshape(1, -1)), v)

    def test_symmetry(self):
        v = RNG.standard_normal(5)
        out = text_key_query(np.stack([v, -v]))
        np.testing.assert_allclose(out, 0.0, atol=1e-16)

    def test_matches_independent_mean(self):
        seq = RNG.standard_normal((7, 6))
        acc = np.zeros(6)
        for row in reversed(seq):
            acc = acc + row
        np.testing.assert_allclose(text_key_query(seq), acc / 7, atol=1e-12)

    def test_empty_raises(self):
        with pytest.raises(EmptySequence):
            text_key_query(np.zeros((0, 4)))


class TestSelect:
    def test_single_entry_pool(self):
        pool = make_pool(m=1)
        sel = select(pool, RNG.standard_normal(4), RNG.standard_normal(5), 1)
        assert sel.indices == (0,)

    def test_exact_key_match_comes_first_with_zero_distance(self):
        pool = make_pool(m=4, d_i=4, d_t=4)
        # entry 3 matches the queries; all other keys orthogonal to them
        ik = np.zeros((4, 4))
        tk = np.zeros((4, 4))
        ik[3] = [1, 0, 0, 0]
        tk[3] = [0, 1, 0, 0]
        for i in range(3):
            ik[i] = [0, 0, 1, 0]
            tk[i] = [0, 0, 0, 1]
        pool.image_keys.data = ik
        pool.text_keys.data = tk
        sel = select(pool, np.array([1.0, 0, 0, 0]), np.array([0, 1.0, 0, 0]), 2)
        assert sel.indices[0] == 3
        assert sel.distances[0] == pytest.approx(0.0, abs=1e-12)

    def test_matches_brute_force_on_random_cases(self):
        for case in range(200):
            r = np.random.default_rng(case)
            m = int(r.integers(2, 13))
            k = int(r.integers(1, min(m, 4) + 1))
            pool = make_pool(m=m, seed=case + 1000)
            if case % 3 == 0 and m >= 4:
                # force exact duplicates -> distance ties
                pool.image_keys.data[1] = pool.image_keys.data[0]
                pool.text_keys.data[1] = pool.text_keys.data[0]
                pool.image_keys.data[3] = pool.image_keys.data[2]
                pool.text_keys.data[3] = pool.text_keys.data[2]
            q_img = r.standard_normal(4)
            q_text = r.standard_normal(5)
            sel = select(pool, q_img, q_text, k)
            dist = combined_distances(pool, q_img, q_text)
            assert sel.indices == brute_force_selection(dist, k)
            assert list(sel.distances) == sorted(sel.distances)

    def test_tie_breaks_to_lower_index(self):
        pool = make_pool(m=4)
        pool.image_keys.data = np.tile(pool.image_keys.data[0], (4, 1))
        pool.text_keys.data = np.tile(pool.text_keys.data[0], (4, 1))
        sel = select(pool, RNG.standard_normal(4), RNG.standard_normal(5), 3)
        assert sel.indices == (0, 1, 2)

    @given(st.floats(min_value=1e-3, max_value=1e3),
           st.floats(min_value=1e-3, max_value=1e3))
    @settings(max_examples=50, deadline=None)
    def test_scale_invariance(self, a, b):
        pool = make_pool(m=8, seed=5)
        q_img = np.asarray([0.3, -1.2, 0.5, 2.0])
        q_text = np.asarray([1.0, 0.1, -0.4, 0.8, -1.5])
        base = select(pool, q_img, q_text, 3)
        scaled = select(pool, a * q_img, b * q_text, 3)
        assert base.indices == scaled.indices

    def test_degenerate_query_raises(self):
        pool = make_pool()
        with pytest.raises(DegenerateQuery):
            select(pool, np.zeros(4), RNG.standard_normal(5), 1)
        with pytest.raises(DegenerateQuery):
            select(pool, RNG.standard_normal(4), np.zeros(5), 1)

    def test_top_k_bounds(self):
        pool = make_pool(m=3)
        with pytest.raises(InvalidConfig):
            select(pool, RNG.standard_normal(4), RNG.standard_normal(5), 4)


class TestAssemble:
    def test_sentinel_wrapped_layout(self):
        pool = make_pool(m=3, l_p=2, d_t=5)
        sp, sp_end = Tensor(RNG.standard_normal(5)), Tensor(RNG.standard_normal(5))
        sel = Selection(indices=(2,), distances=(0.1,))
        seq = assemble(pool, sel, sp, sp_end)
        assert seq.shape == (4, 5)  # <sp>, p1, p2, </sp>
        np.testing.assert_array_equal(seq.data[0], sp.data)
        np.testing.assert_array_equal(seq.data[1:3], pool.prompts.data[2])
        np.testing.assert_array_equal(seq.data[3], sp_end.data)

    def test_order_sensitivity(self):
        pool = make_pool(m=3, l_p=1)
        sp, sp_end = Tensor(np.zeros(5)), Tensor(np.zeros(5))
        a = assemble(pool, Selection((0, 1), (0.1, 0.2)), sp, sp_end)
        b = assemble(pool, Selection((1, 0), (0.1, 0.2)), sp, sp_end)
        assert not np.array_equal(a.data, b.data)

    def test_unselected_prompts_get_zero_gradient(self):
        pool = make_pool(m=5, l_p=2)
        sp = Tensor(RNG.standard_normal(5), requires_grad=True)
        sp_end = Tensor(RNG.standard_normal(5), requires_grad=True)
        sel = Selection(indices=(1, 4), distances=(0.0, 0.1))
        seq = assemble(pool, sel, sp, sp_end)
        (seq * seq).sum().backward()
        g = pool.prompts.grad
        for unselected in (0, 2, 3):
            assert np.all(g[unselected] == 0.0)
        for chosen in (1, 4):
            assert np.any(g[chosen] != 0.0)
        assert np.any(sp.grad != 0.0) and np.any(sp_end.grad != 0.0)


class TestKeyMatchLoss:
    def test_zero_when_keys_equal_queries(self):
        pool = make_pool(m=2, d_i=3, d_t=3)
        q_img = np.array([1.0, 2.0, -1.0])
        q_text = np.array([0.5, -0.5, 2.0])
        pool.image_keys.data[0] = q_img
        pool.text_keys.data[0] = q_text
        loss = key_match_loss(pool, q_img, q_text, Selection((0,), (0.0,)))
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_antipodal_keys_give_four(self):
        pool = make_pool(m=2, d_i=3, d_t=3)
        q_img = np.array([1.0, 2.0, -1.0])
        q_text = np.array([0.5, -0.5, 2.0])
        pool.image_keys.data[0] = -q_img
        pool.text_keys.data[0] = -q_text
        loss = key_match_loss(pool, q_img, q_text, Selection((0,), (4.0,)))
        assert loss.item() == pytest.approx(4.0, abs=1e-12)

    def test_matches_independent_recomputation(self):
        pool = make_pool(m=7, d_i=4, d_t=5, seed=3)
        q_img = RNG.standard_normal(4)
        q_text = RNG.standard_normal(5)
        sel = select(pool, q_img, q_text, 3)
        loss = key_match_loss(pool, q_img, q_text, sel)

        def cos(u, v):
            return (u @ v) / (np.linalg.norm(u) * np.linalg.norm(v))

        expect = np.mean([
            (1 - cos(q_img, pool.image_keys.data[i]))
            + (1 - cos(q_text, pool.text_keys.data[i]))
            for i in sel.indices
        ])
        assert loss.item() == pytest.approx(expect, abs=1e-12)

    def test_gradients_reach_keys_only(self):
        pool = make_pool(m=4)
        q_img = RNG.standard_normal(4)
        q_text = RNG.standard_normal(5)
        sel = select(pool, q_img, q_text, 2)
        key_match_loss(pool, q_img, q_text, sel).backward()
        assert pool.image_keys.grad is not None and np.any(pool.image_keys.grad != 0)
        assert pool.text_keys.grad is not None and np.any(pool.text_keys.grad != 0)
        assert pool.prompts.grad is None
        unselected = set(range(4)) - set(sel.indices)
        for i in unselected:
            assert np.all(pool.image_keys.grad[i] == 0)
            assert np.all(pool.text_keys.grad[i] == 0)

    def test_selection_equals_distance_computation(self):
        # selection distances are exactly the combined distances it sorted
        pool = make_pool(m=5)
        q_img, q_text = RNG.standard_normal(4), RNG.standard_normal(5)
        sel = select(pool, q_img, q_text, 5)
        dist = combined_distances(pool, q_img, q_text)
        np.testing.assert_allclose(
            np.array(sel.distances), np.sort(dist), atol=1e-12
        )
