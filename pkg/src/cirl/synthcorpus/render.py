"""Patch-feature rendering: the toy stand-in for raw image pixels.

A scene renders to a P x d_raw grid. Every patch carries the same additive
"bag" vector -- the background embedding plus, per object, the sum of its
shape/color/size attribute embeddings -- plus per-patch Gaussian noise that
is a pure function of (corpus seed, scene, nonce). The additive structure
makes the edit-to-feature map exactly linear in attribute counts, which is
what lets the generator guarantee that distinct candidates are separable:
two scenes collide at sigma=0 exactly when their attribute-count signature
matches, and the generator keeps signatures unique.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from cirl.rng import Xoshiro256StarStar, derive_seed
from cirl.synthcorpus.scenes import (
    N_BACKGROUNDS,
    N_COLORS,
    N_SHAPES,
    N_SIZES,
    Scene,
)

P_PATCHES = 16
D_RAW = 48


@lru_cache(maxsize=32)
def attribute_tables(seed: int, d_raw: int = D_RAW) -> dict[str, np.ndarray]:
    """Fixed per-corpus embedding tables, one row per attribute value."""
    tables = {}
    for name, rows in (
        ("shape", N_SHAPES),
        ("color", N_COLORS),
        ("size", N_SIZES),
        ("background", N_BACKGROUNDS),
    ):
        stream = Xoshiro256StarStar(derive_seed(seed, "embed", name))
        table = stream.gauss_array(rows * d_raw).reshape(rows, d_raw)
        table /= np.sqrt(d_raw)
        table.setflags(write=False)
        tables[name] = table
    return tables


def scene_bag(scene: Scene, seed: int, d_raw: int = D_RAW) -> np.ndarray:
    """Noise-free additive feature vector of a scene."""
    t = attribute_tables(seed, d_raw)
    bag = t["background"][scene.background].copy()
    for o in scene.objects:
        bag += t["shape"][o.shape] + t["color"][o.color] + t["size"][o.size]
    return bag


@lru_cache(maxsize=8192)
def _render_cached(scene: Scene, seed: int, nonce: int, sigma: float,
                   patches: int, d_raw: int) -> np.ndarray:
    bag = scene_bag(scene, seed, d_raw)
    grid = np.tile(bag, (patches, 1))
    if sigma > 0.0:
        stream = Xoshiro256StarStar(
            derive_seed(seed, "render", nonce, scene.as_words())
        )
        grid += sigma * stream.gauss_array(patches * d_raw).reshape(patches, d_raw)
    grid.setflags(write=False)
    return grid


def render(scene: Scene, seed: int, nonce: int, sigma: float,
           patches: int = P_PATCHES, d_raw: int = D_RAW) -> np.ndarray:
    """Deterministic P x d_raw patch features for (scene, seed, nonce)."""
    return _render_cached(scene, seed, nonce, float(sigma), patches, d_raw)


def render_signature(scene: Scene) -> tuple:
    """Attribute-count class of a scene: equal signatures <=> equal
    sigma=0 renders. The generator keeps these globally unique."""
    shapes = [0] * N_SHAPES
    colors = [0] * N_COLORS
    sizes = [0] * N_SIZES
    for o in scene.objects:
        shapes[o.shape] += 1
        colors[o.color] += 1
        sizes[o.size] += 1
    return (tuple(shapes), tuple(colors), tuple(sizes), scene.background)
