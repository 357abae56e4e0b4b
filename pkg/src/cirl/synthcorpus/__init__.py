"""Deterministic synthetic composed-retrieval corpus with an analytic oracle.

A corpus instance pairs a reference scene with an edit script; the unique
correct retrieval target is ``apply_edits(reference, edits)``, so every
generated example carries its own ground truth.
"""

from cirl.synthcorpus.scenes import (
    MAX_EDITS,
    MAX_OBJECTS,
    MIN_EDITS,
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
from cirl.synthcorpus.captions import (
    CAPTION_BUDGET,
    VOCAB_SIZE,
    caption_tokens,
    parse_caption,
)
from cirl.synthcorpus.render import render, render_signature, scene_bag
from cirl.synthcorpus.generate import Corpus, CorpusConfig, Triplet, gen_corpus
from cirl.synthcorpus.io import load_corpus, save_corpus

__all__ = [
    "Add",
    "CAPTION_BUDGET",
    "ChangeBackground",
    "Corpus",
    "CorpusConfig",
    "Edit",
    "MAX_EDITS",
    "MAX_OBJECTS",
    "MIN_EDITS",
    "Modify",
    "N_BACKGROUNDS",
    "N_COLORS",
    "N_SHAPES",
    "N_SIZES",
    "Remove",
    "Replace",
    "Scene",
    "SceneObject",
    "Triplet",
    "VOCAB_SIZE",
    "apply_edit",
    "apply_edits",
    "caption_tokens",
    "gen_corpus",
    "load_corpus",
    "modified_object",
    "parse_caption",
    "preserves_shapes",
    "render",
    "render_signature",
    "save_corpus",
    "scene_bag",
    "validate_script",
]
