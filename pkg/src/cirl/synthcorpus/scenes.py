"""Scenes, edit scripts, and the analytic edit interpreter.

A scene is a small multiset of attributed objects plus a background id,
kept in canonical (sorted) order so scene equality is structural. Edits
select objects by their full attribute triple; a selector must match
exactly one object at the moment it is applied.
"""

from __future__ import annotations

from dataclasses import dataclass

from cirl.errors import (
    CapacityExceeded,
    InvalidScene,
    UnresolvableSelector,
)

N_SHAPES = 8
N_COLORS = 8
N_SIZES = 3
N_BACKGROUNDS = 4
MAX_OBJECTS = 4

MIN_EDITS = 1
MAX_EDITS = 4

ATTRIBUTES = ("shape", "color", "size")
_ATTR_RANGES = {"shape": N_SHAPES, "color": N_COLORS, "size": N_SIZES}


@dataclass(frozen=True, order=True)
class SceneObject:
    shape: int
    color: int
    size: int

    def __post_init__(self):
        if not (0 <= self.shape < N_SHAPES):
            raise InvalidScene(f"shape id {self.shape} out of range")
        if not (0 <= self.color < N_COLORS):
            raise InvalidScene(f"color id {self.color} out of range")
        if not (0 <= self.size < N_SIZES):
            raise InvalidScene(f"size id {self.size} out of range")


@dataclass(frozen=True)
class Scene:
    objects: tuple[SceneObject, ...]
    background: int

    def __post_init__(self):
        objects = tuple(self.objects)
        if not objects:
            raise InvalidScene("scene needs at least one object")
        if len(objects) > MAX_OBJECTS:
            raise InvalidScene(f"scene holds at most {MAX_OBJECTS} objects")
        if not (0 <= self.background < N_BACKGROUNDS):
            raise InvalidScene(f"background id {self.background} out of range")
        # canonical order makes equality well-defined
        object.__setattr__(self, "objects", tuple(sorted(objects)))

    def shape_multiset(self) -> tuple[int, ...]:
        return tuple(sorted(o.shape for o in self.objects))

    def as_words(self) -> tuple[int, ...]:
        """Flat integer encoding (seed-derivation / hashing helper)."""
        words = [self.background, len(self.objects)]
        for o in self.objects:
            words.extend((o.shape, o.color, o.size))
        return tuple(words)


@dataclass(frozen=True)
class Add:
    obj: SceneObject


@dataclass(frozen=True)
class Remove:
    selector: SceneObject


@dataclass(frozen=True)
class Replace:
    selector: SceneObject
    obj: SceneObject


@dataclass(frozen=True)
class Modify:
    selector: SceneObject
    attribute: str
    value: int

    def __post_init__(self):
        if self.attribute not in ATTRIBUTES:
            raise InvalidScene(f"unknown attribute {self.attribute!r}")
        if not (0 <= self.value < _ATTR_RANGES[self.attribute]):
            raise InvalidScene(f"{self.attribute} value {self.value} out of range")


@dataclass(frozen=True)
class ChangeBackground:
    value: int

    def __post_init__(self):
        if not (0 <= self.value < N_BACKGROUNDS):
            raise InvalidScene(f"background value {self.value} out of range")


Edit = Add | Remove | Replace | Modify | ChangeBackground


def modified_object(obj: SceneObject, attribute: str, value: int) -> SceneObject:
    fields = {"shape": obj.shape, "color": obj.color, "size": obj.size}
    fields[attribute] = value
    return SceneObject(**fields)


def _resolve(objects: tuple[SceneObject, ...], selector: SceneObject) -> int:
    matches = [i for i, o in enumerate(objects) if o == selector]
    if len(matches) != 1:
        raise UnresolvableSelector(
            f"selector {selector} matched {len(matches)} objects"
        )
    return matches[0]


def apply_edit(scene: Scene, edit: Edit) -> Scene:
    """Apply one edit; selectors resolve against the current scene state."""
    objects = list(scene.objects)
    background = scene.background
    if isinstance(edit, Add):
        if len(objects) >= MAX_OBJECTS:
            raise CapacityExceeded("ADD would exceed the object limit")
        objects.append(edit.obj)
    elif isinstance(edit, Remove):
        del objects[_resolve(scene.objects, edit.selector)]
    elif isinstance(edit, Replace):
        objects[_resolve(scene.objects, edit.selector)] = edit.obj
    elif isinstance(edit, Modify):
        i = _resolve(scene.objects, edit.selector)
        objects[i] = modified_object(objects[i], edit.attribute, edit.value)
    elif isinstance(edit, ChangeBackground):
        background = edit.value
    else:
        raise TypeError(f"unknown edit type {type(edit)!r}")
    return Scene(tuple(objects), background)


def apply_edits(reference: Scene, edits) -> Scene:
    """Pure sequential interpreter: the analytic retrieval oracle."""
    scene = reference
    for edit in edits:
        scene = apply_edit(scene, edit)
    return scene


def preserves_shapes(edit: Edit) -> bool:
    """True if the edit cannot change a scene's shape multiset."""
    if isinstance(edit, (Add, Remove)):
        return False
    if isinstance(edit, Replace):
        return edit.selector.shape == edit.obj.shape
    if isinstance(edit, Modify):
        return edit.attribute != "shape"
    return True  # ChangeBackground


def validate_script(reference: Scene, edits, require_effective: bool = False) -> Scene:
    """Check the full edit-script contract against a reference scene.

    Enforces: script length, step-by-step unique selector resolution,
    selectors also unique in the raw reference, and the serialized caption
    within budget. With ``require_effective`` every edit must change the
    scene (the corpus generator's stricter contract; identity edits stay
    legal for the plain interpreter). Returns the edited scene.
    """
    from cirl.synthcorpus.captions import CAPTION_BUDGET, caption_tokens

    edits = tuple(edits)
    if not (MIN_EDITS <= len(edits) <= MAX_EDITS):
        raise InvalidScene(f"script length {len(edits)} outside [{MIN_EDITS}, {MAX_EDITS}]")
    if len(caption_tokens(edits)) > CAPTION_BUDGET:
        raise InvalidScene("caption serialization exceeds the token budget")
    state = reference
    for edit in edits:
        selector = getattr(edit, "selector", None)
        if selector is not None:
            _resolve(reference.objects, selector)
        nxt = apply_edit(state, edit)
        if require_effective and nxt == state:
            raise InvalidScene(f"edit {edit} does not change the scene")
        state = nxt
    return state
