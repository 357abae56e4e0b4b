"""Fixed token vocabulary and the edit-script <-> caption codec.

The 96-id vocabulary is laid out as:

====== =======================================
ids    meaning
====== =======================================
0      PAD
1, 2   soft-prompt sentinels ``<sp>`` ``</sp>``
3-6    query-role task-prompt tokens
7-10   target-role task-prompt tokens
11-15  edit op codes (add/remove/replace/modify/background)
16-18  attribute codes (shape/color/size) for modify
19     end-of-edit separator
20-27  shape values 0-7
28-35  color values 0-7
36-38  size values 0-2
39-42  background values 0-3
43-95  reserved
====== =======================================

Captions are the concatenation of per-edit encodings, each terminated by
the end-of-edit token; the codec round-trips exactly.
"""

from __future__ import annotations

from cirl.synthcorpus.scenes import (
    Add,
    ChangeBackground,
    Edit,
    Modify,
    Remove,
    Replace,
    SceneObject,
)

VOCAB_SIZE = 96

PAD = 0
SP_OPEN = 1
SP_CLOSE = 2
TASK_QUERY_TOKENS = (3, 4, 5, 6)
TASK_TARGET_TOKENS = (7, 8, 9, 10)

OP_ADD = 11
OP_REMOVE = 12
OP_REPLACE = 13
OP_MODIFY = 14
OP_BACKGROUND = 15
ATTR_SHAPE = 16
ATTR_COLOR = 17
ATTR_SIZE = 18
EOS_EDIT = 19

SHAPE_BASE = 20
COLOR_BASE = 28
SIZE_BASE = 36
BACKGROUND_BASE = 39

CAPTION_REGION = (11, 42)
CAPTION_BUDGET = 24

_ATTR_TOKEN = {"shape": ATTR_SHAPE, "color": ATTR_COLOR, "size": ATTR_SIZE}
_ATTR_BASE = {"shape": SHAPE_BASE, "color": COLOR_BASE, "size": SIZE_BASE}
_TOKEN_ATTR = {v: k for k, v in _ATTR_TOKEN.items()}


def _object_tokens(obj: SceneObject) -> list[int]:
    return [SHAPE_BASE + obj.shape, COLOR_BASE + obj.color, SIZE_BASE + obj.size]


def caption_tokens(edits) -> list[int]:
    """Serialize an edit script into caption-region token ids."""
    tokens: list[int] = []
    for edit in edits:
        if isinstance(edit, Add):
            tokens += [OP_ADD, *_object_tokens(edit.obj)]
        elif isinstance(edit, Remove):
            tokens += [OP_REMOVE, *_object_tokens(edit.selector)]
        elif isinstance(edit, Replace):
            tokens += [OP_REPLACE, *_object_tokens(edit.selector), *_object_tokens(edit.obj)]
        elif isinstance(edit, Modify):
            tokens += [
                OP_MODIFY,
                *_object_tokens(edit.selector),
                _ATTR_TOKEN[edit.attribute],
                _ATTR_BASE[edit.attribute] + edit.value,
            ]
        elif isinstance(edit, ChangeBackground):
            tokens += [OP_BACKGROUND, BACKGROUND_BASE + edit.value]
        else:
            raise TypeError(f"unknown edit type {type(edit)!r}")
        tokens.append(EOS_EDIT)
    return tokens


class CaptionSyntaxError(ValueError):
    pass


class _Reader:
    def __init__(self, tokens):
        self.tokens = list(tokens)
        self.pos = 0

    def done(self) -> bool:
        return self.pos >= len(self.tokens)

    def take(self) -> int:
        if self.done():
            raise CaptionSyntaxError("truncated caption")
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def take_value(self, base: int, count: int) -> int:
        tok = self.take()
        if not (base <= tok < base + count):
            raise CaptionSyntaxError(f"expected value token at {self.pos - 1}, got {tok}")
        return tok - base

    def take_object(self) -> SceneObject:
        return SceneObject(
            self.take_value(SHAPE_BASE, 8),
            self.take_value(COLOR_BASE, 8),
            self.take_value(SIZE_BASE, 3),
        )

    def expect_eos(self) -> None:
        tok = self.take()
        if tok != EOS_EDIT:
            raise CaptionSyntaxError(f"missing end-of-edit token, got {tok}")


def parse_caption(tokens) -> tuple[Edit, ...]:
    """Inverse of :func:`caption_tokens`; raises on malformed input."""
    reader = _Reader(tokens)
    edits: list[Edit] = []
    while not reader.done():
        op = reader.take()
        if op == OP_ADD:
            edits.append(Add(reader.take_object()))
        elif op == OP_REMOVE:
            edits.append(Remove(reader.take_object()))
        elif op == OP_REPLACE:
            sel = reader.take_object()
            edits.append(Replace(sel, reader.take_object()))
        elif op == OP_MODIFY:
            sel = reader.take_object()
            attr_tok = reader.take()
            if attr_tok not in _TOKEN_ATTR:
                raise CaptionSyntaxError(f"expected attribute token, got {attr_tok}")
            attr = _TOKEN_ATTR[attr_tok]
            counts = {"shape": 8, "color": 8, "size": 3}
            value = reader.take_value(_ATTR_BASE[attr], counts[attr])
            edits.append(Modify(sel, attr, value))
        elif op == OP_BACKGROUND:
            edits.append(ChangeBackground(reader.take_value(BACKGROUND_BASE, 4)))
        else:
            raise CaptionSyntaxError(f"unknown op token {op}")
        reader.expect_eos()
    if not edits:
        raise CaptionSyntaxError("empty caption")
    return tuple(edits)
