"""Line-delimited JSON persistence for corpora.

File layout (one JSON object per line, no extra whitespace):

- line 1 header: ``{"format": "cirl-corpus", "version": 1, "seed": ...,
  "config": {...}}``
- then one record per candidate: ``{"kind": "candidate", "id", "objects",
  "background"}``
- one per subset: ``{"kind": "subset", "id", "members"}``
- one per triplet: ``{"kind": "triplet", "split", "reference", "edits",
  "target_id", "subset_id", "nonce"}``

Scenes serialize as ``{"objects": [[shape, color, size], ...],
"background": b}``; edits as tagged objects (see ``_edit_to_json``).
Serialization is canonical: a corpus written twice is byte-identical.
"""

from __future__ import annotations

import dataclasses
import json

from cirl.synthcorpus.generate import Corpus, CorpusConfig, Triplet
from cirl.synthcorpus.scenes import (
    Add,
    ChangeBackground,
    Edit,
    Modify,
    Remove,
    Replace,
    Scene,
    SceneObject,
)

FORMAT_NAME = "cirl-corpus"
FORMAT_VERSION = 1


def _scene_to_json(scene: Scene) -> dict:
    return {
        "objects": [[o.shape, o.color, o.size] for o in scene.objects],
        "background": scene.background,
    }


def _scene_from_json(data: dict) -> Scene:
    return Scene(
        tuple(SceneObject(*triple) for triple in data["objects"]),
        data["background"],
    )


def _edit_to_json(edit: Edit) -> dict:
    if isinstance(edit, Add):
        return {"op": "add", "object": [edit.obj.shape, edit.obj.color, edit.obj.size]}
    if isinstance(edit, Remove):
        s = edit.selector
        return {"op": "remove", "selector": [s.shape, s.color, s.size]}
    if isinstance(edit, Replace):
        s, o = edit.selector, edit.obj
        return {
            "op": "replace",
            "selector": [s.shape, s.color, s.size],
            "object": [o.shape, o.color, o.size],
        }
    if isinstance(edit, Modify):
        s = edit.selector
        return {
            "op": "modify",
            "selector": [s.shape, s.color, s.size],
            "attribute": edit.attribute,
            "value": edit.value,
        }
    if isinstance(edit, ChangeBackground):
        return {"op": "background", "value": edit.value}
    raise TypeError(f"unknown edit type {type(edit)!r}")


def _edit_from_json(data: dict) -> Edit:
    op = data["op"]
    if op == "add":
        return Add(SceneObject(*data["object"]))
    if op == "remove":
        return Remove(SceneObject(*data["selector"]))
    if op == "replace":
        return Replace(SceneObject(*data["selector"]), SceneObject(*data["object"]))
    if op == "modify":
        return Modify(SceneObject(*data["selector"]), data["attribute"], data["value"])
    if op == "background":
        return ChangeBackground(data["value"])
    raise ValueError(f"unknown edit op {op!r}")


def _dump(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"))


def save_corpus(corpus: Corpus, path) -> None:
    lines = [
        _dump(
            {
                "format": FORMAT_NAME,
                "version": FORMAT_VERSION,
                "seed": corpus.seed,
                "config": dataclasses.asdict(corpus.config),
            }
        )
    ]
    for i, scene in enumerate(corpus.candidates):
        lines.append(_dump({"kind": "candidate", "id": i, **_scene_to_json(scene)}))
    for i, members in enumerate(corpus.subsets):
        lines.append(_dump({"kind": "subset", "id": i, "members": members}))
    for split in ("train", "val", "test"):
        for t in corpus.splits[split]:
            lines.append(
                _dump(
                    {
                        "kind": "triplet",
                        "split": split,
                        "reference": _scene_to_json(t.reference),
                        "edits": [_edit_to_json(e) for e in t.edits],
                        "target_id": t.target_id,
                        "subset_id": t.subset_id,
                        "nonce": t.nonce,
                    }
                )
            )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_corpus(path) -> Corpus:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line]
    header = json.loads(lines[0])
    if header.get("format") != FORMAT_NAME:
        raise ValueError(f"not a {FORMAT_NAME} file")
    if header.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported corpus version {header.get('version')}")
    config = CorpusConfig(**header["config"])
    candidates: dict[int, Scene] = {}
    subsets: dict[int, list[int]] = {}
    splits: dict[str, list[Triplet]] = {"train": [], "val": [], "test": []}
    for line in lines[1:]:
        rec = json.loads(line)
        kind = rec["kind"]
        if kind == "candidate":
            candidates[rec["id"]] = _scene_from_json(rec)
        elif kind == "subset":
            subsets[rec["id"]] = list(rec["members"])
        elif kind == "triplet":
            splits[rec["split"]].append(
                Triplet(
                    reference=_scene_from_json(rec["reference"]),
                    edits=tuple(_edit_from_json(e) for e in rec["edits"]),
                    target_id=rec["target_id"],
                    subset_id=rec["subset_id"],
                    nonce=rec["nonce"],
                )
            )
        else:
            raise ValueError(f"unknown record kind {kind!r}")
    candidate_list = [candidates[i] for i in range(len(candidates))]
    subset_list = [subsets[i] for i in range(len(subsets))]
    return Corpus(candidate_list, subset_list, splits, header["seed"], config)
