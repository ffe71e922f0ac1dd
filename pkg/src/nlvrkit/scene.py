"""Structured scene data model and corpus (de)serialization.

A scene is the structured representation of one image: exactly three boxes,
each holding 1-8 objects with integer pixel coordinates and categorical
color/shape/size attributes.  The y axis grows downward, so "above" means
strictly smaller y.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

COLORS = ("black", "blue", "yellow")
SHAPES = ("triangle", "square", "circle")
SIZES = ("small", "medium", "large")

COORD_MAX = 99
BOXES_PER_SCENE = 3
MAX_OBJECTS_PER_BOX = 8
SCENES_PER_EXAMPLE = 4


class CorpusError(ValueError):
    """Raised for malformed corpus files or invariant violations."""


@dataclass(frozen=True)
class Obj:
    x: int
    y: int
    color: str
    shape: str
    size: str

    def __post_init__(self):
        if not (0 <= self.x <= COORD_MAX and 0 <= self.y <= COORD_MAX):
            raise CorpusError(f"object position ({self.x}, {self.y}) outside [0, {COORD_MAX}]")
        if self.color not in COLORS:
            raise CorpusError(f"unknown color {self.color!r}")
        if self.shape not in SHAPES:
            raise CorpusError(f"unknown shape {self.shape!r}")
        if self.size not in SIZES:
            raise CorpusError(f"unknown size {self.size!r}")


@dataclass(frozen=True)
class Box:
    objects: tuple[Obj, ...]

    def __post_init__(self):
        if not (1 <= len(self.objects) <= MAX_OBJECTS_PER_BOX):
            raise CorpusError(f"box holds {len(self.objects)} objects, expected 1-{MAX_OBJECTS_PER_BOX}")


@dataclass(frozen=True)
class Scene:
    boxes: tuple[Box, ...]
    id: str = ""

    def __post_init__(self):
        if len(self.boxes) != BOXES_PER_SCENE:
            raise CorpusError(f"scene {self.id!r} has {len(self.boxes)} boxes, expected {BOXES_PER_SCENE}")


@dataclass(frozen=True)
class Example:
    """One utterance with its four (scene, denotation) pairs."""

    id: str
    utterance: tuple[str, ...]
    scenes: tuple[tuple[Scene, bool], ...]

    def __post_init__(self):
        if len(self.scenes) != SCENES_PER_EXAMPLE:
            raise CorpusError(
                f"example {self.id!r} has {len(self.scenes)} scenes, expected {SCENES_PER_EXAMPLE}"
            )
        if not self.utterance:
            raise CorpusError(f"example {self.id!r} has an empty utterance")


def tokenize(text: str) -> tuple[str, ...]:
    """Lowercase, split on whitespace, strip trailing punctuation per token."""
    tokens = []
    for raw in text.lower().split():
        tok = raw.rstrip(".,;:!?")
        if tok:
            tokens.append(tok)
    return tuple(tokens)


# ---------------------------------------------------------------------------
# JSON corpus format
#
# Top-level array of
#   { "id": str, "utterance": str,
#     "scenes": [ { "denotation": bool, "boxes": [[obj, ...] x3] } x4 ] }
# where obj = {"x": int, "y": int, "color": .., "shape": .., "size": ..}.


def obj_to_json(o: Obj) -> dict:
    return {"x": o.x, "y": o.y, "color": o.color, "shape": o.shape, "size": o.size}


def obj_from_json(d: dict) -> Obj:
    try:
        return Obj(int(d["x"]), int(d["y"]), d["color"], d["shape"], d["size"])
    except KeyError as e:
        raise CorpusError(f"object record missing field {e.args[0]!r}") from None


def scene_to_json(scene: Scene) -> list:
    return [[obj_to_json(o) for o in box.objects] for box in scene.boxes]


def scene_from_json(boxes: list, scene_id: str = "") -> Scene:
    if not isinstance(boxes, list):
        raise CorpusError("scene 'boxes' must be an array")
    return Scene(tuple(Box(tuple(obj_from_json(o) for o in objs)) for objs in boxes), id=scene_id)


def example_to_json(ex: Example) -> dict:
    return {
        "id": ex.id,
        "utterance": " ".join(ex.utterance),
        "scenes": [
            {"denotation": denot, "boxes": scene_to_json(scene)} for scene, denot in ex.scenes
        ],
    }


def example_from_json(d: dict) -> Example:
    ex_id = d.get("id", "<missing id>")
    try:
        utterance = tokenize(d["utterance"])
        scenes = []
        for k, rec in enumerate(d["scenes"]):
            scene = scene_from_json(rec["boxes"], scene_id=f"{ex_id}/{k}")
            scenes.append((scene, bool(rec["denotation"])))
        return Example(id=ex_id, utterance=utterance, scenes=tuple(scenes))
    except KeyError as e:
        raise CorpusError(f"example {ex_id!r}: missing field {e.args[0]!r}") from None
    except CorpusError as e:
        raise CorpusError(f"example {ex_id!r}: {e}") from None


def load_corpus(path) -> list[Example]:
    """Load and validate a corpus file.  An empty file is an empty corpus."""
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    if not text.strip():
        return []
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise CorpusError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from None
    if data == []:
        return []
    if not isinstance(data, list):
        raise CorpusError(f"{path}: top level must be an array of examples")
    return [example_from_json(d) for d in data]


def save_corpus(examples: Iterable[Example], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump([example_to_json(ex) for ex in examples], f, indent=1)
        f.write("\n")
