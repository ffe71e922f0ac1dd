"""Deterministic synthetic corpus generation.

Each utterance template carries a surface pattern and a gold program (in the
``new`` language); denotations are computed by executing the gold program on
sampled scenes, so generated labels are correct by construction.  The
generator balances True/False denotations per utterance (2/2 of 4) when the
retry budget allows and otherwise emits whatever mix was achieved.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from typing import Sequence

from .executor import execute
from .language import Grammar, build_grammar, parse_text
from .scene import COLORS, SHAPES, SIZES, Box, Example, Obj, Scene, tokenize

log = logging.getLogger(__name__)

DEFAULT_DOMAINS = {
    "COLOR": COLORS,
    "COLOR2": COLORS,
    "SHAPE": SHAPES,
    "SIZE": SIZES,
    "NUMBER": ("2", "3"),
    "NUMBER2": ("1", "2"),
}

BALANCE_TRIES = 400


@dataclass(frozen=True)
class UtteranceTemplate:
    """Surface pattern plus gold program pattern, sharing placeholder slots."""

    name: str
    utterance: str
    program: str
    domains: dict = field(default_factory=dict)

    def slots(self) -> list[str]:
        out = []
        for slot in ("COLOR", "COLOR2", "SHAPE", "SIZE", "NUMBER", "NUMBER2"):
            if "{" + slot + "}" in self.utterance or "{" + slot + "}" in self.program:
                out.append(slot)
        return out


def default_templates() -> list[UtteranceTemplate]:
    """Template inventory used by the desk-scale experiment.

    Several families deliberately share phrases from the built-in pairing
    sets so related utterances exist; fillers keep the paired fraction
    around 30%.  Box-level templates have no exact counterpart in the old
    macro language.
    """
    t = UtteranceTemplate
    return [
        # paired families: these share phrases from the built-in pairing sets
        t("colors-image", "there are items of at least {NUMBER} different colors",
          "objColorCountGrtEq({NUMBER})(allObjs)"),
        t("colors-box", "there is a box with items of at least {NUMBER} different colors",
          "boxExists(boxFilter(allBoxes, objColorCountGrtEq({NUMBER})))"),
        t("above-image", "there is a {COLOR} object above a {COLOR2} object",
          "objExists({COLOR}(above({COLOR2}(allObjs))))"),
        t("above-box", "there is a box with a {COLOR} object above a {COLOR2} object",
          "boxExists(boxFilter(allBoxes, objExists({COLOR}(above({COLOR2})))))"),
        t("top-image", "there is a {COLOR} block at the top",
          "objExists({COLOR}(top(allObjs)))"),
        t("top-box", "there is a box with a {COLOR} block at the top",
          "boxExists(boxFilter(allBoxes, {COLOR}(top)))"),
        t("box-items", "there is a box with {NUMBER} {COLOR} items",
          "boxExists(boxFilter(allBoxes, objectCountEq({NUMBER})({COLOR})))"),
        t("boxes-items", "there are exactly {NUMBER2} boxes with {NUMBER} {COLOR} items",
          "boxCountEq({NUMBER2}, boxFilter(allBoxes, objectCountEq({NUMBER})({COLOR})))"),
        t("one-tower", "there is one tower with exactly {NUMBER} blocks",
          "boxCountEq(1, boxFilter(allBoxes, objectCountEq({NUMBER})))"),
        # fillers: phrased to avoid the pairing sets
        t("color-exists", "there is a {COLOR} object", "objExists({COLOR}(allObjs))"),
        t("shape-exists", "there is a {SHAPE}", "objExists({SHAPE}(allObjs))"),
        t("size-color", "there is a {SIZE} {COLOR} object",
          "objExists({SIZE}({COLOR}(allObjs)))"),
        t("size-shape", "there is a {SIZE} {SHAPE}",
          "objExists({SIZE}({SHAPE}(allObjs)))"),
        t("no-color", "there are no {COLOR} items",
          "notBool(objExists({COLOR}(allObjs)))"),
        t("below-image", "there is a {COLOR} object below a {COLOR2} object",
          "objExists({COLOR}(below({COLOR2}(allObjs))))"),
        t("count-shapes", "there are exactly {NUMBER} {SHAPE}s",
          "objectCountEq({NUMBER})({SHAPE}(allObjs))"),
        t("shape-top", "there is a {SHAPE} at the top",
          "objExists({SHAPE}(top(allObjs)))"),
        t("two-colors", "there is a {COLOR} item and a {COLOR2} item",
          "andBool(objExists({COLOR}(allObjs)), objExists({COLOR2}(allObjs)))"),
        t("box-count-plain", "there is a box with exactly {NUMBER} items",
          "boxExists(boxFilter(allBoxes, objectCountEq({NUMBER})))"),
        t("boxes-with-shape", "there are {NUMBER2} boxes with a {COLOR} {SHAPE}",
          "boxCountEq({NUMBER2}, boxFilter(allBoxes, objExists({COLOR}({SHAPE}))))"),
        t("color-shape", "there is a {COLOR} {SHAPE}",
          "objExists({COLOR}({SHAPE}(allObjs)))"),
        t("exactly-one", "there is exactly one {COLOR} {SHAPE}",
          "objectCountEq(1)({COLOR}({SHAPE}(allObjs)))"),
        t("atleast-shapes", "there are at least {NUMBER} {SHAPE}s",
          "objectCountGtEq({NUMBER})({SHAPE}(allObjs))"),
        t("shape-bottom", "there is a {SHAPE} at the bottom",
          "objExists({SHAPE}(bottom(allObjs)))"),
        t("shapes-image", "there are items of {NUMBER} different shapes",
          "objShapeCountEq({NUMBER})(allObjs)"),
        t("shapes-box", "there is a box with items of {NUMBER} different shapes",
          "boxExists(boxFilter(allBoxes, objShapeCountEq({NUMBER})))"),
        t("all-boxes-size", "all 3 boxes have a {SIZE} item",
          "boxCountEq(3, boxFilter(allBoxes, objExists({SIZE})))"),
        t("no-box-count", "no box has exactly {NUMBER} items",
          "notBool(boxExists(boxFilter(allBoxes, objectCountEq({NUMBER}))))"),
    ]


def sample_scene(rng: random.Random, scene_id: str = "") -> Scene:
    """Random scene: 3 boxes of 1-8 objects at distinct integer positions.

    A scene-level color/shape palette (1-3 values each) is drawn first and
    boxes sample sub-palettes from it, so attribute diversity varies enough
    for both denotations of typical utterances to be reachable by rejection.
    """
    scene_colors = rng.sample(COLORS, rng.randint(1, 3))
    scene_shapes = rng.sample(SHAPES, rng.randint(1, 3))
    boxes = []
    for _b in range(3):
        box_colors = rng.sample(scene_colors, rng.randint(1, len(scene_colors)))
        box_shapes = rng.sample(scene_shapes, rng.randint(1, len(scene_shapes)))
        n = rng.randint(1, 8)
        used = set()
        objs = []
        while len(objs) < n:
            pos = (rng.randrange(100), rng.randrange(100))
            if pos in used:
                continue
            used.add(pos)
            objs.append(
                Obj(pos[0], pos[1], rng.choice(box_colors), rng.choice(box_shapes),
                    rng.choice(SIZES))
            )
        boxes.append(Box(tuple(objs)))
    return Scene(tuple(boxes), id=scene_id)


def _scene_with_denotation(rng, gold, target: bool, ex_id: str, k: int):
    """Rejection-sample a scene whose gold denotation matches target."""
    scene = None
    for _try in range(BALANCE_TRIES):
        scene = sample_scene(rng, scene_id=f"{ex_id}/{k}")
        if execute(gold, scene) == target:
            return scene, target
    return scene, execute(gold, scene)


def generate_example(
    seed: int, index: int, templates: Sequence[UtteranceTemplate], grammar: Grammar
) -> Example:
    """Generate one example from its derived sub-seed (order-independent)."""
    rng = random.Random(f"{seed}:{index}")
    template = templates[index % len(templates)]
    binding = {}
    for slot in template.slots():
        domain = template.domains.get(slot, DEFAULT_DOMAINS[slot])
        binding[slot] = rng.choice(domain)
    if "COLOR2" in binding and binding["COLOR2"] == binding.get("COLOR"):
        # avoid degenerate relational phrases like "black object above a black object"
        alts = [c for c in template.domains.get("COLOR2", DEFAULT_DOMAINS["COLOR2"])
                if c != binding["COLOR"]]
        if alts:
            binding["COLOR2"] = rng.choice(alts)
    text = template.utterance.format(**binding)
    gold = parse_text(grammar, template.program.format(**binding))
    ex_id = f"synth-{index:04d}"

    targets = [True, True, False, False]
    rng.shuffle(targets)
    scenes = []
    for k, target in enumerate(targets):
        scene, denot = _scene_with_denotation(rng, gold, target, ex_id, k)
        if denot != target:
            log.warning(
                "example %s (%s): wanted denotation %s within %d tries, kept %s",
                ex_id, template.name, target, BALANCE_TRIES, denot,
            )
        scenes.append((scene, denot))
    return Example(id=ex_id, utterance=tokenize(text), scenes=tuple(scenes))


def generate_corpus(
    seed: int, n_utterances: int, templates: Sequence[UtteranceTemplate] | None = None
) -> list[Example]:
    """Deterministic synthetic corpus of n utterances x 4 scenes."""
    if n_utterances <= 0:
        raise ValueError("n_utterances must be > 0")
    if templates is None:
        templates = default_templates()
    if not templates:
        raise ValueError("template set must be non-empty")
    grammar = build_grammar("new")
    return [generate_example(seed, i, templates, grammar) for i in range(n_utterances)]
