import random

import pytest

from nlvrkit.language import build_grammar
from nlvrkit.scene import Box, Obj, Scene


@pytest.fixture(scope="session")
def new_grammar():
    return build_grammar("new")


@pytest.fixture(scope="session")
def old_grammar():
    return build_grammar("old")


def random_program(grammar, rng: random.Random, max_actions: int = 15):
    """Random well-typed program via a budget-limited derivation walk."""
    from nlvrkit.language import DecoderState, parse_actions

    while True:
        state = DecoderState.initial(grammar)
        acts = []
        dead = False
        while not state.finished:
            mins = grammar.min_actions
            rest_min = sum(mins[t] for t in state.pending[1:])
            options = [
                a
                for a in state.valid_actions(grammar)
                if len(acts) + 1 + grammar.child_min_cost[a.uid] + rest_min <= max_actions
            ]
            if not options:
                dead = True
                break
            action = options[rng.randrange(len(options))]
            acts.append(action.uid)
            state = state.advance(grammar, action)
        if not dead:
            return parse_actions(grammar, acts)


def scene_with(boxes_spec, scene_id="t"):
    """Scene from [[(x, y, color, shape, size), ...] x3]."""
    return Scene(
        tuple(Box(tuple(Obj(*o) for o in objs)) for objs in boxes_spec), id=scene_id
    )
