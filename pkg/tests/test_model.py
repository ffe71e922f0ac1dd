import math
import random

import pytest

from nlvrkit.language import DecoderState, build_grammar, parse_text
from nlvrkit.model import (
    ModelError,
    ScorerParams,
    grad_log_prob,
    program_log_prob,
    step_scores,
)

NEW = build_grammar("new")
TOKENS = ("there", "is", "a", "yellow", "object")


def finite_difference(params, grammar, tokens, program, key, h=1e-5):
    v0 = params.get(key)
    params.set(key, v0 + h)
    up, _ = program_log_prob(params, grammar, tokens, program)
    params.set(key, v0 - h)
    dn, _ = program_log_prob(params, grammar, tokens, program)
    params.set(key, v0)
    return (up - dn) / (2 * h)


def randomized_params(grammar, tokens, rng, scale=5.0):
    params = ScorerParams()
    for action in grammar.actions:
        params.set(("rule", action.uid), rng.uniform(-scale, scale))
        for tok in set(tokens):
            params.set(("align", tok, action.uid), rng.uniform(-scale, scale))
    return params


def test_zero_params_uniform():
    state = DecoderState.initial(NEW)
    dist = step_scores(ScorerParams(), TOKENS, state, NEW)
    probs = list(dist.action_probs.values())
    assert abs(sum(probs) - 1.0) < 1e-9
    assert max(probs) - min(probs) < 1e-12
    for row in dist.attention.values():
        assert abs(sum(row) - 1.0) < 1e-9
        assert max(row) - min(row) < 1e-12


def test_raising_rule_weight_increases_probability():
    state = DecoderState.initial(NEW)
    base = step_scores(ScorerParams(), TOKENS, state, NEW)
    uid = sorted(base.action_probs)[0]
    params = ScorerParams()
    params.set(("rule", uid), 1.5)
    bumped = step_scores(params, TOKENS, state, NEW)
    assert bumped.action_probs[uid] > base.action_probs[uid]
    for other in base.action_probs:
        if other != uid:
            assert bumped.action_probs[other] < base.action_probs[other]


def test_attention_row_matches_hand_softmax():
    state = DecoderState.initial(NEW)
    uid = sorted(a.uid for a in state.valid_actions(NEW))[0]
    params = ScorerParams()
    tokens = ("a", "b", "c", "d")
    es = [0.1, 0.2, 0.5, 0.2]
    for tok, e in zip(tokens, es):
        params.set(("align", tok, uid), e)
    dist = step_scores(params, tokens, state, NEW)
    z = sum(math.exp(e) for e in es)
    expected = [math.exp(e) / z for e in es]
    got = dist.attention[uid]
    assert max(abs(a - b) for a, b in zip(got, expected)) < 1e-12
    assert abs(sum(got) - 1.0) < 1e-9


def test_distributions_valid_under_random_params():
    rng = random.Random(0)
    for _ in range(20):
        params = randomized_params(NEW, TOKENS, rng)
        state = DecoderState.initial(NEW)
        dist = step_scores(params, TOKENS, state, NEW)
        assert abs(sum(dist.action_probs.values()) - 1.0) < 1e-9
        assert all(p >= 0 for p in dist.action_probs.values())
        for row in dist.attention.values():
            assert abs(sum(row) - 1.0) < 1e-9
            assert all(a >= 0 for a in row)


def test_program_log_prob_nonpositive_and_deterministic():
    rng = random.Random(1)
    program = parse_text(NEW, "objExists(yellow(allObjs))")
    params = randomized_params(NEW, TOKENS, rng, scale=2.0)
    lp1, att1 = program_log_prob(params, NEW, TOKENS, program)
    lp2, att2 = program_log_prob(params, NEW, TOKENS, program)
    assert lp1 == lp2
    assert (att1 == att2).all()
    assert lp1 <= 0.0
    assert att1.shape == (len(program.actions), len(TOKENS))


def test_forced_steps_contribute_zero():
    # <Set[Box]:bool> has a single action (boxExists): that step is forced
    # and contributes log 1 = 0; bool has 5 templates and Set[Box] 3 actions
    program = parse_text(NEW, "boxExists(allBoxes)")
    lp, _ = program_log_prob(ScorerParams(), NEW, ("t",), program)
    expected = -(math.log(5) + math.log(1) + math.log(3))
    assert abs(lp - expected) < 1e-12


def test_log_prob_matches_hand_rolled_softmaxes():
    program = parse_text(NEW, "objExists(allObjs)")
    params = ScorerParams()
    uid0 = program.actions[0]
    params.set(("rule", uid0), 0.7)
    state = DecoderState.initial(NEW)
    dist0 = step_scores(params, TOKENS, state, NEW)
    state = state.advance(NEW, NEW.by_uid[uid0])
    dist1 = step_scores(params, TOKENS, state, NEW)
    uid1 = program.actions[1]
    state = state.advance(NEW, NEW.by_uid[uid1])
    dist2 = step_scores(params, TOKENS, state, NEW)
    uid2 = program.actions[2]
    hand = (
        math.log(dist0.action_probs[uid0])
        + math.log(dist1.action_probs[uid1])
        + math.log(dist2.action_probs[uid2])
    )
    lp, _ = program_log_prob(params, NEW, TOKENS, program)
    assert abs(lp - hand) < 1e-12


def test_zero_param_rule_gradient_identity():
    program = parse_text(NEW, "objExists(allObjs)")
    grad = grad_log_prob(ScorerParams(), NEW, TOKENS, program)
    # first step: bool slot has 5 valid actions under zero params
    assert abs(grad[("rule", program.actions[0])] - (1 - 1 / 5)) < 1e-12
    # second step: <Set[Object]:bool> slot has 3 actions
    assert abs(grad[("rule", program.actions[1])] - (1 - 1 / 3)) < 1e-12


def test_gradient_finite_difference_agreement():
    rng = random.Random(42)
    programs = [
        parse_text(NEW, "objExists(yellow(above(black(allObjs))))"),
        parse_text(NEW, "boxCountEq(1, boxFilter(allBoxes, objectCountGtEq(2)(yellow(square))))"),
        parse_text(NEW, "notBool(objExists(small(allObjs)))"),
    ]
    checked = 0
    for trial in range(100):
        program = programs[trial % len(programs)]
        params = randomized_params(NEW, TOKENS, rng, scale=2.0)
        grad = grad_log_prob(params, NEW, TOKENS, program)
        keys = sorted(grad)[:: max(1, len(grad) // 5)]
        for key in keys:
            fd = finite_difference(params, NEW, TOKENS, program, key)
            rel = abs(fd - grad[key]) / max(1e-8, abs(fd) + abs(grad[key]))
            assert rel < 1e-4, f"{key}: analytic {grad[key]} vs fd {fd}"
            checked += 1
    assert checked >= 100


def test_untouched_weights_zero_gradient():
    program = parse_text(NEW, "objExists(allObjs)")
    grad = grad_log_prob(ScorerParams(), NEW, TOKENS, program)
    assert ("rule", "int -> 7") not in grad
    assert all(key[0] in ("rule", "align", "prev") for key in grad)


def test_empty_utterance_rejected():
    state = DecoderState.initial(NEW)
    with pytest.raises(ModelError):
        step_scores(ScorerParams(), (), state, NEW)


def test_checkpoint_round_trip(tmp_path):
    rng = random.Random(9)
    params = randomized_params(NEW, ("a", "b"), rng, scale=1.0)
    params.prev[("<s>", "int -> 1")] = 0.25
    path = tmp_path / "ckpt.json"
    params.save(path)
    again = ScorerParams.load(path)
    assert again.rule == params.rule
    assert again.align == params.align
    assert again.prev == params.prev
    import json

    data = json.loads(path.read_text())
    assert data["format"] == 1
