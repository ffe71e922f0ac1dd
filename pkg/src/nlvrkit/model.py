"""Locally-normalized log-linear scorer over grammar actions.

For each decoding step the model scores every type-valid action ``a``:

    e_i      = w_align[token_i, a]
    att      = softmax(e)                       (attention over tokens)
    score(a) = w_rule[a] + w_prev[prev, a] + sum_i att_i * e_i
    p(a)     = softmax over valid actions of score(a)

so it yields both a proper distribution over actions and, per candidate
action, a row-stochastic attention over the utterance tokens.  Weights are
sparse dicts; missing keys read as zero, which also defines the behavior for
unknown tokens at test time.  All gradients are analytic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .language import DecoderState, Grammar, Program

START = "<s>"

CHECKPOINT_FORMAT = 1


class ModelError(ValueError):
    pass


@dataclass
class ScorerParams:
    """Sparse weight tables: action bias, token-action alignment, action bigram."""

    rule: dict = field(default_factory=dict)
    align: dict = field(default_factory=dict)  # (token, action_uid) -> weight
    prev: dict = field(default_factory=dict)  # (prev_uid, action_uid) -> weight

    def copy(self) -> "ScorerParams":
        return ScorerParams(dict(self.rule), dict(self.align), dict(self.prev))

    def get(self, key) -> float:
        table, *rest = key
        if table == "rule":
            return self.rule.get(rest[0], 0.0)
        if table == "align":
            return self.align.get(tuple(rest), 0.0)
        if table == "prev":
            return self.prev.get(tuple(rest), 0.0)
        raise ModelError(f"unknown parameter table {table!r}")

    def set(self, key, value: float) -> None:
        table, *rest = key
        if table == "rule":
            self.rule[rest[0]] = value
        elif table == "align":
            self.align[tuple(rest)] = value
        elif table == "prev":
            self.prev[tuple(rest)] = value
        else:
            raise ModelError(f"unknown parameter table {table!r}")

    def add_scaled(self, grad: dict, scale: float) -> None:
        """In-place ``params += scale * grad`` (gradient keyed like get/set)."""
        for key, g in grad.items():
            self.set(key, self.get(key) + scale * g)

    def to_json(self) -> dict:
        align: dict = {}
        for (tok, act), w in self.align.items():
            align.setdefault(tok, {})[act] = w
        prev: dict = {}
        for (p, act), w in self.prev.items():
            prev.setdefault(p, {})[act] = w
        return {"format": CHECKPOINT_FORMAT, "rule": dict(self.rule), "align": align, "prev": prev}

    @classmethod
    def from_json(cls, data: dict) -> "ScorerParams":
        if data.get("format") != CHECKPOINT_FORMAT:
            raise ModelError(f"unsupported checkpoint format {data.get('format')!r}")
        rule = {str(k): float(v) for k, v in data.get("rule", {}).items()}
        align = {
            (tok, act): float(w)
            for tok, row in data.get("align", {}).items()
            for act, w in row.items()
        }
        prev = {
            (p, act): float(w)
            for p, row in data.get("prev", {}).items()
            for act, w in row.items()
        }
        return cls(rule, align, prev)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, indent=1, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "ScorerParams":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json(json.load(f))


@dataclass(frozen=True)
class StepDistribution:
    action_probs: dict  # action_uid -> probability
    attention: dict  # action_uid -> tuple over tokens


def _softmax(xs: list[float]) -> list[float]:
    m = max(xs)
    exps = [math.exp(x - m) for x in xs]
    z = sum(exps)
    return [e / z for e in exps]


def _step(params: ScorerParams, tokens, state: DecoderState, grammar: Grammar, memo=None):
    """Internals for one step: per-action (e, attention, att-weighted mean, score).

    ``memo`` caches results by decoder state; only valid while params stay
    fixed (one scoring/gradient pass).
    """
    if memo is not None:
        hit = memo.get(state)
        if hit is not None:
            return hit
    actions = state.valid_actions(grammar)
    if not actions:
        raise ModelError(f"stuck state: no valid action for {state.pending[:1]}")
    align = params.align
    rule = params.rule
    prevw = params.prev
    uids, es, atts, means, scores = [], [], [], [], []
    for act in actions:
        uid = act.uid
        e = [align.get((tok, uid), 0.0) for tok in tokens]
        att = _softmax(e)
        m = sum(a * x for a, x in zip(att, e))
        uids.append(uid)
        es.append(e)
        atts.append(att)
        means.append(m)
        scores.append(rule.get(uid, 0.0) + prevw.get((state.prev, uid), 0.0) + m)
    probs = _softmax(scores)
    result = (uids, es, atts, means, probs)
    if memo is not None:
        memo[state] = result
    return result


def step_scores(params: ScorerParams, tokens, state: DecoderState, grammar: Grammar) -> StepDistribution:
    """Distribution over valid next actions plus per-action attention rows."""
    if not tokens:
        raise ModelError("empty utterance")
    uids, _es, atts, _means, probs = _step(params, tokens, state, grammar)
    return StepDistribution(
        action_probs=dict(zip(uids, probs)),
        attention={u: tuple(a) for u, a in zip(uids, atts)},
    )


def program_log_prob(
    params: ScorerParams, grammar: Grammar, tokens, program: Program, memo=None
) -> tuple[float, np.ndarray]:
    """Sum of per-step log action probabilities and the T x N attention matrix."""
    state = DecoderState.initial(grammar)
    logp = 0.0
    rows = []
    for uid in program.actions:
        uids, _es, atts, _means, probs = _step(params, tokens, state, grammar, memo)
        try:
            k = uids.index(uid)
        except ValueError:
            raise ModelError(f"action {uid!r} invalid in state {state}") from None
        logp += math.log(probs[k])
        rows.append(atts[k])
        state = state.advance(grammar, grammar.by_uid[uid])
    return logp, np.array(rows, dtype=float)


def grad_log_prob(
    params: ScorerParams, grammar: Grammar, tokens, program: Program, memo=None
) -> dict:
    """Analytic gradient of program_log_prob w.r.t. every touched weight.

    Keys are ("rule", a), ("align", token, a) and ("prev", prev, a); tokens
    appearing at several positions accumulate over positions.
    """
    grad: dict = {}
    state = DecoderState.initial(grammar)
    for uid in program.actions:
        uids, es, atts, means, probs = _step(params, tokens, state, grammar, memo)
        k = uids.index(uid)
        for j, a in enumerate(uids):
            d = (1.0 if j == k else 0.0) - probs[j]
            if d == 0.0:
                continue
            key = ("rule", a)
            grad[key] = grad.get(key, 0.0) + d
            key = ("prev", state.prev, a)
            grad[key] = grad.get(key, 0.0) + d
            e, att, m = es[j], atts[j], means[j]
            for i, tok in enumerate(tokens):
                # d score / d e_i for the attention-weighted mean term
                coef = att[i] * (1.0 + e[i] - m)
                if coef != 0.0:
                    key = ("align", tok, a)
                    grad[key] = grad.get(key, 0.0) + d * coef
        state = state.advance(grammar, grammar.by_uid[uid])
    return grad


def accumulate(total: dict, grad: dict, scale: float = 1.0) -> dict:
    """total += scale * grad, in place; returns total."""
    for k, v in grad.items():
        total[k] = total.get(k, 0.0) + scale * v
    return total
