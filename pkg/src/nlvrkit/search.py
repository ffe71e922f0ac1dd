"""Grammar-constrained program generation.

Exhaustive typed enumeration (used by the heuristic search that seeds
training, and as an oracle), beam search under the scorer, denotation
filtering, and beam renormalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .executor import execute
from .language import DecoderState, Grammar, Program, parse_actions
from .model import ScorerParams, _step
from .scene import Scene


class SearchError(ValueError):
    pass


@dataclass(frozen=True)
class BeamCandidate:
    program: Program
    log_prob: float
    attention: np.ndarray  # T x N, row t is the chosen action's attention

    def __post_init__(self):
        if self.attention.ndim != 2 or self.attention.shape[0] != len(self.program.actions):
            raise SearchError("attention matrix must have one row per action")


@dataclass(frozen=True)
class Beam:
    candidates: tuple[BeamCandidate, ...]

    def __post_init__(self):
        lps = [c.log_prob for c in self.candidates]
        if lps != sorted(lps, reverse=True):
            raise SearchError("beam candidates must be sorted by log_prob descending")

    def __len__(self):
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)


def enumerate_programs(
    grammar: Grammar, max_actions: int, min_actions: int = 1
) -> Iterator[Program]:
    """Yield every well-typed program of min_actions..max_actions actions.

    Deterministic depth-first order: at each pending slot, actions are tried
    in lexicographic action-id order, so programs stream out sorted by their
    action-id sequences.
    """
    if max_actions < 0:
        raise SearchError("max_actions must be >= 0")
    mins = grammar.min_actions
    child_min = grammar.child_min_cost
    root_min = mins.get(grammar.root)
    if root_min is None or root_min > max_actions:
        return
    acts: list[str] = []

    def rec(pending: tuple, pending_min: int, budget: int) -> Iterator[Program]:
        if not pending:
            if len(acts) >= min_actions:
                yield parse_actions(grammar, tuple(acts))
            return
        head, rest = pending[0], pending[1:]
        rest_min = pending_min - mins[head]
        for act in grammar.by_lhs[head]:
            new_min = rest_min + child_min[act.uid]
            if 1 + new_min > budget:
                continue
            acts.append(act.uid)
            yield from rec(act.children + rest, new_min, budget - 1)
            acts.pop()

    yield from rec((grammar.root,), root_min, max_actions)


def beam_search(
    params: ScorerParams,
    tokens: Sequence[str],
    grammar: Grammar,
    k: int,
    max_len: int = 40,
) -> Beam:
    """Standard per-step beam over valid grammar actions.

    Returns up to k finished programs sorted by model log-probability,
    ties broken by the action-id sequence.  Candidates that cannot finish
    within max_len actions are pruned by the grammar's minimum-completion
    cost, so every returned candidate is a complete bool-rooted program.
    """
    if k < 1:
        raise SearchError("beam size must be >= 1")
    mins = grammar.min_actions
    child_min = grammar.child_min_cost
    init = DecoderState.initial(grammar)
    # beam entries: (log_prob, action uids, state, attention rows, min completion);
    # finished candidates keep their slot and compete with live extensions, so
    # k=1 is exactly greedy decoding.  Ties break finished-first, then by the
    # action-id sequence.
    beam = [(0.0, (), init, (), mins[grammar.root])]
    memo = {}
    while any(not c[2].finished for c in beam):
        pool = []
        for cand in beam:
            logp, acts, state, rows, pend_min = cand
            if state.finished:
                pool.append(cand)
                continue
            uids, _es, atts, _means, probs = _step(params, tokens, state, grammar, memo)
            rest_min = pend_min - mins[state.pending[0]]
            for j, uid in enumerate(uids):
                new_min = rest_min + child_min[uid]
                if len(acts) + 1 + new_min > max_len:
                    continue
                pool.append((
                    logp + math.log(probs[j]),
                    acts + (uid,),
                    state.advance(grammar, grammar.by_uid[uid]),
                    rows + (atts[j],),
                    new_min,
                ))
        pool.sort(key=lambda c: (-c[0], not c[2].finished, c[1]))
        beam = pool[:k]
        if not beam:
            break  # max_len leaves nothing finishable
    cands = [
        BeamCandidate(parse_actions(grammar, acts), logp, np.array(rows, dtype=float))
        for logp, acts, _state, rows, _m in beam
    ]
    return Beam(tuple(cands))


def candidate_correct(candidate: BeamCandidate, scenes) -> bool:
    """True iff the candidate's program matches the denotation on every scene."""
    return all(execute(candidate.program, scene) == denot for scene, denot in scenes)


def filter_correct(beam: Beam, scenes) -> Beam:
    """Keep candidates that evaluate to the stored denotation on all scenes."""
    return Beam(tuple(c for c in beam if candidate_correct(c, scenes)))


def renormalize(beam: Beam) -> list[tuple[BeamCandidate, float]]:
    """Renormalized beam distribution p~ via log-sum-exp."""
    if len(beam) == 0:
        raise SearchError("empty support")
    lps = [c.log_prob for c in beam]
    m = max(lps)
    exps = [math.exp(lp - m) for lp in lps]
    z = sum(exps)
    return [(c, e / z) for c, e in zip(beam, exps)]


def stratify_programs(programs: Sequence[Program], max_programs: int) -> list[Program]:
    """Cap a candidate list, spreading picks across root structures.

    Programs are grouped by their first action and taken round-robin in the
    original (deterministic) order, so one lucky structural family cannot
    crowd every other analysis out of a small program set.
    """
    groups: dict[str, list[Program]] = {}
    for p in programs:
        groups.setdefault(p.actions[0], []).append(p)
    out: list[Program] = []
    queues = [groups[k] for k in sorted(groups)]
    i = 0
    while queues and len(out) < max_programs:
        queue = queues[i % len(queues)]
        out.append(queue.pop(0))
        if not queue:
            queues.remove(queue)
        else:
            i += 1
    return out


def harvest_programs(
    grammar: Grammar,
    scenes,
    max_actions: int,
    max_programs: int = 20,
    max_candidates: int | None = None,
    overselect: int = 6,
) -> list[Program]:
    """Heuristic search: enumerate shortest-first up to a length budget and
    keep denotation-correct programs.

    Enumeration runs by iterative deepening so short programs of every
    structural family surface before any deep region explodes; the first
    ``max_programs * overselect`` correct programs are collected (capped by
    ``max_candidates`` examined overall) and stratified down to
    ``max_programs``.  Deterministic."""
    out: list[Program] = []
    seen = 0
    want = max_programs * overselect
    min_len = grammar.min_actions.get(grammar.root, 1)
    for depth in range(min_len, max_actions + 1):
        for program in enumerate_programs(grammar, depth, min_actions=depth):
            seen += 1
            if all(execute(program, scene) == denot for scene, denot in scenes):
                out.append(program)
                if len(out) >= want:
                    return stratify_programs(out, max_programs)
            if max_candidates is not None and seen >= max_candidates:
                return stratify_programs(out, max_programs)
    return stratify_programs(out, max_programs)
