"""Consistency reward between programs of related utterances.

A program action is *relevant* to a phrase when its attention mass summed
over the phrase's token span reaches the threshold tau (default 0.6).  The
consistency of two programs w.r.t. a shared phrase is the F1 overlap of
their relevant action sets, and the reward for a candidate is the
beam-weighted average of that F1 against the denotation-correct candidates
decoded for the related utterance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .language import Program
from .search import BeamCandidate

DEFAULT_TAU = 0.6


class ConsistencyError(ValueError):
    pass


@dataclass(frozen=True)
class PhraseSpan:
    """Inclusive token span [start, end] of a phrase within an utterance."""

    start: int
    end: int

    def __post_init__(self):
        if not (0 <= self.start <= self.end):
            raise ConsistencyError(f"bad span [{self.start}, {self.end}]")

    def check_width(self, n_tokens: int) -> None:
        if self.end >= n_tokens:
            raise ConsistencyError(
                f"span [{self.start}, {self.end}] out of range for {n_tokens} tokens"
            )


def relevant_actions(
    attention: np.ndarray,
    program: Program,
    span: PhraseSpan,
    tau: float = DEFAULT_TAU,
) -> frozenset[str]:
    """Distinct action ids whose span-summed attention is >= tau.

    Time steps collapse to action identities: across two different programs
    there is no time-step alignment to compare, so repeated actions merge.
    """
    if not (0.0 < tau <= 1.0):
        raise ConsistencyError(f"tau must lie in (0, 1], got {tau}")
    attention = np.asarray(attention, dtype=float)
    if attention.ndim != 2 or attention.shape[0] != len(program.actions):
        raise ConsistencyError("attention must be a T x N matrix matching the program")
    span.check_width(attention.shape[1])
    mass = attention[:, span.start : span.end + 1].sum(axis=1)
    return frozenset(program.actions[t] for t in range(len(program.actions)) if mass[t] >= tau)


def pair_consistency(a: frozenset, b: frozenset) -> float:
    """F1 overlap of two relevant-action sets; two empty sets score 0.

    An empty relevant set means the phrase was not grounded at all, which
    must not be rewarded.
    """
    if not a and not b:
        return 0.0
    inter = len(frozenset(a) & frozenset(b))
    return 2.0 * inter / (len(a) + len(b))


def consistency_reward(
    candidate: BeamCandidate,
    neighbors: list[tuple[BeamCandidate, float]],
    span: PhraseSpan,
    neighbor_span: PhraseSpan,
    tau: float = DEFAULT_TAU,
) -> float:
    """Beam-weighted consistency of one candidate against a neighbor beam.

    ``neighbors`` is the related utterance's beam after denotation filtering
    and renormalization (candidate, weight) -- an empty list yields 0, which
    silently drops the reward term (common early in training).
    """
    if not neighbors:
        return 0.0
    total = sum(w for _c, w in neighbors)
    if abs(total - 1.0) > 1e-6:
        raise ConsistencyError(f"neighbor weights sum to {total}, expected 1")
    mine = relevant_actions(candidate.attention, candidate.program, span, tau)
    reward = 0.0
    for other, weight in neighbors:
        theirs = relevant_actions(other.attention, other.program, neighbor_span, tau)
        reward += weight * pair_consistency(mine, theirs)
    return reward


def multi_phrase_reward(rewards: list[tuple[float, float]]) -> float:
    """Weighted average of per-phrase rewards given (reward, weight) pairs."""
    if not rewards:
        raise ConsistencyError("no phrase rewards given")
    if any(w < 0 for _r, w in rewards):
        raise ConsistencyError("phrase weights must be >= 0")
    total = sum(w for _r, w in rewards)
    if total == 0:
        raise ConsistencyError("all phrase weights are zero")
    return sum(r * w for r, w in rewards) / total
