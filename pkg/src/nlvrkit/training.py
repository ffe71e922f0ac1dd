"""Training objectives and the iterative MML/RBM alternation.

Phase A (MML) maximizes the marginal likelihood of a set of denotation-
correct programs per utterance (found by enumeration-based heuristic search
in the first iteration, re-decoded from the current model afterwards).
Phase B maximizes expected reward over the renormalized beam distribution;
with related-utterance pairs available the reward is augmented with the
consistency term, which is treated as a constant w.r.t. the parameters
(gradients flow through the candidate distribution only, mirroring how the
0/1 denotation reward is handled).
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

from .consistency import DEFAULT_TAU, PhraseSpan, multi_phrase_reward, pair_consistency, relevant_actions
from .language import Grammar, Program, build_grammar
from .model import ScorerParams, accumulate, grad_log_prob, program_log_prob
from .pairing import UtterancePair
from .scene import Example
from .search import (Beam, beam_search, candidate_correct, filter_correct,
                     harvest_programs, renormalize, stratify_programs)

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    grammar: str = "new"
    beam_size: int = 10
    tau: float = DEFAULT_TAU
    learning_rate: float = 0.1
    mml_epochs: int = 2
    rbm_epochs: int = 2
    iterations: int = 3
    search_budget: int = 14
    search_cap: int = 20
    search_max_candidates: int | None = 200_000
    max_program_len: int = 40
    seed: int = 0
    use_consistency: bool = False
    epoch_metrics: bool = True
    metrics_beam_size: int = 1  # greedy decode keeps per-epoch metrics cheap
    structure_decay: float = 0.0  # L2 shrinkage of rule/bigram tables per update

    def __post_init__(self):
        for name in ("beam_size", "learning_rate", "mml_epochs", "rbm_epochs",
                     "iterations", "search_budget", "search_cap", "max_program_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0.0 < self.tau <= 1.0):
            raise ValueError("tau must lie in (0, 1]")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "TrainConfig":
        return cls(**data)


# ---------------------------------------------------------------------------
# Objectives


def mml_loss_and_grad(
    params: ScorerParams, grammar: Grammar, tokens, programs: Sequence[Program]
) -> tuple[float, dict]:
    """Negative log marginal likelihood of a program set and its gradient."""
    if not programs:
        raise TrainingError("MML needs a non-empty program set")
    memo = {}
    logps = [program_log_prob(params, grammar, tokens, z, memo)[0] for z in programs]
    m = max(logps)
    exps = [math.exp(lp - m) for lp in logps]
    z = sum(exps)
    loss = -(m + math.log(z))
    grad: dict = {}
    for program, e in zip(programs, exps):
        q = e / z  # posterior over the program set
        accumulate(grad, grad_log_prob(params, grammar, tokens, program, memo), -q)
    return loss, grad


def _expected_value_objective(
    params: ScorerParams, grammar: Grammar, tokens, beam: Beam, values: Sequence[float]
) -> tuple[float, dict]:
    """sum_z p~(z) * value(z) with values treated as constants.

    Gradient over the fixed beam support:
    sum_z p~(z) (value(z) - mean) grad log p(z).
    """
    if len(beam) == 0:
        return 0.0, {}
    weighted = renormalize(beam)
    objective = sum(w * v for (_c, w), v in zip(weighted, values))
    grad: dict = {}
    memo = {}
    for (cand, w), v in zip(weighted, values):
        coeff = w * (v - objective)
        if coeff != 0.0:
            accumulate(grad, grad_log_prob(params, grammar, tokens, cand.program, memo), coeff)
    return objective, grad


def rbm_objective_and_grad(
    params: ScorerParams, grammar: Grammar, example: Example, beam: Beam
) -> tuple[float, dict]:
    """Expected 0/1 denotation reward over the renormalized beam."""
    values = [1.0 if candidate_correct(c, example.scenes) else 0.0 for c in beam]
    return _expected_value_objective(params, grammar, example.utterance, beam, values)


def candidate_consistencies(
    beam: Beam,
    span_x: PhraseSpan,
    neighbor_example: Example,
    neighbor_beam: Beam,
    span_x_prime: PhraseSpan,
    tau: float = DEFAULT_TAU,
) -> list[float]:
    """Per-candidate consistency against one neighbor's filtered beam."""
    correct = filter_correct(neighbor_beam, neighbor_example.scenes)
    if len(correct) == 0:
        return [0.0] * len(beam)
    weighted = renormalize(correct)
    neighbor_sets = [
        (relevant_actions(c.attention, c.program, span_x_prime, tau), w) for c, w in weighted
    ]
    out = []
    for cand in beam:
        mine = relevant_actions(cand.attention, cand.program, span_x, tau)
        out.append(sum(w * pair_consistency(mine, theirs) for theirs, w in neighbor_sets))
    return out


def consistency_objective_and_grad(
    params: ScorerParams,
    grammar: Grammar,
    example: Example,
    beam: Beam,
    neighbor_example: Example,
    neighbor_beam: Beam,
    span_x: PhraseSpan,
    span_x_prime: PhraseSpan,
    tau: float = DEFAULT_TAU,
) -> tuple[float, dict]:
    """Expected value of (denotation reward + consistency reward)."""
    if span_x is None or span_x_prime is None:
        raise TrainingError("consistency objective needs the pair's phrase spans")
    rewards = [1.0 if candidate_correct(c, example.scenes) else 0.0 for c in beam]
    cons = candidate_consistencies(beam, span_x, neighbor_example, neighbor_beam, span_x_prime, tau)
    values = [r + c for r, c in zip(rewards, cons)]
    return _expected_value_objective(params, grammar, example.utterance, beam, values)


def multi_neighbor_reward(rewards: Sequence[float]) -> float:
    """Combine per-neighbor consistency rewards for one candidate (average)."""
    if not rewards:
        raise TrainingError("no neighbor rewards to combine")
    return sum(rewards) / len(rewards)


# ---------------------------------------------------------------------------
# Iterative training


@dataclass
class TrainResult:
    params: ScorerParams
    checkpoints: list  # (label, ScorerParams)
    metrics: list  # one dict per epoch
    program_sets: dict  # example id -> list[Program] from the last refresh


def _shrink_structure(params: ScorerParams, factor: float) -> None:
    if factor >= 1.0:
        return
    for key in params.rule:
        params.rule[key] *= factor
    for key in params.prev:
        params.prev[key] *= factor


def _initial_program_sets(config: TrainConfig, grammar: Grammar, corpus) -> dict:
    sets = {}
    for ex in corpus:
        sets[ex.id] = harvest_programs(
            grammar,
            ex.scenes,
            config.search_budget,
            max_programs=config.search_cap,
            max_candidates=config.search_max_candidates,
        )
        log.debug("heuristic search %s: %d programs", ex.id, len(sets[ex.id]))
    return sets


def _refresh_program_sets(config, grammar, corpus, params, old_sets) -> dict:
    """Decode-and-filter update for later iterations.

    Newly decoded denotation-correct programs are put first and the previous
    set fills the remainder, so coverage never shrinks to an empty set when
    decoding misses."""
    sets = {}
    for ex in corpus:
        beam = beam_search(params, ex.utterance, grammar, config.beam_size,
                           config.max_program_len)
        correct = filter_correct(beam, ex.scenes)
        programs = [c.program for c in correct]
        merged = list(programs)
        seen = {p.actions for p in merged}
        for p in old_sets.get(ex.id, []):
            if p.actions not in seen:
                merged.append(p)
                seen.add(p.actions)
        sets[ex.id] = stratify_programs(merged, config.search_cap)
    return sets


def _epoch_metrics(config, grammar, corpus, params, phase, iteration, epoch, mean_obj, extra=None):
    from .evaluation import evaluate  # local import to keep module deps one-way

    row = {
        "phase": phase,
        "iteration": iteration,
        "epoch": epoch,
        "mean_reward": mean_obj,
        "accuracy": None,
        "consistency": None,
    }
    if config.epoch_metrics:
        report = evaluate(params, corpus, grammar, config.metrics_beam_size)
        row["accuracy"] = report.accuracy
        row["consistency"] = report.consistency
    if extra:
        row.update(extra)
    return row


def iterative_train(
    config: TrainConfig,
    corpus: Sequence[Example],
    pairs: Sequence[UtterancePair] | None = None,
    initial_programs: dict | None = None,
    metrics_sink: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Alternate MML and (consistency-augmented) RBM phases.

    Deterministic under config.seed.  ``initial_programs`` may inject
    precomputed heuristic-search results (they are a pure function of the
    corpus, grammar and search settings, so sharing them across runs does
    not change any outcome).
    """
    grammar = build_grammar(config.grammar)
    by_id = {ex.id: ex for ex in corpus}
    pairs_by_x: dict[str, list[UtterancePair]] = {}
    if pairs and config.use_consistency:
        for p in pairs:
            if p.x_id in by_id and p.x_prime_id in by_id:
                pairs_by_x.setdefault(p.x_id, []).append(p)

    params = ScorerParams()
    checkpoints: list = []
    metrics: list = []

    def emit(row):
        metrics.append(row)
        if metrics_sink:
            metrics_sink(row)

    program_sets = dict(initial_programs) if initial_programs is not None else None

    for iteration in range(config.iterations):
        # ----- refresh the MML program sets
        if iteration == 0:
            if program_sets is None:
                program_sets = _initial_program_sets(config, grammar, corpus)
        else:
            program_sets = _refresh_program_sets(config, grammar, corpus, params, program_sets)
        trainable = [ex for ex in corpus if program_sets.get(ex.id)]
        if not trainable:
            raise TrainingError(
                "no trainable utterances: heuristic search found no denotation-correct "
                "program for any example (raise search_budget or check the corpus)"
            )

        # ----- phase A: MML
        for epoch in range(config.mml_epochs):
            rng = random.Random(f"{config.seed}|mml|{iteration}|{epoch}")
            order = sorted(trainable, key=lambda ex: ex.id)
            rng.shuffle(order)
            total = 0.0
            shrink = 1.0 - config.learning_rate * config.structure_decay
            for ex in order:
                loss, grad = mml_loss_and_grad(params, grammar, ex.utterance, program_sets[ex.id])
                params.add_scaled(grad, -config.learning_rate)
                _shrink_structure(params, shrink)
                total += -loss
            emit(_epoch_metrics(config, grammar, corpus, params, "mml", iteration, epoch,
                                total / len(order)))
        checkpoints.append((f"iter{iteration}-mml", params.copy()))

        # ----- phase B: RBM, optionally consistency-augmented
        for epoch in range(config.rbm_epochs):
            rng = random.Random(f"{config.seed}|rbm|{iteration}|{epoch}")
            order = sorted(corpus, key=lambda ex: ex.id)
            rng.shuffle(order)
            neighbor_beams = {}
            if pairs_by_x:
                neighbor_ids = sorted({p.x_prime_id for ps in pairs_by_x.values() for p in ps})
                for nid in neighbor_ids:
                    nex = by_id[nid]
                    neighbor_beams[nid] = beam_search(
                        params, nex.utterance, grammar, config.beam_size, config.max_program_len
                    )
            total = 0.0
            mean_consistency = 0.0
            n_paired = 0
            for ex in order:
                beam = beam_search(params, ex.utterance, grammar, config.beam_size,
                                   config.max_program_len)
                ex_pairs = pairs_by_x.get(ex.id, ())
                if ex_pairs:
                    rewards = [1.0 if candidate_correct(c, ex.scenes) else 0.0 for c in beam]
                    per_pair = [
                        candidate_consistencies(
                            beam, p.span_x, by_id[p.x_prime_id], neighbor_beams[p.x_prime_id],
                            p.span_x_prime, config.tau,
                        )
                        for p in ex_pairs
                    ]
                    cons = [multi_neighbor_reward([col[i] for col in per_pair])
                            for i in range(len(beam))]
                    values = [r + c for r, c in zip(rewards, cons)]
                    obj, grad = _expected_value_objective(params, grammar, ex.utterance, beam, values)
                    if cons:
                        mean_consistency += max(cons)
                    n_paired += 1
                else:
                    obj, grad = rbm_objective_and_grad(params, grammar, ex, beam)
                params.add_scaled(grad, config.learning_rate)
                _shrink_structure(params, 1.0 - config.learning_rate * config.structure_decay)
                total += obj
            extra = {}
            if n_paired:
                extra["mean_best_consistency"] = mean_consistency / n_paired
            emit(_epoch_metrics(config, grammar, corpus, params, "rbm", iteration, epoch,
                                total / len(order), extra))
        checkpoints.append((f"iter{iteration}-rbm", params.copy()))

    return TrainResult(params=params, checkpoints=checkpoints, metrics=metrics,
                       program_sets=program_sets)


def write_metrics_jsonl(metrics: Sequence[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in metrics:
            f.write(json.dumps(row) + "\n")
