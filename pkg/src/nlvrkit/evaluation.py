"""Accuracy/consistency metrics and the language-design regression probe."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .executor import execute
from .language import Grammar, fragment_action_set, parse_text, parse_type, pretty_print
from .model import ScorerParams
from .scene import Example
from .search import beam_search


@dataclass(frozen=True)
class UtteranceRecord:
    example_id: str
    program: str | None  # pretty-printed top-1 program, None if beam was empty
    predictions: tuple[bool, ...]
    golds: tuple[bool, ...]

    @property
    def n_correct(self) -> int:
        return sum(p == g for p, g in zip(self.predictions, self.golds))

    @property
    def all_correct(self) -> bool:
        return self.n_correct == len(self.golds)


@dataclass(frozen=True)
class EvalReport:
    accuracy: float  # over (utterance, scene) pairs
    consistency: float  # fraction of utterances correct on all their scenes
    records: tuple[UtteranceRecord, ...]

    def to_json(self, per_utterance: bool = False) -> dict:
        out = {"accuracy": self.accuracy, "consistency": self.consistency,
               "n_utterances": len(self.records)}
        if per_utterance:
            out["records"] = [
                {
                    "id": r.example_id,
                    "program": r.program,
                    "predictions": list(r.predictions),
                    "golds": list(r.golds),
                }
                for r in self.records
            ]
        return out


def _eval_one(params: ScorerParams, grammar: Grammar, k: int, ex: Example) -> UtteranceRecord:
    beam = beam_search(params, ex.utterance, grammar, k)
    golds = tuple(denot for _s, denot in ex.scenes)
    if len(beam) == 0:
        # no finished program: counted wrong on every scene
        return UtteranceRecord(ex.id, None, tuple(not g for g in golds), golds)
    top = beam.candidates[0].program
    preds = tuple(execute(top, scene) for scene, _d in ex.scenes)
    return UtteranceRecord(ex.id, pretty_print(top), preds, golds)


def _eval_chunk(args):
    params, grammar, k, chunk = args
    return [_eval_one(params, grammar, k, ex) for ex in chunk]


def evaluate(
    params: ScorerParams,
    corpus,
    grammar: Grammar,
    k: int = 10,
    jobs: int = 1,
) -> EvalReport:
    """Decode the top-1 program per utterance and score its denotations."""
    corpus = list(corpus)
    if jobs > 1 and len(corpus) > 1:
        chunks = [corpus[i::jobs] for i in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_eval_chunk, [(params, grammar, k, c) for c in chunks]))
        by_id = {r.example_id: r for part in parts for r in part}
        records = [by_id[ex.id] for ex in corpus]
    else:
        records = [_eval_one(params, grammar, k, ex) for ex in corpus]
    n_pairs = sum(len(r.golds) for r in records)
    n_correct = sum(r.n_correct for r in records)
    accuracy = n_correct / n_pairs if n_pairs else 0.0
    consistency = (
        sum(r.all_correct for r in records) / len(records) if records else 0.0
    )
    return EvalReport(accuracy, consistency, tuple(records))


# ---------------------------------------------------------------------------
# Language-design regression: do the two variants map a shared phrase to the
# same program parts in hand-annotated gold programs?


@dataclass(frozen=True)
class ProbeCase:
    """Gold programs for a related pair plus the manually annotated
    phrase-relevant fragments (`_` in a fragment skips a subtree)."""

    pair_id: str
    variant: str  # "new" | "old"
    phrase: str
    program_x: str
    relevant_x: str
    relevant_x_type: str
    program_x_prime: str
    relevant_x_prime: str
    relevant_x_prime_type: str


def builtin_probe_cases() -> list[ProbeCase]:
    """The two §-style regression pairs in both language variants:
    sentence-level vs box-level color diversity, and box-level counting vs
    a box-level positional pattern."""
    return [
        ProbeCase(
            "colors", "new", "items of at least two different colors",
            "objColorCountGrtEq(2)(allObjs)",
            "objColorCountGrtEq(2)", "<Set[Object]:bool>",
            "boxCountEq(1, boxFilter(allBoxes, objColorCountGrtEq(2)))",
            "objColorCountGrtEq(2)", "<Set[Object]:bool>",
        ),
        ProbeCase(
            "colors", "old", "items of at least two different colors",
            "objColorCountGrtEq(2)(allObjs)",
            "objColorCountGrtEq(2)", "<Set[Object]:bool>",
            "boxExists(memberColorCountGrtEq(2, allBoxes))",
            "memberColorCountGrtEq(2, _)", "Set[Box]",
        ),
        ProbeCase(
            "tower", "new", "there is a tower",
            "boxExists(boxFilter(allBoxes, objectCountEq(1)))",
            "boxExists(_)", "bool",
            "boxExists(boxFilter(allBoxes, black(top)))",
            "boxExists(_)", "bool",
        ),
        ProbeCase(
            "tower", "old", "there is a tower",
            "boxExists(memberObjCountEq(1, allBoxes))",
            "boxExists(_)", "bool",
            "objExists(black(top(allObjs)))",
            "objExists(_)", "bool",
        ),
    ]


def language_consistency_probe(
    grammars: dict[str, Grammar], cases: list[ProbeCase] | None = None
) -> list[dict]:
    """F1 between the annotated relevant action sets of each pair.

    Programs must parse in their stated variant; fragments are parsed with
    holes allowed and reduced to action-identity sets.
    """
    from .consistency import pair_consistency

    if cases is None:
        cases = builtin_probe_cases()
    rows = []
    for case in cases:
        grammar = grammars[case.variant]
        px = parse_text(grammar, case.program_x)  # validates the gold programs
        pxp = parse_text(grammar, case.program_x_prime)
        a = fragment_action_set(grammar, case.relevant_x, parse_type(case.relevant_x_type))
        b = fragment_action_set(
            grammar, case.relevant_x_prime, parse_type(case.relevant_x_prime_type)
        )
        if not a <= set(px.actions) or not b <= set(pxp.actions):
            raise ValueError(
                f"probe {case.pair_id}/{case.variant}: annotated fragment is not a "
                "sub-part of the gold program"
            )
        rows.append(
            {
                "pair": case.pair_id,
                "variant": case.variant,
                "phrase": case.phrase,
                "f1": pair_consistency(a, b),
                "relevant_x": sorted(a),
                "relevant_x_prime": sorted(b),
            }
        )
    return rows
