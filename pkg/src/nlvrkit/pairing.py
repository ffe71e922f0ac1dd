"""Related-utterance discovery via equivalent phrase sets.

Eleven built-in sets of phrase patterns (with COLOR/COLOR1/COLOR2/NUMBER/
SHAPE placeholders) are grounded over the attribute vocabularies; utterances
containing a grounded phrase of the same set *with the same placeholder
bindings* are considered related, and each one is paired with one randomly
chosen companion from its group.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

from .consistency import PhraseSpan
from .scene import COLORS, SHAPES, Example

log = logging.getLogger(__name__)

NUMBER_VOCAB = tuple(str(i) for i in range(1, 10))
PLACEHOLDERS = ("COLOR", "COLOR1", "COLOR2", "NUMBER", "SHAPE")


class PairingError(ValueError):
    pass


@dataclass(frozen=True)
class PhraseTemplate:
    """One phrase pattern of a numbered equivalence set."""

    set_id: int
    pattern: tuple[str, ...]

    def __post_init__(self):
        if not (1 <= self.set_id <= 11):
            raise PairingError(f"set id {self.set_id} outside 1-11")


def builtin_templates() -> list[PhraseTemplate]:
    """The 11 built-in phrase sets."""
    sets = {
        1: ["COLOR block at the base", "the base is COLOR"],
        2: ["COLOR block at the top", "the top is COLOR"],
        3: ["COLOR1 object above a COLOR2 object"],
        4: ["COLOR1 block on a COLOR2 block", "COLOR1 block over a COLOR2 block"],
        5: ["a COLOR tower"],
        6: [
            "there is one tower",
            "there is only one tower",
            "there is one box",
            "there is only one box",
        ],
        7: ["there are exactly NUMBER towers", "there are exactly NUMBER boxes"],
        8: ["NUMBER different colors"],
        9: [
            "with NUMBER COLOR items",
            "with NUMBER COLOR blocks",
            "with NUMBER COLOR objects",
        ],
        10: [
            "at least NUMBER COLOR items",
            "at least NUMBER COLOR blocks",
            "at least NUMBER COLOR objects",
        ],
        11: [
            "with NUMBER COLOR SHAPE",
            "are NUMBER COLOR SHAPE",
            "with only NUMBER COLOR SHAPE",
            "are only NUMBER COLOR SHAPE",
        ],
    }
    return [
        PhraseTemplate(set_id, tuple(p.split()))
        for set_id in sorted(sets)
        for p in sets[set_id]
    ]


GroupKey = tuple  # (set_id, ((placeholder, canonical value), ...))


def _placeholder_domains(pattern: tuple[str, ...]) -> list[tuple[str, tuple[str, ...]]]:
    out = []
    for ph in ("COLOR", "COLOR1", "COLOR2", "NUMBER", "SHAPE"):
        if ph in pattern:
            if ph.startswith("COLOR"):
                out.append((ph, COLORS))
            elif ph == "NUMBER":
                out.append((ph, NUMBER_VOCAB))
            else:
                out.append((ph, SHAPES))
    return out


def _instantiate(pattern: tuple[str, ...], binding: dict) -> tuple[str, ...]:
    toks = []
    for tok in pattern:
        if tok in binding:
            val = binding[tok]
            if tok == "SHAPE" and int(binding.get("NUMBER", "1")) >= 2:
                val = val + "s"  # plural agreement with the bound count
            toks.append(val)
        else:
            toks.append(tok)
    return tuple(toks)


def ground_templates(templates: Sequence[PhraseTemplate]) -> dict[GroupKey, list[tuple[str, ...]]]:
    """Cartesian instantiation of each pattern over the placeholder vocabularies.

    Phrases sharing (set id, placeholder bindings) land in one group and are
    treated as interchangeable for pairing.
    """
    groups: dict[GroupKey, list[tuple[str, ...]]] = {}
    for template in templates:
        domains = _placeholder_domains(template.pattern)
        bindings = [{}]
        for ph, vocab in domains:
            bindings = [dict(b, **{ph: v}) for b in bindings for v in vocab]
        for binding in bindings:
            key = (template.set_id, tuple(sorted(binding.items())))
            phrase = _instantiate(template.pattern, binding)
            groups.setdefault(key, [])
            if phrase not in groups[key]:
                groups[key].append(phrase)
    return groups


@dataclass(frozen=True)
class UtterancePair:
    """Two related utterances sharing a grounded phrase (possibly via
    different members of the same equivalence group)."""

    x_id: str
    x_prime_id: str
    phrase: tuple[str, ...]  # the phrase matched in x
    span_x: PhraseSpan
    span_x_prime: PhraseSpan
    set_id: int


def _find_phrase(tokens: tuple[str, ...], phrases: list[tuple[str, ...]]):
    """First occurrence of any member phrase: smallest start, then member order."""
    best = None
    for rank, phrase in enumerate(phrases):
        width = len(phrase)
        for start in range(0, len(tokens) - width + 1):
            if tokens[start : start + width] == phrase:
                cand = (start, rank, PhraseSpan(start, start + width - 1), phrase)
                if best is None or cand[:2] < best[:2]:
                    best = cand
                break
    return None if best is None else (best[2], best[3])


def build_pairs(
    corpus: Iterable[Example],
    templates: Sequence[PhraseTemplate] | None = None,
    seed: int = 0,
) -> list[UtterancePair]:
    """Pair each matched utterance with one random companion from its group.

    Deterministic under the seed (each group draws from its own derived
    sub-seed).  Groups with a single matched utterance emit no pair.  An
    utterance matching several groups appears in one pair per group.
    """
    if templates is None:
        templates = builtin_templates()
    groups = ground_templates(templates)
    examples = sorted(corpus, key=lambda ex: ex.id)
    pairs: list[UtterancePair] = []
    for key in sorted(groups):
        set_id, binding = key
        phrases = groups[key]
        matched = []
        for ex in examples:
            hit = _find_phrase(ex.utterance, phrases)
            if hit is not None:
                matched.append((ex, hit[0], hit[1]))
        if len(matched) < 2:
            if matched:
                log.debug("group %s has a single utterance, no pair", key)
            continue
        rng = random.Random(f"{seed}|{set_id}|{binding}")
        for ex, span, phrase in matched:
            others = [m for m in matched if m[0].id != ex.id]
            if not others:
                continue  # duplicates of the same id only
            other, other_span, _other_phrase = others[rng.randrange(len(others))]
            pairs.append(
                UtterancePair(
                    x_id=ex.id,
                    x_prime_id=other.id,
                    phrase=phrase,
                    span_x=span,
                    span_x_prime=other_span,
                    set_id=set_id,
                )
            )
    return pairs


def pairs_to_json(pairs: Sequence[UtterancePair]) -> list[dict]:
    return [
        {
            "x": p.x_id,
            "x_prime": p.x_prime_id,
            "phrase": " ".join(p.phrase),
            "span_x": [p.span_x.start, p.span_x.end],
            "span_x_prime": [p.span_x_prime.start, p.span_x_prime.end],
            "set": p.set_id,
        }
        for p in pairs
    ]


def pairs_from_json(data: list[dict]) -> list[UtterancePair]:
    out = []
    for d in data:
        out.append(
            UtterancePair(
                x_id=d["x"],
                x_prime_id=d["x_prime"],
                phrase=tuple(d["phrase"].split()),
                span_x=PhraseSpan(*d["span_x"]),
                span_x_prime=PhraseSpan(*d["span_x_prime"]),
                set_id=int(d["set"]),
            )
        )
    return out


def save_pairs(pairs: Sequence[UtterancePair], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(pairs_to_json(pairs), f, indent=1)
        f.write("\n")


def load_pairs(path) -> list[UtterancePair]:
    with open(path, "r", encoding="utf-8") as f:
        return pairs_from_json(json.load(f))
