"""Typed variable-free functional query language over scenes.

Two grammar variants share one action machinery:

* ``new`` -- the consistent language: no box macros, a generic ``boxFilter``
  that prunes boxes by an object-level filter, plus function composition
  (the ``*`` head) and currying of two-argument count predicates.
* ``old`` -- the macro language: same inventory except ``boxFilter`` is
  replaced by box macros (``memberColorCountGrtEq``, ``memberObjCountEq``).

A program is a typed AST together with its linearization: the action
sequence produced by a depth-first, left-to-right traversal.  Each action is
rendered ``lhs -> rhs`` where rhs is a terminal name or a bracketed template
of child types, e.g. ``bool -> [<int,Set[Box]:bool>, int, Set[Box]]``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from itertools import product
from typing import Iterator, Sequence

from .scene import COLORS, SHAPES, SIZES


class LanguageError(ValueError):
    pass


class ActionSequenceError(LanguageError):
    """Ill-typed, truncated or overlong action sequence."""


class TextParseError(LanguageError):
    """Program text that does not parse or type-check in the grammar."""


# ---------------------------------------------------------------------------
# Type algebra


class SemType:
    __slots__ = ()


@dataclass(frozen=True)
class Prim(SemType):
    name: str

    def __post_init__(self):
        object.__setattr__(self, "_h", hash(("prim", self.name)))

    def __str__(self):
        return self.name

    def __hash__(self):
        return self._h


@dataclass(frozen=True)
class Func(SemType):
    args: tuple[SemType, ...]
    ret: SemType

    def __post_init__(self):
        if not self.args:
            raise LanguageError("function type needs at least one argument")
        s = "<" + ",".join(str(a) for a in self.args) + ":" + str(self.ret) + ">"
        object.__setattr__(self, "_s", s)
        object.__setattr__(self, "_h", hash(("func", s)))

    def __str__(self):
        return self._s

    def __hash__(self):
        return self._h


BOOL = Prim("bool")
INT = Prim("int")
COLOR_T = Prim("Color")
SHAPE_T = Prim("Shape")
SIZE_T = Prim("Size")
OBJ_SET = Prim("Set[Object]")
BOX_SET = Prim("Set[Box]")

PRIMS = {str(t): t for t in (BOOL, INT, COLOR_T, SHAPE_T, SIZE_T, OBJ_SET, BOX_SET)}

OBJ_FILTER = Func((OBJ_SET,), OBJ_SET)
OBJ_PRED = Func((OBJ_SET,), BOOL)
OBJ_COUNT_PRED = Func((INT, OBJ_SET), BOOL)
BOX_PRED = Func((BOX_SET,), BOOL)
BOX_COUNT_PRED = Func((INT, BOX_SET), BOOL)
BOX_FILTER_PRED = Func((BOX_SET, OBJ_PRED), BOX_SET)
BOX_FILTER_SET = Func((BOX_SET, OBJ_FILTER), BOX_SET)
BOX_MACRO = Func((INT, BOX_SET), BOX_SET)
BOOL_BINOP = Func((BOOL, BOOL), BOOL)
BOOL_UNOP = Func((BOOL,), BOOL)


def parse_type(text: str) -> SemType:
    """Parse the angle-bracket type syntax, e.g. ``<int,Set[Box]:bool>``."""
    s = text.strip()
    if s in PRIMS:
        return PRIMS[s]
    if not (s.startswith("<") and s.endswith(">")):
        raise LanguageError(f"cannot parse type {text!r}")
    inner = s[1:-1]
    # split on the ":" separating argument list from return type, at depth 0
    depth = 0
    colon = -1
    for i, ch in enumerate(inner):
        if ch == "<":
            depth += 1
        elif ch == ">":
            depth -= 1
        elif ch == ":" and depth == 0:
            colon = i
    if colon < 0:
        raise LanguageError(f"cannot parse type {text!r}")
    args = tuple(parse_type(p) for p in _split_top(inner[:colon], ","))
    return Func(args, parse_type(inner[colon + 1 :]))


def _split_top(s: str, sep: str) -> list[str]:
    """Split on sep occurrences outside any <...> or [...] nesting."""
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(s):
        if ch in "<[":
            depth += 1
        elif ch in ">]":
            depth -= 1
        elif ch == sep and depth == 0:
            parts.append(s[start:i])
            start = i + 1
    parts.append(s[start:])
    return [p for p in (q.strip() for q in parts) if p]


# ---------------------------------------------------------------------------
# Grammar actions

TERMINAL = "terminal"
APPLY = "apply"
COMPOSE = "compose"
CURRY = "curry"


@dataclass(frozen=True)
class Action:
    """One production of the linearized grammar.

    ``terminal`` fills a typed slot with a function name or literal; the
    template kinds expand a slot into child slots: ``apply`` is full
    application ``[headType, argType...]``, ``compose`` is ``[*, F, G]``
    with ``(f * g)(s) = f(g(s))``, and ``curry`` binds the leading int
    argument ``[<int,A:B>, int]`` leaving a one-argument function.
    """

    lhs: SemType
    kind: str
    name: str | None = None
    children: tuple[SemType, ...] = ()

    def __post_init__(self):
        if self.kind == TERMINAL:
            rhs = self.name
        else:
            parts = [str(c) for c in self.children]
            if self.kind == COMPOSE:
                parts = ["*"] + parts
            rhs = "[" + ", ".join(parts) + "]"
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "uid", f"{self.lhs} -> {rhs}")

    def __str__(self):
        return self.uid


def terminal(lhs: SemType, name: str) -> Action:
    return Action(lhs, TERMINAL, name=name)


def apply_action(head: Func) -> Action:
    return Action(head.ret, APPLY, children=(head,) + head.args)


def compose_action(f: Func, g: Func) -> Action:
    if f.args != (g.ret,):
        raise LanguageError(f"cannot compose {f} with {g}")
    return Action(Func(g.args, f.ret), COMPOSE, children=(f, g))


def curry_action(func: Func) -> Action:
    if len(func.args) != 2 or func.args[0] != INT:
        raise LanguageError(f"currying binds the first int argument only, got {func}")
    return Action(Func(func.args[1:], func.ret), CURRY, children=(func, INT))


def parse_action(line: str) -> Action:
    """Parse one ``lhs -> rhs`` action line (inverse of Action.uid)."""
    if " -> " not in line:
        raise LanguageError(f"action line {line!r} lacks ' -> '")
    lhs_s, rhs = line.split(" -> ", 1)
    lhs = parse_type(lhs_s)
    rhs = rhs.strip()
    if not rhs.startswith("["):
        return terminal(lhs, rhs)
    if not rhs.endswith("]"):
        raise LanguageError(f"unterminated template in {line!r}")
    parts = _split_top(rhs[1:-1], ",")
    if parts and parts[0] == "*":
        f, g = (parse_type(p) for p in parts[1:])
        act = compose_action(f, g)
    else:
        head = parse_type(parts[0])
        if not isinstance(head, Func):
            raise LanguageError(f"template head must be a function type: {line!r}")
        n_args = len(parts) - 1
        if n_args == len(head.args):
            act = apply_action(head)
        elif n_args < len(head.args):
            act = curry_action(head)
        else:
            raise LanguageError(f"too many template arguments in {line!r}")
    if act.lhs != lhs:
        raise LanguageError(f"template in {line!r} produces {act.lhs}, not {lhs}")
    return act


# ---------------------------------------------------------------------------
# Grammars

OBJ_FILTER_NAMES = COLORS + SHAPES + SIZES + ("top", "bottom", "above", "below")
OBJ_COUNT_NAMES = (
    "objectCountEq",
    "objectCountGtEq",
    "objectCountLtEq",
    "objColorCountEq",
    "objColorCountGrtEq",
    "objShapeCountEq",
    "objShapeCountGrtEq",
)
BOX_COUNT_NAMES = ("boxCountEq", "boxCountGtEq", "boxCountLtEq")
MACRO_NAMES = ("memberColorCountGrtEq", "memberObjCountEq")
INT_LITERALS = tuple(str(i) for i in range(1, 10))


class Grammar:
    """Immutable action inventory for one language variant."""

    def __init__(self, variant: str, actions: Sequence[Action], root: SemType = BOOL):
        self.variant = variant
        self.actions = tuple(sorted(actions, key=lambda a: a.uid))
        self.root = root
        if len({a.uid for a in self.actions}) != len(self.actions):
            raise LanguageError("duplicate action identifiers")
        by_lhs: dict[SemType, list[Action]] = {}
        for a in self.actions:
            by_lhs.setdefault(a.lhs, []).append(a)
        self.by_lhs = {t: tuple(acts) for t, acts in by_lhs.items()}
        self.by_uid = {a.uid: a for a in self.actions}
        self.by_name = {}
        for a in self.actions:
            if a.kind == TERMINAL:
                self.by_name.setdefault(a.name, []).append(a)
        self.min_actions = self._min_actions()
        self._check_generative()
        # minimum actions needed to complete each action's child slots
        self.child_min_cost = {
            a.uid: sum(self.min_actions[c] for c in a.children) for a in self.actions
        }

    def _min_actions(self) -> dict[SemType, int]:
        cost = {}
        changed = True
        while changed:
            changed = False
            for a in self.actions:
                if a.kind == TERMINAL:
                    c = 1
                elif all(ch in cost for ch in a.children):
                    c = 1 + sum(cost[ch] for ch in a.children)
                else:
                    continue
                if c < cost.get(a.lhs, 1 << 30):
                    cost[a.lhs] = c
                    changed = True
        return cost

    def _check_generative(self):
        for a in self.actions:
            for ch in a.children:
                if ch not in self.by_lhs:
                    raise LanguageError(f"child type {ch} of {a.uid!r} has no producing action")

    def valid_actions(self, t: SemType) -> tuple[Action, ...]:
        return self.by_lhs.get(t, ())

    def __repr__(self):
        return f"Grammar({self.variant!r}, {len(self.actions)} actions)"


def build_grammar(variant: str = "new", include_bool_literals: bool = False) -> Grammar:
    """Build the ``new`` or ``old`` grammar variant."""
    variant = variant.lower()
    if variant not in ("new", "old"):
        raise LanguageError(f"unknown grammar variant {variant!r}")

    acts: list[Action] = []
    # constants and literals
    acts.append(terminal(OBJ_SET, "allObjs"))
    acts.append(terminal(BOX_SET, "allBoxes"))
    acts.extend(terminal(INT, lit) for lit in INT_LITERALS)
    acts.extend(terminal(COLOR_T, c) for c in COLORS)
    acts.extend(terminal(SHAPE_T, s) for s in SHAPES)
    acts.extend(terminal(SIZE_T, s) for s in SIZES)
    if include_bool_literals:
        acts.append(terminal(BOOL, "true"))
        acts.append(terminal(BOOL, "false"))

    # object filters and predicates
    acts.extend(terminal(OBJ_FILTER, n) for n in OBJ_FILTER_NAMES)
    acts.append(terminal(OBJ_PRED, "objExists"))
    acts.extend(terminal(OBJ_COUNT_PRED, n) for n in OBJ_COUNT_NAMES)

    # box predicates and boolean connectives
    acts.append(terminal(BOX_PRED, "boxExists"))
    acts.extend(terminal(BOX_COUNT_PRED, n) for n in BOX_COUNT_NAMES)
    acts.append(terminal(BOOL_BINOP, "andBool"))
    acts.append(terminal(BOOL_BINOP, "orBool"))
    acts.append(terminal(BOOL_UNOP, "notBool"))

    # application templates shared by both variants
    for head in (OBJ_PRED, BOX_PRED, BOX_COUNT_PRED, BOOL_BINOP, BOOL_UNOP, OBJ_FILTER):
        acts.append(apply_action(head))

    # composition family and count-predicate currying
    acts.append(compose_action(OBJ_PRED, OBJ_FILTER))
    acts.append(compose_action(OBJ_FILTER, OBJ_FILTER))
    acts.append(curry_action(OBJ_COUNT_PRED))

    if variant == "new":
        acts.append(terminal(BOX_FILTER_PRED, "boxFilter"))
        acts.append(terminal(BOX_FILTER_SET, "boxFilter"))
        acts.append(apply_action(BOX_FILTER_PRED))
        acts.append(apply_action(BOX_FILTER_SET))
    else:
        acts.extend(terminal(BOX_MACRO, n) for n in MACRO_NAMES)
        acts.append(apply_action(BOX_MACRO))

    return Grammar(variant, acts)


# ---------------------------------------------------------------------------
# Decoder state for left-to-right program generation


@dataclass(frozen=True)
class DecoderState:
    """Leftmost-derivation state: pending slot types plus the previous action."""

    pending: tuple[SemType, ...]
    prev: str = "<s>"

    @classmethod
    def initial(cls, grammar: "Grammar") -> "DecoderState":
        return cls((grammar.root,))

    @property
    def finished(self) -> bool:
        return not self.pending

    def valid_actions(self, grammar: "Grammar") -> tuple[Action, ...]:
        if not self.pending:
            return ()
        return grammar.by_lhs.get(self.pending[0], ())

    def advance(self, grammar: "Grammar", action: Action) -> "DecoderState":
        if not self.pending or action.lhs != self.pending[0]:
            raise ActionSequenceError(
                f"action {action.uid!r} does not expand pending slot "
                f"{self.pending[0] if self.pending else None}"
            )
        return DecoderState(action.children + self.pending[1:], action.uid)


# ---------------------------------------------------------------------------
# Program ASTs


class Node:
    __slots__ = ()


@dataclass(frozen=True)
class Leaf(Node):
    type: SemType
    name: str


@dataclass(frozen=True)
class ApplyNode(Node):
    type: SemType
    head: Node
    args: tuple[Node, ...]


@dataclass(frozen=True)
class ComposeNode(Node):
    type: SemType
    f: Node
    g: Node


@dataclass(frozen=True)
class CurryNode(Node):
    type: SemType
    func: Node
    arg: Node


@dataclass(frozen=True)
class Hole(Node):
    """Wildcard subtree used only in probe fragments; contributes no actions."""

    type: SemType


@dataclass(frozen=True)
class Program:
    """A well-typed AST plus its linearized action-id sequence."""

    ast: Node
    actions: tuple[str, ...]

    def __str__(self):
        return pretty_print(self.ast)


def node_action(grammar: Grammar, node: Node) -> Action:
    """The grammar action that expands a slot into this node."""
    if isinstance(node, Leaf):
        a = terminal(node.type, node.name)
    elif isinstance(node, ApplyNode):
        a = Action(node.type, APPLY, children=(node.head.type,) + tuple(x.type for x in node.args))
    elif isinstance(node, ComposeNode):
        a = Action(node.type, COMPOSE, children=(node.f.type, node.g.type))
    elif isinstance(node, CurryNode):
        a = Action(node.type, CURRY, children=(node.func.type, INT))
    else:
        raise LanguageError(f"cannot linearize node {node!r}")
    if a.uid not in grammar.by_uid:
        raise LanguageError(f"action {a.uid!r} not in grammar {grammar.variant!r}")
    return a


def _children(node: Node) -> tuple[Node, ...]:
    if isinstance(node, ApplyNode):
        return (node.head,) + node.args
    if isinstance(node, ComposeNode):
        return (node.f, node.g)
    if isinstance(node, CurryNode):
        return (node.func, node.arg)
    return ()


def linearize(grammar: Grammar, node: Node) -> tuple[str, ...]:
    """Depth-first left-to-right action sequence for a (sub)tree."""
    out: list[str] = []
    stack = [node]
    while stack:
        n = stack.pop()
        out.append(node_action(grammar, n).uid)
        stack.extend(reversed(_children(n)))
    return tuple(out)


def program_from_ast(grammar: Grammar, node: Node) -> Program:
    return Program(node, linearize(grammar, node))


def parse_actions(grammar: Grammar, actions: Sequence[str | Action]) -> Program:
    """Rebuild the typed AST from a linearized action sequence."""
    if not actions:
        raise ActionSequenceError("empty action sequence")
    resolved: list[Action] = []
    for i, a in enumerate(actions):
        if isinstance(a, Action):
            a = a.uid
        act = grammar.by_uid.get(a)
        if act is None:
            raise ActionSequenceError(f"step {i}: unknown action {a!r}")
        resolved.append(act)

    pos = 0

    def build(expected: SemType) -> Node:
        nonlocal pos
        if pos >= len(resolved):
            raise ActionSequenceError(f"truncated sequence: expected {expected} at step {pos}")
        act = resolved[pos]
        if act.lhs != expected:
            raise ActionSequenceError(
                f"step {pos}: expected an action producing {expected}, got {act.uid!r}"
            )
        pos += 1
        if act.kind == TERMINAL:
            return Leaf(act.lhs, act.name)
        kids = [build(ch) for ch in act.children]
        if act.kind == APPLY:
            return ApplyNode(act.lhs, kids[0], tuple(kids[1:]))
        if act.kind == COMPOSE:
            return ComposeNode(act.lhs, kids[0], kids[1])
        return CurryNode(act.lhs, kids[0], kids[1])

    ast = build(grammar.root)
    if pos != len(resolved):
        raise ActionSequenceError(f"trailing actions after step {pos - 1}")
    return Program(ast, tuple(a.uid for a in resolved))


# ---------------------------------------------------------------------------
# Textual program syntax: identifier(arg, ...) with nesting.
# Composition and currying print exactly like application and are
# disambiguated by the expected type during elaboration.


def pretty_print(node: Node | Program) -> str:
    if isinstance(node, Program):
        node = node.ast
    if isinstance(node, Leaf):
        return node.name
    if isinstance(node, Hole):
        return "_"
    if isinstance(node, ApplyNode):
        return pretty_print(node.head) + "(" + ", ".join(pretty_print(a) for a in node.args) + ")"
    if isinstance(node, ComposeNode):
        return pretty_print(node.f) + "(" + pretty_print(node.g) + ")"
    if isinstance(node, CurryNode):
        return pretty_print(node.func) + "(" + pretty_print(node.arg) + ")"
    raise LanguageError(f"cannot print {node!r}")


_TOKEN_RE = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_]*|\d+|[(),])")


@dataclass(frozen=True)
class _EAtom:
    name: str
    pos: int


@dataclass(frozen=True)
class _ECall:
    fn: object
    args: tuple
    pos: int


def _tokenize_text(text: str) -> list[tuple[str, int]]:
    toks, i = [], 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if not m:
            if text[i:].strip():
                raise TextParseError(f"unexpected character {text[i]!r} at offset {i}")
            break
        toks.append((m.group(1), m.start(1)))
        i = m.end()
    return toks


def _parse_expr_tree(text: str):
    toks = _tokenize_text(text)
    pos = 0

    def peek():
        return toks[pos][0] if pos < len(toks) else None

    def expect(tok):
        nonlocal pos
        if peek() != tok:
            at = toks[pos][1] if pos < len(toks) else len(text)
            raise TextParseError(f"expected {tok!r} at offset {at}")
        pos += 1

    def atom():
        nonlocal pos
        if pos >= len(toks):
            raise TextParseError(f"unexpected end of input at offset {len(text)}")
        name, at = toks[pos]
        if name in "(),":
            raise TextParseError(f"unexpected {name!r} at offset {at}")
        pos += 1
        node = _EAtom(name, at)
        while peek() == "(":
            expect("(")
            args = [expr()]
            while peek() == ",":
                expect(",")
                args.append(expr())
            expect(")")
            node = _ECall(node, tuple(args), at)
        return node

    def expr():
        return atom()

    tree = expr()
    if pos != len(toks):
        raise TextParseError(f"trailing input at offset {toks[pos][1]}")
    return tree


def _elaborate(grammar: Grammar, e, want: SemType, allow_holes: bool) -> list[Node]:
    if isinstance(e, _EAtom):
        if e.name == "_":
            return [Hole(want)] if allow_holes else []
        return [
            Leaf(want, a.name)
            for a in grammar.valid_actions(want)
            if a.kind == TERMINAL and a.name == e.name
        ]
    out: list[Node] = []
    for act in grammar.valid_actions(want):
        if act.kind == APPLY and len(e.args) == len(act.children) - 1:
            head_sols = _elaborate(grammar, e.fn, act.children[0], allow_holes)
            if head_sols:
                arg_sols = [
                    _elaborate(grammar, arg, t, allow_holes)
                    for arg, t in zip(e.args, act.children[1:])
                ]
                if all(arg_sols):
                    for h, combo in product(head_sols, product(*arg_sols)):
                        out.append(ApplyNode(want, h, tuple(combo)))
        elif act.kind == COMPOSE and len(e.args) == 1:
            for f in _elaborate(grammar, e.fn, act.children[0], allow_holes):
                for g in _elaborate(grammar, e.args[0], act.children[1], allow_holes):
                    out.append(ComposeNode(want, f, g))
        elif act.kind == CURRY and len(e.args) == 1:
            for fn in _elaborate(grammar, e.fn, act.children[0], allow_holes):
                for arg in _elaborate(grammar, e.args[0], act.children[1], allow_holes):
                    out.append(CurryNode(want, fn, arg))
    return out


def parse_fragment(grammar: Grammar, text: str, want: SemType, allow_holes: bool = True) -> Node:
    """Parse a subprogram of a given type; ``_`` stands for any subtree."""
    tree = _parse_expr_tree(text)
    sols = _elaborate(grammar, tree, want, allow_holes)
    if not sols:
        raise TextParseError(f"{text!r} does not type-check as {want} in grammar {grammar.variant!r}")
    if len(sols) > 1:
        raise TextParseError(f"{text!r} is ambiguous as {want} ({len(sols)} parses)")
    return sols[0]


def fragment_action_set(grammar: Grammar, text: str, want: SemType) -> frozenset[str]:
    """Action identities of a fragment, skipping holes."""
    node = parse_fragment(grammar, text, want, allow_holes=True)
    out = []
    stack = [node]
    while stack:
        n = stack.pop()
        if isinstance(n, Hole):
            continue
        out.append(node_action(grammar, n).uid)
        stack.extend(_children(n))
    return frozenset(out)


def parse_text(grammar: Grammar, text: str) -> Program:
    """Parse program text (root type bool) into a Program."""
    node = parse_fragment(grammar, text, grammar.root, allow_holes=False)
    return program_from_ast(grammar, node)


def program_to_action_text(program: Program) -> str:
    return "\n".join(program.actions)


def program_from_action_text(grammar: Grammar, text: str) -> Program:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    return parse_actions(grammar, [parse_action(ln).uid for ln in lines])
