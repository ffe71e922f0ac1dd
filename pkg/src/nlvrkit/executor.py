"""Deterministic program evaluation against structured scenes.

Two interpreters with the same contract:

* :func:`execute` -- the production engine (closure-based, context threading).
* :func:`reference_execute` -- an independently written naive recursive
  interpreter kept free of any shared evaluation machinery; it exists as a
  differential-testing oracle.

Both are total: every function is defined on empty sets, counts of an empty
set are 0, and positional filters of an empty set are empty.  ``allObjs``
denotes all objects of the scene at the top level and rebinds to the current
box's objects inside a ``boxFilter`` predicate.  ``above``/``below`` relate
objects within the same box only and draw candidates from the current
universe, so e.g. ``yellow(above(black(allObjs)))`` selects yellow objects
that sit above some black object in their box.
"""

from __future__ import annotations

from typing import NamedTuple

from .language import ApplyNode, ComposeNode, CurryNode, Func, Leaf, Node, Program
from .scene import Scene


class _PObj(NamedTuple):
    box: int
    idx: int
    x: int
    y: int
    color: str
    shape: str
    size: str


class _Ctx(NamedTuple):
    universe: frozenset
    boxes: tuple  # full contents of each box, as frozensets of _PObj


def _scene_ctx(scene: Scene) -> _Ctx:
    boxes = []
    for b, box in enumerate(scene.boxes):
        boxes.append(
            frozenset(
                _PObj(b, i, o.x, o.y, o.color, o.shape, o.size) for i, o in enumerate(box.objects)
            )
        )
    boxes = tuple(boxes)
    return _Ctx(frozenset().union(*boxes), boxes)


def _attr_filter(field: str, value: str):
    def run(ctx, s):
        return frozenset(o for o in s if getattr(o, field) == value)

    return run


def _top(ctx, s):
    return frozenset(o for o in s if o.y == min(q.y for q in ctx.boxes[o.box]))


def _bottom(ctx, s):
    return frozenset(o for o in s if o.y == max(q.y for q in ctx.boxes[o.box]))


def _above(ctx, s):
    return frozenset(o for o in ctx.universe if any(q.box == o.box and o.y < q.y for q in s))


def _below(ctx, s):
    return frozenset(o for o in ctx.universe if any(q.box == o.box and o.y > q.y for q in s))


def _distinct(field: str):
    def run(ctx, s):
        return len({getattr(o, field) for o in s})

    return run


_ncolors = _distinct("color")
_nshapes = _distinct("shape")


def _box_filter(ctx, boxes, f):
    # keeps boxes whose objects satisfy f: a bool filter directly, a
    # set-valued filter by non-emptiness; allObjs rebinds to the box
    kept = set()
    for b in boxes:
        inner = _Ctx(ctx.boxes[b], ctx.boxes)
        if f(inner, ctx.boxes[b]):
            kept.add(b)
    return frozenset(kept)


_FUNCS = {
    "top": _top,
    "bottom": _bottom,
    "above": _above,
    "below": _below,
    "objExists": lambda ctx, s: len(s) > 0,
    "objectCountEq": lambda ctx, n, s: len(s) == n,
    "objectCountGtEq": lambda ctx, n, s: len(s) >= n,
    "objectCountLtEq": lambda ctx, n, s: len(s) <= n,
    "objColorCountEq": lambda ctx, n, s: _ncolors(ctx, s) == n,
    "objColorCountGrtEq": lambda ctx, n, s: _ncolors(ctx, s) >= n,
    "objShapeCountEq": lambda ctx, n, s: _nshapes(ctx, s) == n,
    "objShapeCountGrtEq": lambda ctx, n, s: _nshapes(ctx, s) >= n,
    "boxExists": lambda ctx, b: len(b) > 0,
    "boxCountEq": lambda ctx, n, b: len(b) == n,
    "boxCountGtEq": lambda ctx, n, b: len(b) >= n,
    "boxCountLtEq": lambda ctx, n, b: len(b) <= n,
    "boxFilter": _box_filter,
    "memberColorCountGrtEq": lambda ctx, n, b: frozenset(
        x for x in b if _ncolors(ctx, ctx.boxes[x]) >= n
    ),
    "memberObjCountEq": lambda ctx, n, b: frozenset(x for x in b if len(ctx.boxes[x]) == n),
    "andBool": lambda ctx, a, b: a and b,
    "orBool": lambda ctx, a, b: a or b,
    "notBool": lambda ctx, a: not a,
}
for _c in ("black", "blue", "yellow"):
    _FUNCS[_c] = _attr_filter("color", _c)
for _s in ("triangle", "square", "circle"):
    _FUNCS[_s] = _attr_filter("shape", _s)
for _z in ("small", "medium", "large"):
    _FUNCS[_z] = _attr_filter("size", _z)


def _eval(node: Node, ctx: _Ctx):
    if isinstance(node, Leaf):
        t = str(node.type)
        if t.startswith("<"):
            return _FUNCS[node.name]
        if t == "Set[Object]":
            return ctx.universe
        if t == "Set[Box]":
            return frozenset(range(len(ctx.boxes)))
        if t == "int":
            return int(node.name)
        if t == "bool":
            return node.name == "true"
        return node.name  # Color/Shape/Size literal
    if isinstance(node, ApplyNode):
        f = _eval(node.head, ctx)
        args = [_eval(a, ctx) for a in node.args]
        return f(ctx, *args)
    if isinstance(node, ComposeNode):
        f = _eval(node.f, ctx)
        g = _eval(node.g, ctx)
        return lambda c, x: f(c, g(c, x))
    if isinstance(node, CurryNode):
        fn = _eval(node.func, ctx)
        n = _eval(node.arg, ctx)
        return lambda c, s: fn(c, n, s)
    raise TypeError(f"cannot evaluate node {node!r}")


def execute(program: Program | Node, scene: Scene) -> bool:
    """Evaluate a bool-rooted program against one scene."""
    ast = program.ast if isinstance(program, Program) else program
    return bool(_eval(ast, _scene_ctx(scene)))


# ---------------------------------------------------------------------------
# Independent reference interpreter (test oracle).
#
# Objects are (box_index, object_index) pairs looked up in the raw Scene;
# sets are plain Python sets of those pairs.  No code above is reused.


def _ref_obj(scene, oid):
    return scene.boxes[oid[0]].objects[oid[1]]


def _ref_box_ids(scene, b):
    return {(b, i) for i in range(len(scene.boxes[b].objects))}


def _ref_apply(scene, universe, fnode, args):
    """Apply a function-typed subtree to already-evaluated arguments."""
    if isinstance(fnode, ComposeNode):
        inner = _ref_apply(scene, universe, fnode.g, [args[0]])
        return _ref_apply(scene, universe, fnode.f, [inner])
    if isinstance(fnode, CurryNode):
        bound = _ref_eval(scene, universe, fnode.arg)
        return _ref_apply(scene, universe, fnode.func, [bound] + list(args))
    if not isinstance(fnode, Leaf):
        raise TypeError(f"reference interpreter: bad function node {fnode!r}")

    name = fnode.name
    if name in ("black", "blue", "yellow"):
        return {o for o in args[0] if _ref_obj(scene, o).color == name}
    if name in ("triangle", "square", "circle"):
        return {o for o in args[0] if _ref_obj(scene, o).shape == name}
    if name in ("small", "medium", "large"):
        return {o for o in args[0] if _ref_obj(scene, o).size == name}
    if name == "top":
        out = set()
        for o in args[0]:
            ys = [_ref_obj(scene, q).y for q in universe if q[0] == o[0]]
            if _ref_obj(scene, o).y == min(ys):
                out.add(o)
        return out
    if name == "bottom":
        out = set()
        for o in args[0]:
            ys = [_ref_obj(scene, q).y for q in universe if q[0] == o[0]]
            if _ref_obj(scene, o).y == max(ys):
                out.add(o)
        return out
    if name == "above":
        out = set()
        for o in universe:
            for q in args[0]:
                if q[0] == o[0] and _ref_obj(scene, o).y < _ref_obj(scene, q).y:
                    out.add(o)
        return out
    if name == "below":
        out = set()
        for o in universe:
            for q in args[0]:
                if q[0] == o[0] and _ref_obj(scene, o).y > _ref_obj(scene, q).y:
                    out.add(o)
        return out
    if name == "objExists":
        return len(args[0]) > 0
    if name.startswith("objectCount"):
        n, s = args
        if name.endswith("GtEq"):
            return len(s) >= n
        if name.endswith("LtEq"):
            return len(s) <= n
        return len(s) == n
    if name.startswith("objColorCount") or name.startswith("objShapeCount"):
        n, s = args
        if "Color" in name:
            vals = {_ref_obj(scene, o).color for o in s}
        else:
            vals = {_ref_obj(scene, o).shape for o in s}
        return len(vals) >= n if name.endswith("GrtEq") else len(vals) == n
    if name == "boxExists":
        return len(args[0]) > 0
    if name.startswith("boxCount"):
        n, b = args
        if name.endswith("GtEq"):
            return len(b) >= n
        if name.endswith("LtEq"):
            return len(b) <= n
        return len(b) == n
    if name == "boxFilter":
        boxes, filt = args
        kept = set()
        for b in boxes:
            res = _ref_apply(scene, _ref_box_ids(scene, b), filt, [_ref_box_ids(scene, b)])
            ok = res if isinstance(res, bool) else len(res) > 0
            if ok:
                kept.add(b)
        return kept
    if name == "memberColorCountGrtEq":
        n, boxes = args
        return {b for b in boxes if len({o.color for o in scene.boxes[b].objects}) >= n}
    if name == "memberObjCountEq":
        n, boxes = args
        return {b for b in boxes if len(scene.boxes[b].objects) == n}
    if name == "andBool":
        return args[0] and args[1]
    if name == "orBool":
        return args[0] or args[1]
    if name == "notBool":
        return not args[0]
    raise TypeError(f"reference interpreter: unknown function {name!r}")


def _ref_eval(scene, universe, node):
    if isinstance(node, Leaf):
        t = str(node.type)
        if t == "Set[Object]":
            return set(universe)
        if t == "Set[Box]":
            return set(range(len(scene.boxes)))
        if t == "int":
            return int(node.name)
        if t == "bool":
            return node.name == "true"
        if t.startswith("<"):
            raise TypeError("function leaf evaluated outside application")
        return node.name
    if isinstance(node, ApplyNode):
        args = []
        for a in node.args:
            if isinstance(a.type, Func):
                args.append(a)  # function arguments pass as unevaluated subtrees
            else:
                args.append(_ref_eval(scene, universe, a))
        return _ref_apply(scene, universe, node.head, args)
    raise TypeError(f"reference interpreter: cannot evaluate {node!r}")


def reference_execute(program: Program | Node, scene: Scene) -> bool:
    ast = program.ast if isinstance(program, Program) else program
    universe = {(b, i) for b in range(len(scene.boxes)) for i in range(len(scene.boxes[b].objects))}
    return bool(_ref_eval(scene, universe, ast))
