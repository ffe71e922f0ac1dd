import pytest

from nlvrkit.language import (
    BOOL,
    INT,
    OBJ_SET,
    ActionSequenceError,
    Func,
    Prim,
    TextParseError,
    build_grammar,
    fragment_action_set,
    linearize,
    parse_action,
    parse_actions,
    parse_text,
    parse_type,
    pretty_print,
    program_from_action_text,
    program_to_action_text,
)

NEW = build_grammar("new")
OLD = build_grammar("old")

FIGURE_TEXT = "boxCountEq(1, boxFilter(allBoxes, objectCountGtEq(2)(yellow(square))))"
FIGURE_ACTIONS = [
    "bool -> [<int,Set[Box]:bool>, int, Set[Box]]",
    "<int,Set[Box]:bool> -> boxCountEq",
    "int -> 1",
    "Set[Box] -> [<Set[Box],<Set[Object]:bool>:Set[Box]>, Set[Box], <Set[Object]:bool>]",
    "<Set[Box],<Set[Object]:bool>:Set[Box]> -> boxFilter",
    "Set[Box] -> allBoxes",
    "<Set[Object]:bool> -> [*, <Set[Object]:bool>, <Set[Object]:Set[Object]>]",
    "<Set[Object]:bool> -> [<int,Set[Object]:bool>, int]",
    "<int,Set[Object]:bool> -> objectCountGtEq",
    "int -> 2",
    "<Set[Object]:Set[Object]> -> [*, <Set[Object]:Set[Object]>, <Set[Object]:Set[Object]>]",
    "<Set[Object]:Set[Object]> -> yellow",
    "<Set[Object]:Set[Object]> -> square",
]


def test_parse_type_round_trip():
    for s in ("bool", "int", "Set[Object]", "<Set[Object]:bool>",
              "<int,Set[Box]:bool>", "<Set[Box],<Set[Object]:bool>:Set[Box]>"):
        assert str(parse_type(s)) == s


def test_type_structure():
    t = parse_type("<int,Set[Box]:bool>")
    assert t == Func((INT, Prim("Set[Box]")), BOOL)


def test_grammar_inventories():
    new_names = {a.name for a in NEW.actions if a.name}
    old_names = {a.name for a in OLD.actions if a.name}
    assert "boxFilter" in new_names
    assert "memberColorCountGrtEq" not in new_names
    assert "memberColorCountGrtEq" in old_names
    assert "memberObjCountEq" in old_names
    assert "boxFilter" not in old_names
    assert NEW.root == BOOL and OLD.root == BOOL


def test_grammar_symmetric_difference():
    new_only = {a.uid for a in NEW.actions} - {a.uid for a in OLD.actions}
    old_only = {a.uid for a in OLD.actions} - {a.uid for a in NEW.actions}
    assert all("boxFilter" in uid or "<Set[Box],<" in uid for uid in new_only)
    assert all("member" in uid or "<int,Set[Box]:Set[Box]>" in uid for uid in old_only)
    # the difference is exactly the boxFilter actions vs the macro actions
    assert len(new_only) == 4  # two overloads, terminal + template each
    assert len(old_only) == 3  # two macro terminals + shared template


def test_unique_action_ids():
    for grammar in (NEW, OLD):
        uids = [a.uid for a in grammar.actions]
        assert len(uids) == len(set(uids))


def test_figure_sequence_parses_to_printed_text():
    program = parse_actions(NEW, FIGURE_ACTIONS)
    assert pretty_print(program) == FIGURE_TEXT
    assert list(program.actions) == FIGURE_ACTIONS


def test_printed_text_parses_to_figure_sequence():
    program = parse_text(NEW, FIGURE_TEXT)
    assert list(program.actions) == FIGURE_ACTIONS


def test_action_text_round_trip():
    program = parse_text(NEW, FIGURE_TEXT)
    text = program_to_action_text(program)
    assert text == "\n".join(FIGURE_ACTIONS)
    again = program_from_action_text(NEW, text)
    assert again == program


def test_parse_action_lines():
    for line in FIGURE_ACTIONS:
        assert parse_action(line).uid == line


def test_bool_literal_program_when_enabled():
    lit = build_grammar("new", include_bool_literals=True)
    program = parse_actions(lit, ["bool -> true"])
    assert pretty_print(program) == "true"
    with pytest.raises(ActionSequenceError):
        parse_actions(NEW, ["bool -> true"])


def test_swapped_steps_raise_typed_error():
    actions = list(FIGURE_ACTIONS)
    actions[8], actions[9] = actions[9], actions[8]
    with pytest.raises(ActionSequenceError, match="step 8"):
        parse_actions(NEW, actions)


def test_truncated_and_trailing_sequences():
    with pytest.raises(ActionSequenceError, match="truncated"):
        parse_actions(NEW, FIGURE_ACTIONS[:-1])
    with pytest.raises(ActionSequenceError, match="trailing"):
        parse_actions(NEW, FIGURE_ACTIONS + ["int -> 1"])
    with pytest.raises(ActionSequenceError):
        parse_actions(NEW, [])


def test_linearize_round_trip_section_example():
    program = parse_text(NEW, "objExists(yellow(above(black(allObjs))))")
    assert parse_actions(NEW, linearize(NEW, program.ast)) == program


def test_round_trip_over_enumeration():
    from nlvrkit.search import enumerate_programs

    count = 0
    for program in enumerate_programs(NEW, 8):
        assert parse_actions(NEW, linearize(NEW, program.ast)) == program
        count += 1
        if count >= 1500:
            break
    assert count >= 1000


def test_single_constant_round_trip():
    lit = build_grammar("new", include_bool_literals=True)
    program = parse_actions(lit, ["bool -> false"])
    assert parse_actions(lit, linearize(lit, program.ast)) == program
    assert len(program.actions) <= 2


def test_old_language_program_examples():
    z4 = parse_text(NEW, "boxExists(boxFilter(allBoxes, black(top)))")
    assert pretty_print(z4) == "boxExists(boxFilter(allBoxes, black(top)))"
    z3 = parse_text(OLD, "boxExists(memberObjCountEq(1,allBoxes))")
    assert pretty_print(z3) == "boxExists(memberObjCountEq(1, allBoxes))"
    with pytest.raises(TextParseError):
        parse_text(NEW, "boxExists(memberObjCountEq(1,allBoxes))")


def test_pretty_print_canonicalizes_whitespace():
    raw = "boxExists( boxFilter( allBoxes,black( top ) ) )"
    assert pretty_print(parse_text(NEW, raw)) == "boxExists(boxFilter(allBoxes, black(top)))"


def test_parse_text_diagnostics_carry_offsets():
    with pytest.raises(TextParseError, match="offset"):
        parse_text(NEW, "boxExists(allBoxes")
    with pytest.raises(TextParseError):
        parse_text(NEW, "boxExists(allObjs)")  # type error
    with pytest.raises(TextParseError):
        parse_text(NEW, "noSuchFn(allObjs)")


def test_apply_argument_types_match_exactly():
    # every enumerated program's application nodes take exactly matching types
    from nlvrkit.language import ApplyNode, _children
    from nlvrkit.search import enumerate_programs

    for program in enumerate_programs(NEW, 6):
        stack = [program.ast]
        while stack:
            node = stack.pop()
            if isinstance(node, ApplyNode):
                assert tuple(a.type for a in node.args) == node.head.type.args
                assert node.type == node.head.type.ret
            stack.extend(_children(node))


def test_fragment_action_set_with_hole():
    acts = fragment_action_set(NEW, "boxExists(_)", BOOL)
    assert acts == frozenset(
        {"bool -> [<Set[Box]:bool>, Set[Box]]", "<Set[Box]:bool> -> boxExists"}
    )


def test_generative_completeness():
    for grammar in (NEW, OLD):
        for action in grammar.actions:
            for child in action.children:
                assert grammar.by_lhs.get(child), f"{child} unproducible"
