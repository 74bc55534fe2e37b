import pytest
from hypothesis import given, settings

from logicnode.reader import (
    ReaderError, deserialize, parse_program, parse_term, program_text,
    serialize, term_text)
from logicnode.terms import Atom, Int, Struct, Var, deref

from term_gen import terms


def variant_eq(a, b, forward=None, backward=None):
    """Structural equality up to a variable bijection."""
    if forward is None:
        forward, backward = {}, {}
    a, b = deref(a), deref(b)
    if isinstance(a, Var) or isinstance(b, Var):
        if not (isinstance(a, Var) and isinstance(b, Var)):
            return False
        fa, bb = forward.get(id(a)), backward.get(id(b))
        if fa is None and bb is None:
            forward[id(a)] = b
            backward[id(b)] = a
            return True
        return fa is b and bb is a
    if isinstance(a, Atom):
        return isinstance(b, Atom) and a.name == b.name
    if isinstance(a, Int):
        return isinstance(b, Int) and a.value == b.value
    if not (isinstance(b, Struct) and a.name == b.name and len(a.args) == len(b.args)):
        return False
    return all(variant_eq(x, y, forward, backward) for x, y in zip(a.args, b.args))


def test_parse_basic_shapes():
    t = parse_term("f(a, B, 3)")
    assert variant_eq(t, Struct("f", (Atom("a"), Var("_"), Int(3))))
    assert isinstance(t.args[1], Var)


def test_operator_precedence():
    t = parse_term("X is 1 + 2 * 3")
    assert term_text(t) == "is(_G1,'+'(1,'*'(2,3)))"
    t = parse_term("1 - 2 - 3")  # left associative
    assert term_text(t) == "'-'('-'(1,2),3)"
    t = parse_term("(a , b ; c)")
    assert term_text(t) == ";(','(a,b),c)"


def test_if_then_else_shape():
    t = parse_term("( a -> b ; c )")
    assert t.name == ";"
    assert deref(t.args[0]).name == "->"


def test_negative_numbers():
    assert parse_term("-5") == Int(-5)
    assert term_text(parse_term("f(-5)")) == "f(-5)"
    assert term_text(parse_term("3 - -2")) == "'-'(3,-2)"


def test_lists():
    assert term_text(parse_term("[a, b | T]")) == "[a,b|_G1]"
    assert term_text(parse_term("[]")) == "[]"
    assert term_text(parse_term("[1,[2],x]")) == "[1,[2],x]"


def test_quoted_atoms():
    t = parse_term("'hello world'")
    assert t == Atom("hello world")
    assert term_text(t) == "'hello world'"
    assert parse_term(r"'a\'b\\c\nd\te'") == Atom("a'b\\c\nd\te")


def test_quoting_only_when_needed():
    assert term_text(Atom("abc_1")) == "abc_1"
    assert term_text(Atom("Abc")) == "'Abc'"
    assert term_text(Atom("two words")) == "'two words'"
    assert term_text(Atom("")) == "''"


def test_shared_variable_names():
    t = parse_term("f(X, g(X), Y)")
    assert term_text(t) == "f(_G1,g(_G1),_G2)"


def test_directive_forms():
    prog = parse_program(":- event p/2, q/1.\n:- dynamic(r/0).\np(a, b).\n")
    kinds = [(d.kind, d.indicators) for d in prog.directives]
    assert kinds == [("event", [("p", 2), ("q", 1)]), ("dynamic", [("r", 0)])]
    assert len(prog.clauses) == 1


def test_unknown_directive_rejected():
    with pytest.raises(ReaderError):
        parse_program(":- frobnicate p/1.\n")


def test_parse_errors_carry_position():
    with pytest.raises(ReaderError) as e:
        parse_program("p(a.\n")
    assert e.value.line == 1


def test_trailing_text_rejected():
    with pytest.raises(ReaderError):
        parse_term("a b")


def test_clause_head_must_be_callable():
    with pytest.raises(ReaderError):
        parse_program("3 :- true.\n")


def test_program_text_round_trip():
    src = ":- event p/1.\np(a).\np(X) :- q(X), r.\n"
    prog = parse_program(src)
    again = parse_program(program_text(prog))
    assert program_text(again) == program_text(prog)


def test_comments_ignored():
    prog = parse_program("% header\np(a). % trailing\n")
    assert len(prog.clauses) == 1


@settings(max_examples=300, deadline=None)
@given(terms())
def test_serialize_round_trip(t):
    back = deserialize(serialize(t))
    assert variant_eq(t, back)


def test_deserialize_rejects_bad_utf8():
    with pytest.raises(ReaderError):
        deserialize(b"\xff\xfe")
