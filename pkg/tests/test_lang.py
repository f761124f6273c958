import pytest
from hypothesis import given, settings, strategies as st

from fieldcalc import blocks
from fieldcalc.lang import (Apply, ArityError, BuiltinRef, FieldSyntaxError, Lambda, Literal,
                            Nbr, Rep, ResolutionError, format_number, lambdas, parse, pretty,
                            tokenize)


def test_distance_listing_parses():
    prog = parse("def distance(source){ rep(infinity){ (d) => "
                 "mux(source, 0, minHood( nbrRange() + nbr{d})) } }")
    body = prog.defs["distance"].body
    assert isinstance(body, Rep)
    assert isinstance(body.update, Lambda)
    assert prog.main is None


def test_inline_examples_parse():
    assert isinstance(parse("1+2").main, Apply)
    assert isinstance(parse("((x)=>x+1)(0)").main.target, Lambda)
    assert isinstance(parse("rep(0){(x)=>x+1}").main, Rep)
    app = parse('(mux(sense("s"), +, -))(2, 1)').main
    assert isinstance(app.target, Apply)
    assert [type(a) for a in app.target.args[1:]] == [BuiltinRef, BuiltinRef]


def test_precedence_and_unary():
    assert pretty(parse("1 + 2 * 3 < 7 && !false")) == "(((1 + (2 * 3)) < 7) && (!false))\n"
    assert parse("-3").main == Literal(-3.0)
    assert pretty(parse("-(1 + 2)")) == "neg((1 + 2))\n"


def test_numbers_are_floats_and_infinity():
    assert parse("2").main.value == 2.0
    assert parse("infinity").main.value == float("inf")
    assert format_number(3.0) == "3"
    assert format_number(-0.0) == "-0"
    assert format_number(0.1) == "0.1"


def test_comments_and_whitespace():
    prog = parse("// top\ndef f(x) { x } // trailing\nf(1)\n")
    assert "f" in prog.defs


@pytest.mark.parametrize("src, line, col", [
    ("def f(x) {\n  x +\n}", 2, 5),
    ("1 +\n  (2", 2, 5),
    ("rep(0) {", 1, 9),
    ("", 1, 1),
])
def test_syntax_errors_carry_positions(src, line, col):
    with pytest.raises(FieldSyntaxError) as info:
        parse(src, "bad.fc")
    assert (info.value.loc.line, info.value.loc.col) == (line, col)
    assert str(info.value).startswith(f"bad.fc:{line}:{col}:")


def test_unresolved_identifier():
    with pytest.raises(ResolutionError, match="foo"):
        parse("1 + foo", "x.fc")


def test_static_arity_errors():
    with pytest.raises(ArityError):
        parse("def f(x) { x }\nf(1, 2)")
    with pytest.raises(ArityError):
        parse("minHood(1, 2)")


def test_tokenizer_rejects_stray_characters():
    with pytest.raises(FieldSyntaxError):
        tokenize("1 $ 2")


def test_lambda_tags_are_stable():
    prog = parse("def f(a) { ((x) => x + a)(1) + ((y) => y)(2) }")
    assert sorted(lambdas(prog)) == ["f#0", "f#1"]
    main = parse("((x) => x)(1)")
    assert list(lambdas(main)) == ["@main#0"]


def test_user_definitions_override_stdlib():
    prog = blocks.link("distance(true)", "def distance(s) { 42 }")
    assert prog.defs["distance"].params == ("s",)
    assert pretty(parse(pretty(prog))) == pretty(prog)


def test_nbr_and_rep_pretty():
    assert pretty(parse("rep(0) { (x) => x + 1 }")) == "rep(0) { (x) => (x + 1) }\n"
    assert pretty(parse("sumHood(nbr{1})")) == "sumHood(nbr{1})\n"
    assert isinstance(parse("nbr{1}").main, Nbr)


def test_stdlib_round_trips():
    lib = blocks.stdlib()
    text = pretty(lib)
    again = parse(text, "again.fc")
    assert pretty(again) == text
    assert again == lib


# -- generated programs ------------------------------------------------------

_num = st.integers(-50, 50).map(str)
_atoms = st.one_of(_num, st.sampled_from(["true", "false", "x", "nbrRange()", 'sense("s")']))


def _compound(children):
    bin_op = st.sampled_from(["+", "-", "*", "/", "<", "==", "&&", "||"])
    return st.one_of(
        st.tuples(children, bin_op, children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        st.tuples(children, children, children).map(lambda t: f"mux({t[0]}, {t[1]}, {t[2]})"),
        children.map(lambda c: f"nbr{{{c}}}"),
        children.map(lambda c: f"minHood({c})"),
        st.tuples(children, children).map(lambda t: f"rep({t[0]}) {{ (x) => {t[1]} }}"),
        children.map(lambda c: f"((x) => {c})(1)"),
        children.map(lambda c: f"-{c}"),
        children.map(lambda c: f"!{c}"),
    )


programs = st.recursive(_atoms, _compound, max_leaves=12).map(
    lambda body: f"def g(x) {{ {body} }}\ng(0)")


@settings(max_examples=150, deadline=None)
@given(programs)
def test_pretty_print_round_trip(src):
    prog = parse(src)
    text = pretty(prog)
    reparsed = parse(text)
    assert reparsed == prog
    assert pretty(reparsed) == text
