import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from gmt.expr import (
    BinOp,
    Call,
    Coord,
    CoordinateRangeError,
    DomainError,
    ExprSyntaxError,
    Neg,
    NonDifferentiableError,
    Num,
    UnknownIdentifierError,
    evaluate,
    evaluate_dual,
    parse,
    to_source,
)


def test_parse_structure():
    e = parse("x1^2 + x2^2", 2, "x")
    assert e.root == BinOp("+", BinOp("^", Coord(1), Num(2.0)), BinOp("^", Coord(2), Num(2.0)))
    assert e.coordinates() == {1, 2}


@pytest.mark.parametrize(
    "source, expected",
    [
        ("2^3^2", 512.0),  # right associative
        ("-2^2", -4.0),  # power binds tighter than unary minus
        ("2^-1", 0.5),
        ("1 - 2 - 3", -4.0),
        ("8 / 2 / 2", 2.0),
        ("2 + 3 * 4", 14.0),
        ("(2 + 3) * 4", 20.0),
        ("1.5e1 + .5", 15.5),
        ("e", math.e),
    ],
)
def test_precedence(source, expected):
    assert evaluate(parse(source, 0), []) == expected


def test_syntax_error_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse("sin(", 1, "x")
    assert info.value.offset == 4


@pytest.mark.parametrize("source", ["", "   ", "1 +", "(x1", "x1 x1", "--x1", "sin x1", "1 $ 2", "sin(x1, x1)"])
def test_syntax_errors(source):
    with pytest.raises(ExprSyntaxError):
        parse(source, 1)


def test_coordinate_out_of_range():
    with pytest.raises(CoordinateRangeError):
        parse("x3", 2, "x")


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError):
        parse("y1 + 1", 1)
    with pytest.raises(UnknownIdentifierError):
        parse("tan(x1)", 1)


def test_prefix():
    e = parse("u1 * u2", 2, "u")
    assert evaluate(e, [2.0, 3.0]) == 6.0
    with pytest.raises(UnknownIdentifierError):
        parse("x1", 2, "u")


def test_eval_examples():
    assert evaluate(parse("x1^2+x2^2", 2), [3, 4]) == 25.0
    assert abs(evaluate(parse("sin(pi)", 0), [])) < 1e-15


@pytest.mark.parametrize(
    "source, point",
    [("sqrt(x1)", [-1.0]), ("log(x1)", [0.0]), ("1/x1", [0.0]), ("x1^0.5", [-2.0]), ("x1^-1", [0.0])],
)
def test_domain_errors(source, point):
    with pytest.raises(DomainError) as info:
        evaluate(parse(source, 1), point)
    assert "x1" in str(info.value)


def test_domain_error_names_subexpression():
    with pytest.raises(DomainError) as info:
        evaluate(parse("1 + sqrt(x1 - 3)", 1), [1.0])
    assert "sqrt((x1-3.0))" in str(info.value)


def test_negative_base_integer_exponent():
    assert evaluate(parse("x1^3", 1), [-2.0]) == -8.0
    assert evaluate(parse("x1^-2", 1), [-2.0]) == 0.25


def test_array_evaluation_broadcasts():
    e = parse("x1 + 2*x2", 2)
    x = np.array([0.0, 1.0, 2.0])
    np.testing.assert_array_equal(evaluate(e, [x, 1.0]), [2.0, 3.0, 4.0])
    assert evaluate(parse("3", 1), [x]).shape == (3,)


def test_dual_examples():
    d = evaluate_dual(parse("x1^2+x2^2", 2), [1, 2])
    assert d.value == 5.0
    np.testing.assert_array_equal(d.partials, [2.0, 4.0])
    d = evaluate_dual(parse("sqrt(x1^2+x2^2)", 2), [3, 4])
    np.testing.assert_allclose(d.partials, [0.6, 0.8], rtol=1e-15)


def test_dual_abs_at_zero_is_flagged():
    with pytest.raises(NonDifferentiableError):
        evaluate_dual(parse("abs(x1)", 1), [0.0])
    assert evaluate_dual(parse("abs(x1)", 1), [-2.0]).partials[0] == -1.0


def test_dual_variable_exponent():
    # d/dx x^x = x^x (log x + 1)
    d = evaluate_dual(parse("x1^x1", 1), [2.0])
    assert d.value == 4.0
    assert d.partials[0] == pytest.approx(4.0 * (math.log(2.0) + 1))


def test_dual_on_arrays():
    e = parse("x1*x2 + 1", 2)
    x = np.linspace(0, 1, 5)
    d = evaluate_dual(e, [x, 2.0])
    assert d.partials.shape == (2, 5)
    np.testing.assert_array_equal(d.partials[0], np.full(5, 2.0))
    np.testing.assert_array_equal(d.partials[1], x)


# -- random expressions -------------------------------------------------------

ARITY = 3


def _literal(v: float):
    # parsing never yields a negative Num, only Neg(Num)
    return Neg(Num(-v)) if v < 0 else Num(abs(v))


def smooth_nodes():
    # every generated expression is smooth on [-1, 1]^3
    leaves = st.one_of(
        st.integers(1, ARITY).map(Coord),
        st.floats(0.1, 3.0).map(lambda v: Num(round(v, 3))),
    )

    def extend(children):
        pos = children.map(lambda c: BinOp("+", Num(2.0), Call("sin", c)))
        return st.one_of(
            st.tuples(st.sampled_from("+-*"), children, children).map(lambda t: BinOp(*t)),
            st.tuples(children, pos).map(lambda t: BinOp("/", *t)),
            children.map(Neg),
            st.tuples(st.sampled_from(["sin", "cos"]), children).map(lambda t: Call(*t)),
            children.map(lambda c: Call("exp", Call("sin", c))),
            pos.map(lambda p: Call("log", p)),
            pos.map(lambda p: Call("sqrt", p)),
            st.tuples(children, st.integers(0, 4)).map(lambda t: BinOp("^", t[0], Num(float(t[1])))),
            st.tuples(pos, st.floats(-2, 2)).map(lambda t: BinOp("^", t[0], _literal(round(t[1], 2)))),
        )

    return st.recursive(leaves, extend, max_leaves=10)


points = st.lists(st.floats(-1, 1), min_size=ARITY, max_size=ARITY)


@settings(max_examples=1000, deadline=None)
@given(smooth_nodes(), points)
def test_dual_matches_central_differences(node, point):
    e = parse(to_source(node), ARITY)
    d = evaluate_dual(e, point)
    h = 1e-6
    for k in range(ARITY):
        up, down = list(point), list(point)
        up[k] += h
        down[k] -= h
        fd = (evaluate(e, up) - evaluate(e, down)) / (2 * h)
        assert abs(d.partials[k] - fd) <= 1e-6 * max(1.0, abs(d.partials[k]))


@settings(max_examples=300, deadline=None)
@given(smooth_nodes(), points)
def test_dual_value_equals_eval_exactly(node, point):
    e = parse(to_source(node), ARITY)
    assert evaluate_dual(e, point).value == evaluate(e, point)


@settings(max_examples=300, deadline=None)
@given(smooth_nodes())
def test_print_parse_idempotent(node):
    e = parse(to_source(node), ARITY)
    assert e.root == node
    assert parse(str(e), ARITY) == e


@settings(max_examples=100, deadline=None)
@given(smooth_nodes(), st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_array_evaluation_matches_scalar(node, xs):
    e = parse(to_source(node), ARITY)
    cols = [np.array(xs), np.array(xs[::-1]), np.full(4, 0.25)]
    batch = evaluate(e, cols)
    dual = evaluate_dual(e, cols)
    for j in range(4):
        p = [xs[j], xs[3 - j], 0.25]
        assert batch[j] == pytest.approx(evaluate(e, p), rel=1e-14, abs=1e-14)
        np.testing.assert_allclose(dual.partials[:, j], evaluate_dual(e, p).partials, rtol=1e-13, atol=1e-13)
