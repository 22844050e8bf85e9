from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gforms.exprs import (
    Add,
    CoefficientFn,
    EvalError,
    ExprSyntaxError,
    Func,
    Mul,
    diff,
    evaluate,
    fd_gradient,
    flatten_value,
    is_polynomial,
    node_count,
    parse,
    substitute,
    variables,
)
from gforms.value_space import COMPLEX, REAL, ValueSpace

C1 = ValueSpace("C", COMPLEX, 1)
R2 = ValueSpace("R2", REAL, 2)


def test_parse_builds_sum_of_product_and_sine():
    e = parse("x1*x2 + sin(x1)", 2)
    assert isinstance(e, Add)
    assert {type(c) for c in e.children()} == {Mul, Func}
    assert evaluate(e, [0.0, 5.0]) == 0.0


@pytest.mark.parametrize(
    "text, fragment, offset",
    [
        ("x3", "out of range", 0),
        ("x1+", "unexpected", 3),
        ("foo(x1)", "unknown identifier", 0),
        ("bump(0;0;x1)", "radius must be positive", 0),
        ("x1^-1", "nonnegative integer", 3),
    ],
)
def test_parse_errors_report_offsets(text, fragment, offset):
    with pytest.raises(ExprSyntaxError, match=fragment) as info:
        parse(text, 2)
    assert info.value.offset == offset


def test_integer_power():
    assert evaluate(parse("(x1+1)^3", 1), [1.0]) == 8.0


def test_bump_centre_and_boundary():
    b = parse("bump(1; 0, 0)", 2)
    assert evaluate(b, [0.0, 0.0]) == 1.0
    assert evaluate(b, [1.0, 0.0]) == 0.0
    assert evaluate(b, [3.0, -2.0]) == 0.0


def test_bump_with_argument_group():
    b = parse("bump(1.5; 2; sqrt(x1^2 + x2^2))", 2)
    assert evaluate(b, [2.0, 0.0]) == 1.0
    assert evaluate(b, [0.0, 0.0]) == 0.0


def test_division_by_zero_names_subexpression():
    with pytest.raises(EvalError, match="1/"):
        evaluate(parse("1/(x1 - 1)", 1), [1.0])
    assert math.isinf(evaluate(parse("1/(x1 - 1)", 1), [1.0], strict=False))


def test_vectorized_evaluation_matches_pointwise():
    e = parse("exp(x1)*cos(x2) - x1^2/(1 + x2^2)", 2)
    X = np.random.default_rng(0).uniform(-1, 1, (2, 20))
    many = evaluate(e, X)
    single = [evaluate(e, X[:, k]) for k in range(20)]
    np.testing.assert_allclose(many, single, rtol=0, atol=0)


def test_textbook_derivative():
    assert str(diff(parse("x1*x2 + sin(x1)", 2), 1)) == "x2 + cos(x1)"


def test_derivative_of_constant_is_zero():
    d = diff(parse("3.5", 2), 2)
    assert str(d) == "0"


def test_bump_derivative_matches_closed_form_and_fd():
    b = parse("bump(1; 0, 0)", 2)
    d1 = diff(b, 1)
    p = np.array([0.5, 0.0])
    # d/dx1 exp(1 - 1/(1 - |x|^2)) = -2 x1 / (1 - |x|^2)^2 * bump
    exact = -2 * 0.5 / 0.75**2 * math.exp(1 - 1 / 0.75)
    assert evaluate(d1, p) == pytest.approx(exact, abs=1e-14)
    assert abs(fd_gradient(b, p, 1e-5)[0] - evaluate(d1, p)) <= 1e-6
    # derivatives vanish outside the ball
    assert evaluate(d1, [1.2, 0.0]) == 0.0


def test_fd_gradient_examples():
    lin = parse("3*x1 - 2*x2 + 1", 2)
    for h in (1e-1, 1e-3, 1e-6):
        np.testing.assert_allclose(fd_gradient(lin, [0.3, -0.7], h), [3.0, -2.0], atol=1e-9)
    assert fd_gradient(parse("x1^2", 1), [3.0], 1e-4)[0] == pytest.approx(6.0, abs=1e-7)
    np.testing.assert_array_equal(fd_gradient(parse("2", 2), [1.0, 1.0]), [0.0, 0.0])
    with pytest.raises(ValueError):
        fd_gradient(lin, [0.0, 0.0], 0.0)


CORPUS = [
    "x1*x2 + sin(x1)",
    "exp(x1*x2)*cos(x3)",
    "(x1 - x2)^4/(2 + x3^2)",
    "bump(1.2; 0, 0, 0)*(1 + x1*x3)",
    "sqrt(1 + x1^2 + x2^2)",
    "atan2(x2, 2 + x1)",
    "sin(x1 + 2*x2 - x3)^2",
]


@pytest.mark.parametrize("text", CORPUS)
def test_symbolic_gradient_matches_finite_differences(text):
    e = parse(text, 3)
    P = np.random.default_rng(1).uniform(-0.8, 0.8, (3, 100))
    for i in range(3):
        sym = evaluate(diff(e, i + 1), P)
        fd = np.array([fd_gradient(e, P[:, k], 1e-5)[i] for k in range(P.shape[1])])
        assert np.all(np.abs(sym - fd) <= 1e-5 * (1 + np.abs(sym)))


@pytest.mark.parametrize("text", CORPUS)
def test_mixed_partials_commute(text):
    e = parse(text, 3)
    P = np.random.default_rng(2).uniform(-0.8, 0.8, (3, 50))
    for i in range(1, 4):
        for j in range(i + 1, 4):
            a = evaluate(diff(diff(e, i), j), P)
            b = evaluate(diff(diff(e, j), i), P)
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.2, 2.0))
def test_bump_is_bounded_and_vanishes_off_ball(x, y, r):
    b = parse(f"bump({r!r}; 0.5, -0.5)", 2)
    v = evaluate(b, [x, y])
    assert 0.0 <= v <= 1.0
    if (x - 0.5) ** 2 + (y + 0.5) ** 2 >= r * r:
        assert v == 0.0


def test_substitution_composes():
    e = parse("x1^2 + x2", 2)
    comp = substitute(e, [parse("x1 + x2", 2), parse("x1*x2", 2)])
    assert evaluate(comp, [1.0, 2.0]) == pytest.approx(9.0 + 2.0)
    same = substitute(e, variables(2))
    assert evaluate(same, [0.3, 0.4]) == evaluate(e, [0.3, 0.4])


def test_shared_subtrees_stay_small():
    e = parse("x1", 1)
    for _ in range(40):
        e = Add(e, e)
    assert node_count(e) == 41
    assert evaluate(e, [1.0]) == 2.0**40


def test_polynomial_detection():
    assert is_polynomial(parse("x1^3 - 2*x1*x2 + 1", 2))
    assert not is_polynomial(parse("x1/2", 2))
    assert not is_polynomial(parse("bump(1; 0, 0)", 2))


def test_coefficient_shapes_and_support_probe():
    f = CoefficientFn(C1, tuple(parse(t, 2) for t in flatten_value([["x1", "x2"]], C1)), 2)
    np.testing.assert_allclose(f.evaluate(np.array([[1.0], [2.0]])).ravel(), [1 + 2j])
    with pytest.raises(ValueError):
        CoefficientFn(R2, (parse("x1", 2),), 2)
    with pytest.raises(ValueError):
        CoefficientFn.scalar(parse("x1*x3", 3), 2)
    g = CoefficientFn(
        ValueSpace("R", REAL, 1), (parse("bump(0.5; 0, 0)", 2),), 2, ((-0.5, 0.5), (-0.5, 0.5))
    )
    assert g.check_support(np.random.default_rng(0)) == 0.0
    leaky = CoefficientFn(ValueSpace("R", REAL, 1), (parse("bump(1; 0, 0)", 2),), 2, ((-0.5, 0.5), (-0.5, 0.5)))
    assert leaky.check_support(np.random.default_rng(0)) > 0.0
