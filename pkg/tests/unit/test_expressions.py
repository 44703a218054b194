import math

import numpy as np
import pytest

from dedem.errors import ExpressionEvaluationError, ExpressionSyntaxError
from dedem.expressions import (
    BinaryOp,
    Constant,
    Variable,
    eval_expression,
    evaluate_many,
    parse_expression,
    sgn,
    to_text,
)


def test_variable_evaluates_to_coordinate():
    ast = parse_expression("x1")

    assert ast == Variable(name="x1")
    assert eval_expression(ast, (0.3, 0.7))[0] == 0.3


def test_symmetric_half_plate_factor():
    ast = parse_expression("(x2 + 1) / 2")

    assert eval_expression(ast, (0.0, -1.0))[0] == 0.0
    assert eval_expression(ast, (0.0, 1.0))[0] == 1.0


def test_power_is_right_associative():
    assert eval_expression(parse_expression("2^3^2"), (0.0, 0.0))[0] == 512.0


@pytest.mark.parametrize(
    "text, expected",
    [
        ("1 + 2 * 3", 7.0),
        ("(1 + 2) * 3", 9.0),
        ("-2^2", -4.0),
        ("8 / 4 / 2", 1.0),
        ("10 - 4 - 3", 3.0),
        ("min(1, 2) + max(1, 2)", 3.0),
        ("2 * pi", 2 * math.pi),
    ],
)
def test_precedence(text, expected):
    assert eval_expression(parse_expression(text), (0.0, 0.0))[0] == pytest.approx(expected)


def test_product_rule_gradient():
    value, gradient = eval_expression(parse_expression("x1*x2"), (2.0, 3.0))

    assert value == 6.0
    np.testing.assert_allclose(gradient, [3.0, 2.0])


def test_quadratic_constraint_factor():
    value, gradient = eval_expression(parse_expression("(x1+1)*(x1-1)/4"), (0.0, 0.0))

    assert value == -0.25
    np.testing.assert_allclose(gradient, [0.0, 0.0], atol=0)


def test_abs_uses_negative_sign_at_zero():
    value, gradient = eval_expression(parse_expression("abs(x2)"), (0.5, 0.0))

    assert value == 0.0
    np.testing.assert_array_equal(gradient, [0.0, -1.0])


def test_sgn_of_zero_is_minus_one():
    np.testing.assert_array_equal(sgn(np.array([-2.0, 0.0, 3.0])), [-1.0, -1.0, 1.0])


@pytest.mark.parametrize(
    "text",
    [
        "sin(x1) * cos(x2) + tanh(x1 * x2)",
        "sqrt(x1^2 + x2^2 + 1)",
        "abs(x1 - 0.3) + relu(x2 - 0.1)",
        "x1^3 / (1 + x2^2)",
        "max(x1, x2) - min(x1, 2 * x2)",
    ],
)
def test_gradient_matches_central_differences(text):
    ast = parse_expression(text)
    rng = np.random.default_rng(3)
    for point in rng.uniform(-1.0, 1.0, size=(10, 2)):
        if abs(point[0] - 0.3) < 1e-3 or abs(point[1] - 0.1) < 1e-3:
            continue
        if abs(point[0] - point[1]) < 1e-3 or abs(point[0] - 2 * point[1]) < 1e-3:
            continue
        _, gradient = eval_expression(ast, tuple(point))
        for axis in range(2):
            h = 1e-6 * (1 + abs(point[axis]))
            plus, minus = point.copy(), point.copy()
            plus[axis] += h
            minus[axis] -= h
            estimate = (
                eval_expression(ast, tuple(plus))[0] - eval_expression(ast, tuple(minus))[0]
            ) / (2 * h)
            assert gradient[axis] == pytest.approx(estimate, rel=1e-6, abs=1e-8)


@pytest.mark.parametrize(
    "text",
    ["x1 + 2 * x2", "-(x1 - 1) ^ 2", "sin(cos(x1)) / (2 + x2)", "max(x1, sgn(x2))", "2^3^2"],
)
def test_printer_round_trip(text):
    ast = parse_expression(text)

    assert parse_expression(to_text(ast)) == ast


def test_constant_round_trip_is_exact():
    ast = BinaryOp(op="+", left=Constant(value=0.1), right=Variable(name="x2"))

    assert parse_expression(to_text(ast)) == ast


@pytest.mark.parametrize(
    "text, message",
    [
        ("", "empty expression"),
        ("(x1 + 1", "unbalanced parentheses"),
        ("x1 + 1)", "unbalanced parentheses"),
        ("foo(x1)", "unknown identifier 'foo'"),
        ("x3", "unknown identifier 'x3'"),
        ("min(x1)", "min takes 2 argument(s)"),
        ("x1 $ 2", "unexpected character '$'"),
    ],
)
def test_syntax_errors(text, message):
    with pytest.raises(ExpressionSyntaxError) as exc_info:
        parse_expression(text)

    assert message in str(exc_info.value)


def test_division_by_zero_names_the_node():
    with pytest.raises(ExpressionEvaluationError) as exc_info:
        eval_expression(parse_expression("1 / x1"), (0.0, 0.5))

    assert "division by zero in (1.0 / x1)" in str(exc_info.value)


def test_sqrt_of_negative_raises():
    with pytest.raises(ExpressionEvaluationError):
        eval_expression(parse_expression("sqrt(x1)"), (-1.0, 0.0))


def test_evaluate_many_on_batches():
    values, gradients = evaluate_many(parse_expression("3"), [[0, 0], [1, 2], [4, 5]])

    np.testing.assert_array_equal(values, [3.0, 3.0, 3.0])
    assert gradients.shape == (3, 2)
    assert not gradients.any()
