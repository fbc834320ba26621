import math

import numpy as np
import pytest

from nullkit import expressions as ex
from nullkit.errors import DomainEvalError, ParseError

CORPUS = [
    "1", "-1", "2.5e-3", "x", "pi", "e", "x + y", "x - y - z", "x*y/z",
    "x^2", "x^y^z", "-x^2", "2^-3", "(x + 1)*(x - 1)", "-(x + y)",
    "sin(x)", "cos(x)", "tan(x)", "sinh(x)", "cosh(t)", "tanh(s/2)",
    "asin(x)", "acos(x)", "atan(tanh(s/2))", "asinh(x)", "acosh(x)",
    "atanh(tan(s/2))", "exp(-t^2)", "ln(r)", "sqrt(1 - x^2)", "abs(x)",
    "min(x, y)", "max(x, 1)", "1 - m^2/r + c^2/r^2", "1 - m^2/r + k*r^2",
    "2*atan(tanh(s/2))", "2*atanh(tan(s/2))", "cos(s + theta)/cos(theta)",
    "exp(s) + z1^2 + z2^2", "sin(s + delta)/sin(delta)", "(s + delta)/delta",
    "1/(x - 1) + x/(1 + x^2)", "x/y/z", "x - (y - z)", "x^(y + 1)",
    "sqrt(x^2 + y^2 + z^2)", "cosh(t)^2 - sinh(t)^2", "1 - cos(t)",
]


@pytest.mark.parametrize("text", CORPUS)
def test_roundtrip_identity(text):
    ast = ex.parse(text)
    assert ex.parse(ex.to_text(ast)) == ast


def test_roundtrip_on_random_asts():
    rng = np.random.default_rng(7)
    # stay in the grammar's image: negative literals parse as Neg(Num)
    leaves = [ex.Num(1.5), ex.Num(2.0), ex.Var("x"), ex.Var("y"), ex.Const("pi")]

    def build(depth):
        if depth == 0:
            return leaves[rng.integers(len(leaves))]
        choice = rng.integers(4)
        if choice == 0:
            return ex.Neg(build(depth - 1))
        if choice == 1:
            op = "+-*/^"[rng.integers(5)]
            return ex.Bin(op, build(depth - 1), build(depth - 1))
        if choice == 2:
            fn = ["sin", "exp", "sqrt", "tanh"][rng.integers(4)]
            return ex.Call(fn, (build(depth - 1),))
        return ex.Call("max", (build(depth - 1), build(depth - 1)))

    for _ in range(200):
        ast = build(int(rng.integers(1, 5)))
        assert ex.parse(ex.to_text(ast)) == ast


def test_precedence_and_associativity():
    assert ex.evaluate(ex.parse("2 + 3*4"), {}) == 14
    assert ex.evaluate(ex.parse("2*3^2"), {}) == 18
    assert ex.evaluate(ex.parse("2^3^2"), {}) == 512  # right associative
    assert ex.evaluate(ex.parse("-2^2"), {}) == -4
    assert ex.evaluate(ex.parse("2^-1"), {}) == 0.5
    assert ex.evaluate(ex.parse("1 - 2 - 3"), {}) == -4
    assert ex.evaluate(ex.parse("8/4/2"), {}) == 1


def test_eval_constants_and_functions():
    assert ex.evaluate(ex.parse("cos(pi)"), {}) == pytest.approx(-1.0)
    assert ex.evaluate(ex.parse("ln(e)"), {}) == pytest.approx(1.0)
    assert ex.evaluate(ex.parse("min(3, 2)"), {}) == 2
    assert ex.evaluate(ex.parse("max(3, 2)"), {}) == 3
    assert ex.evaluate(ex.parse("cosh(t)"), {"t": 0.7}) == pytest.approx(math.cosh(0.7))


def test_parse_errors_carry_position():
    with pytest.raises(ParseError) as err:
        ex.parse("1 + * 2")
    assert err.value.position == 4
    with pytest.raises(ParseError) as err:
        ex.parse("sin(x")
    assert err.value.expected == (")",)
    with pytest.raises(ParseError):
        ex.parse("foo(x)")  # unknown function
    with pytest.raises(ParseError):
        ex.parse("min(x)")  # arity
    with pytest.raises(ParseError):
        ex.parse("1 2")


def test_domain_errors():
    with pytest.raises(DomainEvalError):
        ex.evaluate(ex.parse("ln(x)"), {"x": -1.0})
    with pytest.raises(DomainEvalError):
        ex.evaluate(ex.parse("1/x"), {"x": 0.0})
    with pytest.raises(DomainEvalError):
        ex.evaluate(ex.parse("y + 1"), {"x": 0.0})


def _fd(text, var, x0, env, h=1e-6):
    lo, hi = dict(env), dict(env)
    lo[var] = x0 - h
    hi[var] = x0 + h
    ast = ex.parse(text)
    return (ex.evaluate(ast, hi) - ex.evaluate(ast, lo)) / (2 * h)


DERIV_CASES = [
    ("cosh(t)", "t", 0.7, {}),
    ("sinh(t)", "t", -0.3, {}),
    ("2*atan(tanh(s/2))", "s", 0.9, {}),
    ("2*atanh(tan(s/2))", "s", 0.4, {}),
    ("1 - 1/r + 0.25/r^2", "r", 3.0, {}),
    ("exp(-t^2)*sin(t)", "t", 1.1, {}),
    ("x^x", "x", 1.5, {}),
    ("sqrt(1 + u^2)", "u", 0.8, {}),
    ("ln(cosh(t))", "t", 0.6, {}),
    ("abs(x)", "x", -2.0, {}),
    ("acos(x)", "x", 0.3, {}),
    ("asinh(x)", "x", 0.9, {}),
]


@pytest.mark.parametrize("text,var,x0,env", DERIV_CASES)
def test_analytic_derivative_matches_finite_difference(text, var, x0, env):
    d = ex.derivative(ex.parse(text), var)
    got = ex.evaluate(d, {**env, var: x0})
    want = _fd(text, var, x0, env)
    assert got == pytest.approx(want, rel=1e-7, abs=1e-8)


def test_third_derivative():
    # h(r) = 1 - m^2/r has h''' = 6 m^2 / r^4 (nonvanishing on the exterior)
    ast = ex.bind(ex.parse("1 - m^2/r"), {"m": 1.0})
    d3 = ex.derivative(ast, "r", order=3)
    assert ex.evaluate(d3, {"r": 2.0}) == pytest.approx(6.0 / 16.0)
    # cosh recovers sinh at third order
    d3 = ex.derivative(ex.parse("cosh(t)"), "t", order=3)
    assert ex.evaluate(d3, {"t": 0.5}) == pytest.approx(math.sinh(0.5))


def test_specific_derivative_form():
    d = ex.derivative(ex.parse("cosh(t)"), "t")
    assert ex.to_text(d) == "sinh(t)"


def test_bind_substitutes_parameters():
    ast = ex.parse("1 - m^2/r + c^2/r^2")
    bound = ex.bind(ast, {"m": 1.0, "c": 0.5})
    assert ex.variables(bound) == {"r"}
    assert ex.evaluate(bound, {"r": 2.0}) == pytest.approx(1 - 0.5 + 0.25 / 4)


def test_min_max_not_differentiable():
    with pytest.raises(DomainEvalError):
        ex.derivative(ex.parse("min(x, 1)"), "x")


def test_vectorized_evaluation():
    ast = ex.parse("sin(x)^2 + cos(x)^2")
    x = np.linspace(0, 3, 7)
    np.testing.assert_allclose(ex.evaluate(ast, {"x": x}), np.ones(7))
