import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from contacthj.diffcore import fd_check
from contacthj.errors import EvaluationError, ExprSyntaxError, UnknownIdentifier
from contacthj.exprdsl import (BinOp, Call, Neg, Num, Param, Var, VariableLayout, compile_source,
                               contact_layout, homogeneous_layout, parse, pretty, substitute)

from _generators import random_polynomial

L1 = contact_layout(1, params={"m": 1.0, "lam": 0.1})


def gas_layout():
    return contact_layout(3, q=("S", "V", "N"), p=("T", "negP", "mu"), z="U", params={"R": 2.0})


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def test_undeclared_name_is_reported():
    with pytest.raises(UnknownIdentifier) as info:
        parse("p1^2/(2*m) + V", L1)
    assert info.value.name == "V"
    assert info.value.column == 14


def test_linear_dissipation_hamiltonian_parses():
    e = parse("p1^2/(2*m) + q1^2/2 + lam*z", L1)
    assert isinstance(e, BinOp) and e.op == "+"
    assert e.right == BinOp("*", Param("lam"), Var("z"))


def test_gas_hamiltonian_parses():
    e = parse("T*S - R*N*T + mu*N - U", gas_layout())
    assert e.right == Var("U")


@pytest.mark.parametrize("source, value", [
    ("-2^2", -4.0),
    ("2^3^2", 512.0),
    ("8/2/2", 2.0),
    ("2-3-4", -5.0),
    ("2*-3", -6.0),
    ("(-2)^2", 4.0),
    ("2^-1", 0.5),
    ("1 + 2*3", 7.0),
])
def test_precedence_and_associativity(source, value):
    f = compile_source(source, L1)
    assert f.value([0.0, 0.0, 0.0]) == value


@pytest.mark.parametrize("source, line, column", [
    ("q1 +", 1, 5),
    ("q1 * * p1", 1, 6),
    ("(q1 + p1", 1, 9),
    ("q1\n + $", 2, 4),
    ("sin q1", 1, 5),
    ("q1 p1", 1, 4),
])
def test_syntax_errors_carry_positions(source, line, column):
    with pytest.raises(ExprSyntaxError) as info:
        parse(source, L1)
    assert (info.value.line, info.value.column) == (line, column)


def test_syntax_error_lists_expected_tokens():
    with pytest.raises(ExprSyntaxError) as info:
        parse("q1 +", L1)
    assert "identifier" in info.value.expected
    assert "(" in info.value.expected


def test_variable_exponent_is_rejected():
    with pytest.raises(ExprSyntaxError):
        parse("q1^p1", L1)
    # parameters are constants, so they may appear in exponents
    assert compile_source("q1^m", L1).value([3.0, 0.0, 0.0]) == 3.0


def test_layout_validation():
    with pytest.raises(ValueError):
        VariableLayout(("x", "x"))
    with pytest.raises(ValueError):
        VariableLayout(("x",), {"x": 1.0})
    with pytest.raises(ValueError):
        VariableLayout(("sin",))
    with pytest.raises(ValueError):
        contact_layout(0)


def test_homogeneous_layout_names():
    lay = homogeneous_layout(2)
    assert lay.names == ("q1", "q2", "z", "P1", "P2", "Pz")


# ---------------------------------------------------------------------------
# round trip
# ---------------------------------------------------------------------------

ROUND_TRIP_LAYOUT = VariableLayout(("x", "y"), {"a": 1.5})

numbers = st.floats(min_value=0, max_value=1e6, allow_nan=False, allow_infinity=False).map(Num)


def constant_exprs():
    leaves = st.one_of(numbers, st.just(Param("a")))
    return st.recursive(leaves, lambda inner: st.one_of(
        inner.map(Neg),
        st.tuples(st.sampled_from("+-*/"), inner, inner).map(lambda t: BinOp(*t)),
    ), max_leaves=4)


def exprs():
    leaves = st.one_of(numbers, st.sampled_from([Var("x"), Var("y"), Param("a")]))

    def extend(inner):
        return st.one_of(
            inner.map(Neg),
            st.tuples(st.sampled_from("+-*/"), inner, inner).map(lambda t: BinOp(*t)),
            st.tuples(inner, constant_exprs()).map(lambda t: BinOp("^", *t)),
            st.tuples(st.sampled_from(["sin", "cos", "exp", "log", "sqrt", "abs", "arcsinh"]),
                      inner).map(lambda t: Call(*t)),
        )

    return st.recursive(leaves, extend, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(exprs())
def test_pretty_then_parse_is_identity(e):
    assert parse(pretty(e), ROUND_TRIP_LAYOUT) == e


def test_pretty_uses_minimal_parentheses():
    e = parse("-q1^2^3 - -(p1 + z) / (2 * z) * sin(q1)", L1)
    assert pretty(e) == "-q1^2^3 - -(p1 + z) / (2 * z) * sin(q1)"
    assert pretty(parse("((q1))*((p1))", L1)) == "q1 * p1"
    assert pretty(parse("q1 - (p1 - z)", L1)) == "q1 - (p1 - z)"
    assert pretty(parse("(q1^2)^3", L1)) == "(q1^2)^3"


def test_substitute_replaces_variables():
    lay = VariableLayout(("c", "V"))
    e = substitute(parse("c^2 + V", lay), {"c": Var("S")})
    assert e == BinOp("+", BinOp("^", Var("S"), Num(2.0)), Var("V"))


# ---------------------------------------------------------------------------
# compiled fields
# ---------------------------------------------------------------------------

def test_zero_field():
    f = compile_source("0", L1)
    v, g = f.value_and_gradient(np.array([[0.3, -1.0, 2.0]]))
    assert v[0] == 0.0 and np.all(g == 0.0)


def test_monomial_field():
    lay = contact_layout(1)
    f = compile_source("q1*p1", lay)
    v, g = f.value_and_gradient(np.array([[2.0, 3.0, 0.0]]))
    assert v[0] == 6.0
    assert g[0].tolist() == [3.0, 2.0, 0.0]


def test_exponential_field():
    f = compile_source("exp(2*q1)", contact_layout(1))
    v, g = f.value_and_gradient(np.array([[0.5, 0.0, 0.0]]))
    assert v[0] == pytest.approx(math.e, rel=1e-15)
    assert g[0, 0] == pytest.approx(2 * math.e, rel=1e-15)
    h = 1e-6
    fd = (f.value([0.5 + h, 0, 0]) - f.value([0.5 - h, 0, 0])) / (2 * h)
    assert g[0, 0] == pytest.approx(fd, rel=1e-8)


def test_parameters_are_folded():
    f = compile_source("p1^2/(2*m) + q1^2/2 + lam*z", L1)
    assert f.value([1.0, 1.0, 1.0]) == pytest.approx(1.1, abs=1e-15)
    assert f.gradient([1.0, 1.0, 1.0]).tolist() == pytest.approx([1.0, 1.0, 0.1], abs=1e-15)
    g = compile_source("p1^2/(2*m) + q1^2/2 + lam*z", L1.with_params(m=2.0))
    assert g.value([1.0, 1.0, 1.0]) == pytest.approx(0.85, abs=1e-15)


@pytest.mark.parametrize("source, x", [
    ("1/q1", [0.0, 0.0, 0.0]),
    ("log(q1)", [0.0, 0.0, 0.0]),
    ("log(q1)", [-1.0, 0.0, 0.0]),
    ("sqrt(q1)", [-1.0, 0.0, 0.0]),
    ("q1^0.5", [-1.0, 0.0, 0.0]),
    ("q1^-1", [0.0, 0.0, 0.0]),
    ("1/(p1 - p1)", [0.0, 2.0, 0.0]),
])
def test_poles_raise(source, x):
    f = compile_source(source, contact_layout(1))
    with pytest.raises(EvaluationError):
        f.value(x)
    with pytest.raises(EvaluationError):
        f.value_and_gradient(np.array([x]))


def test_constant_pole_compiles_but_fails_on_evaluation():
    f = compile_source("q1 + 1/0", contact_layout(1))
    with pytest.raises(EvaluationError):
        f.value([1.0, 0.0, 0.0])


def test_kernel_and_generic_evaluation_agree():
    rng = np.random.default_rng(7)
    lay = contact_layout(2)
    src = "sin(q1)*exp(p2/3) + sqrt(1 + q2^2)*log(2 + cos(z)) - arcsinh(p1*q2)/(3 + abs(z))"
    f = compile_source(src, lay)
    X = rng.uniform(-2, 2, size=(40, 5))
    vk, gk = f.value_and_gradient(X)
    generic = [f(*x) for x in X]
    assert np.allclose(vk, generic, rtol=1e-14, atol=1e-14)
    from contacthj.diffcore import FunctionField
    g = FunctionField(lambda *a: f(*a), 5)
    vg, gg = g.value_and_gradient(X)
    assert np.allclose(gk, gg, rtol=1e-13, atol=1e-13)


# ---------------------------------------------------------------------------
# derivative invariant: autodiff against central differences
# ---------------------------------------------------------------------------

FD_SOURCES = [
    "p1^2/(2*m) + q1^2/2 + lam*z",
    "sin(q1*p1) + cos(z)^3",
    "exp(q1/3)*arcsinh(p1) - z^4/7",
    "sqrt(5 + q1^2 + p1^2) * log(6 + z)",
    "(q1 - p1)/(3 + z^2) + abs(q1 + 3)",
    "(q1^2 + 1)^1.5 + (p1^2 + 1)^-0.5",
]


@pytest.mark.parametrize("source", FD_SOURCES)
def test_autodiff_matches_finite_differences(source):
    f = compile_source(source, L1)
    report = fd_check(f, [(-2, 2)] * 3, samples=100, h=1e-6, tol=1e-6, seed=1)
    assert report.passed, report.failures[:3]


def test_autodiff_matches_finite_differences_on_random_polynomials():
    rng = np.random.default_rng(11)
    lay = contact_layout(2)
    for _ in range(20):
        f = compile_source(random_polynomial(rng, lay.names, degree=4, terms=8), lay)
        report = fd_check(f, [(-2, 2)] * 5, samples=100, h=1e-6, tol=1e-6, seed=2)
        assert report.passed
