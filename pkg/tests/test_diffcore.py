import math

import numpy as np
import pytest

from contacthj import diffcore as dc
from contacthj.diffcore import (ConstantField, Dual, FunctionField, VectorField, fd_check, gradient,
                                jacobian, jacobian_batch, new_tag)
from contacthj.errors import EvaluationError
from contacthj.exprdsl import compile_source, contact_layout


def derivative(f, x):
    t = new_tag()
    return dc.derivative_of(f(Dual(x, 1.0, t)), t)


def test_dual_arithmetic():
    t = new_tag()
    x = Dual(3.0, 1.0, t)
    r = (x * x - 2 * x + 1) / x
    assert r.val == pytest.approx(4.0 / 3.0)
    assert r.der == pytest.approx(1 - 1 / 9)
    assert (2 - x).der == -1.0
    assert (x ** 3).der == 27.0


@pytest.mark.parametrize("fn, df, x", [
    (dc.sin, math.cos, 0.7),
    (dc.cos, lambda v: -math.sin(v), 0.7),
    (dc.exp, math.exp, 0.3),
    (dc.log, lambda v: 1 / v, 2.5),
    (dc.sqrt, lambda v: 0.5 / math.sqrt(v), 2.5),
    (dc.fabs, lambda v: -1.0, -2.0),
    (dc.arcsinh, lambda v: 1 / math.sqrt(1 + v * v), 0.4),
])
def test_elementary_derivatives(fn, df, x):
    assert derivative(fn, x) == pytest.approx(df(x), rel=1e-14)


def test_no_perturbation_confusion():
    # d/dx [ x * d/dy (x + y) ] at y = 0 is 1 (a single shared epsilon gives 2)
    def inner(x):
        return derivative(lambda y: x + y, 0.0)

    assert derivative(lambda x: x * inner(x), 1.0) == 1.0


def test_nested_second_derivative():
    f = compile_source("q1^3*p1 + sin(z)", contact_layout(1))
    fqq = f.partial(0).partial(0)
    fzz = f.partial(2).partial(2)
    fqp = f.partial(0).partial(1)
    x = [1.5, -2.0, 0.3]
    assert fqq.value(x) == pytest.approx(6 * 1.5 * -2.0)
    assert fzz.value(x) == pytest.approx(-math.sin(0.3))
    assert fqp.value(x) == pytest.approx(3 * 1.5 ** 2)


def test_batched_duals():
    f = FunctionField(lambda a, b: a * dc.exp(b), 2)
    X = np.array([[1.0, 0.0], [2.0, 1.0], [-1.0, 2.0]])
    v, g = f.value_and_gradient(X)
    assert np.allclose(v, X[:, 0] * np.exp(X[:, 1]))
    assert np.allclose(g[:, 0], np.exp(X[:, 1]))
    assert np.allclose(g[:, 1], X[:, 0] * np.exp(X[:, 1]))


def test_poles_in_generic_arithmetic():
    with pytest.raises(EvaluationError):
        dc.div(1.0, 0.0)
    with pytest.raises(EvaluationError):
        dc.log(Dual(0.0, 1.0, new_tag()))
    with pytest.raises(EvaluationError):
        dc.sqrt(Dual(0.0, 1.0, new_tag()))  # derivative is infinite
    with pytest.raises(EvaluationError):
        dc.power(Dual(0.0, 1.0, new_tag()), 0.5)
    assert dc.sqrt(0.0) == 0.0


def test_constant_field():
    c = ConstantField(2.5, 3)
    v, g = c.value_and_gradient(np.zeros((4, 3)))
    assert np.all(v == 2.5) and np.all(g == 0)


def test_field_arithmetic():
    lay = contact_layout(1)
    f = compile_source("q1*p1", lay)
    g = compile_source("z^2", lay)
    h = f * g + f - 3
    x = [2.0, 3.0, 0.5]
    assert h.value(x) == pytest.approx(6 * 0.25 + 6 - 3)
    assert gradient(h, x) == pytest.approx([3 * 1.25, 2 * 1.25, 6.0])
    assert (-f).value(x) == -6.0


def test_jacobians():
    lay = contact_layout(1)
    comps = [compile_source(s, lay) for s in ("q1*p1", "z - q1", "exp(p1)")]
    x = np.array([1.0, 0.0, 2.0])
    J = jacobian(comps, x)
    assert np.allclose(J, [[0, 1, 0], [-1, 0, 1], [0, 1, 0]])
    V, JB = jacobian_batch(comps, np.array([x, x + 1]))
    assert V.shape == (2, 3) and JB.shape == (2, 3, 3)
    assert np.allclose(JB[0], J)
    vf = VectorField(comps)
    assert np.allclose(vf.jacobian(x), J)
    assert np.allclose(vf.evaluate(x), [0.0, 1.0, 1.0])


def test_fd_check_reports_a_wrong_derivative():
    class Liar(dc.ScalarField):
        dim = 1

        def __call__(self, x):
            return x * x

        def value_and_gradient(self, X):
            X = np.atleast_2d(X)
            return X[:, 0] ** 2, 3 * X  # wrong: should be 2x

    rep = fd_check(Liar(), [(0.5, 2.0)], samples=10)
    assert not rep.passed
    assert rep.failures
    assert fd_check(compile_source("q1^2", contact_layout(1)), [(-1, 1)] * 3).passed
