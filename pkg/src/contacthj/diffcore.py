"""Forward-mode differentiation of scalar fields.

Two routes produce derivatives:

* compiled expression fields (:class:`TapeField`) run a flat instruction
  tape through the batch kernels in :mod:`contacthj._kernels`, which carry a
  full gradient per slot;
* every field can also be called generically with :class:`Dual` arguments.
  Duals carry a perturbation tag, so they nest cleanly and give mixed second
  derivatives by differentiating a derivative field.

:func:`fd_check` compares either route against central differences.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .errors import EvaluationError

_tags = itertools.count(1)


def new_tag() -> int:
    return next(_tags)


class Dual:
    """Truncated Taylor number ``val + der * eps`` for one perturbation tag.

    ``val`` and ``der`` may be floats, numpy arrays (a batch of points), or
    Duals with a smaller tag.  Mixing tags never confuses perturbations: an
    operand that does not carry the leading tag is a constant for it.
    """

    __slots__ = ("val", "der", "tag")
    __array_ufunc__ = None  # keep numpy from broadcasting over Dual objects

    def __init__(self, val, der, tag: int):
        self.val = val
        self.der = der
        self.tag = tag

    def __repr__(self):
        return f"Dual({self.val!r}, {self.der!r}, tag={self.tag})"

    def __neg__(self):
        return Dual(-self.val, -self.der, self.tag)

    def __pos__(self):
        return self

    def __add__(self, other):
        t = _lead(self, other)
        a, da = _split(self, t)
        b, db = _split(other, t)
        if da is None:
            return Dual(a + b, db, t)
        if db is None:
            return Dual(a + b, da, t)
        return Dual(a + b, da + db, t)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        t = _lead(self, other)
        a, da = _split(self, t)
        b, db = _split(other, t)
        if da is None:
            return Dual(a * b, a * db, t)
        if db is None:
            return Dual(a * b, da * b, t)
        return Dual(a * b, da * b + a * db, t)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __pow__(self, exponent):
        if isinstance(exponent, Dual):
            raise TypeError("variable exponents are not supported")
        return power(self, exponent)


def _lead(a, b) -> int:
    ta = a.tag if isinstance(a, Dual) else 0
    tb = b.tag if isinstance(b, Dual) else 0
    return ta if ta > tb else tb


def _split(x, tag):
    if isinstance(x, Dual) and x.tag == tag:
        return x.val, x.der
    return x, None


def primal(x):
    """Innermost real value (float or array) of a possibly nested Dual."""
    while isinstance(x, Dual):
        x = x.val
    return x


def _lift(x, f, df):
    # f applied to x; df(v) is the derivative evaluated at the value part
    if isinstance(x, Dual):
        return Dual(f(x.val), df(x.val) * x.der, x.tag)
    return f(x)


def div(a, b):
    bp = primal(b)
    if np.any(np.asarray(bp) == 0):
        raise EvaluationError("division by zero")
    if not isinstance(a, Dual) and not isinstance(b, Dual):
        return a / b
    t = _lead(a, b)
    av, da = _split(a, t)
    bv, db = _split(b, t)
    q = div(av, bv)
    if db is None:
        return Dual(q, div(da, bv), t)
    if da is None:
        return Dual(q, div(-(q * db), bv), t)
    return Dual(q, div(da - q * db, bv), t)


def power(x, c: float):
    """``x ** c`` for a constant real exponent ``c``."""
    c = float(c)
    if c == 0.0:
        return 1.0 if not isinstance(x, Dual) else Dual(power(x.val, 0.0), 0.0 * x.der, x.tag)
    xp = np.asarray(primal(x))
    integral = c.is_integer()
    if c < 0 and np.any(xp == 0):
        raise EvaluationError("zero raised to a negative power")
    if not integral and np.any(xp < 0):
        raise EvaluationError("negative base with non-integer exponent")
    if isinstance(x, Dual):
        if c < 1 and np.any(xp == 0):
            raise EvaluationError("derivative of x^c is singular at 0")
        return Dual(power(x.val, c), c * power(x.val, c - 1.0) * x.der, x.tag)
    if integral and abs(c) <= 64:
        return np.power(x, int(c)) if c > 0 else 1.0 / np.power(x, -int(c))
    return np.power(x, c)


def sin(x):
    return _lift(x, sin, cos) if isinstance(x, Dual) else np.sin(x)


def cos(x):
    return _lift(x, cos, lambda v: -sin(v)) if isinstance(x, Dual) else np.cos(x)


def exp(x):
    return _lift(x, exp, exp) if isinstance(x, Dual) else np.exp(x)


def log(x):
    if np.any(np.asarray(primal(x)) <= 0):
        raise EvaluationError("log of a non-positive number")
    return _lift(x, log, lambda v: div(1.0, v)) if isinstance(x, Dual) else np.log(x)


def sqrt(x):
    xp = np.asarray(primal(x))
    if np.any(xp < 0):
        raise EvaluationError("sqrt of a negative number")
    if isinstance(x, Dual):
        if np.any(xp == 0):
            raise EvaluationError("derivative of sqrt is singular at 0")
        return _lift(x, sqrt, lambda v: div(0.5, sqrt(v)))
    return np.sqrt(x)


def fabs(x):
    if isinstance(x, Dual):
        s = np.sign(primal(x.val))
        return Dual(fabs(x.val), s * x.der, x.tag)
    return np.abs(x)


def arcsinh(x):
    if isinstance(x, Dual):
        return _lift(x, arcsinh, lambda v: div(1.0, sqrt(1.0 + v * v)))
    return np.arcsinh(x)


FUNCTIONS: dict[str, Callable] = {
    "sin": sin,
    "cos": cos,
    "exp": exp,
    "log": log,
    "sqrt": sqrt,
    "abs": fabs,
    "arcsinh": arcsinh,
}


def derivative_of(result, tag, like=0.0):
    """Extract the ``tag`` derivative of a generic evaluation result."""
    if isinstance(result, Dual) and result.tag == tag:
        return result.der
    return 0.0 * primal(like) if not isinstance(like, Dual) else 0.0


def value_of(result, tag):
    if isinstance(result, Dual) and result.tag == tag:
        return result.val
    return result


def _finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise EvaluationError(f"non-finite {what}")
    return arr


class ScalarField:
    """Real function of ``dim`` real inputs.

    Subclasses implement :meth:`__call__` in generic arithmetic: arguments may
    be floats, equally-shaped arrays, or :class:`Dual` numbers.
    """

    dim: int
    names: tuple[str, ...] | None = None

    def __call__(self, *args):
        raise NotImplementedError

    def _check_args(self, n):
        if n != self.dim:
            raise ValueError(f"field expects {self.dim} inputs, got {n}")

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        self._check_args(x.shape[0])
        return float(_finite(np.asarray(primal(self(*x)), dtype=float), "value"))

    def values(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self._check_args(X.shape[1])
        out = np.broadcast_to(np.asarray(self(*X.T), dtype=float), (X.shape[0],))
        return _finite(out.copy(), "value")

    def gradient(self, x) -> np.ndarray:
        _, g = self.value_and_gradient(np.atleast_2d(np.asarray(x, dtype=float)))
        return g[0]

    def value_and_gradient(self, X):
        """Values ``(m,)`` and gradients ``(m, dim)`` at the rows of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        m = X.shape[0]
        self._check_args(X.shape[1])
        cols = list(X.T)
        vals = None
        grads = np.zeros((m, self.dim))
        for i in range(self.dim):
            t = new_tag()
            args = cols.copy()
            args[i] = Dual(cols[i], np.ones(m), t)
            r = self(*args)
            if vals is None:
                vals = np.broadcast_to(np.asarray(value_of(r, t), dtype=float), (m,)).copy()
            if isinstance(r, Dual) and r.tag == t:
                grads[:, i] = r.der
        if vals is None:
            vals = self.values(X)
        return _finite(vals, "value"), _finite(grads, "gradient")

    def partial(self, i: int) -> "ScalarField":
        return PartialField(self, i)

    # arithmetic on fields produces FunctionFields
    def _combine(self, other, op):
        if isinstance(other, ScalarField):
            if other.dim != self.dim:
                raise ValueError("dimension mismatch")
            return FunctionField(lambda *a: op(self(*a), other(*a)), self.dim, self.names)
        return FunctionField(lambda *a: op(self(*a), other), self.dim, self.names)

    def __add__(self, other):
        return self._combine(other, lambda a, b: a + b)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, lambda a, b: a - b)

    def __mul__(self, other):
        return self._combine(other, lambda a, b: a * b)

    __rmul__ = __mul__

    def __neg__(self):
        return FunctionField(lambda *a: -self(*a), self.dim, self.names)


class FunctionField(ScalarField):
    """Field backed by a Python callable written in generic arithmetic."""

    def __init__(self, fn: Callable, dim: int, names=None):
        self.fn = fn
        self.dim = dim
        self.names = tuple(names) if names is not None else None

    def __call__(self, *args):
        return self.fn(*args)


class ConstantField(ScalarField):
    def __init__(self, c: float, dim: int, names=None):
        self.c = float(c)
        self.dim = dim
        self.names = tuple(names) if names is not None else None

    def __call__(self, *args):
        return self.c

    def value_and_gradient(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.full(X.shape[0], self.c), np.zeros((X.shape[0], self.dim))


class PartialField(ScalarField):
    """``∂f/∂x_i`` as a field in its own right (differentiable again)."""

    def __init__(self, parent: ScalarField, index: int):
        if not 0 <= index < parent.dim:
            raise IndexError(index)
        self.parent = parent
        self.index = index
        self.dim = parent.dim
        self.names = parent.names

    def __call__(self, *args):
        t = new_tag()
        a = list(args)
        a[self.index] = Dual(args[self.index], 1.0, t)
        r = self.parent(*a)
        if isinstance(r, Dual) and r.tag == t:
            return r.der
        return 0.0

    def values(self, X):
        if isinstance(self.parent, TapeField):
            return self.parent.value_and_gradient(X)[1][:, self.index].copy()
        return super().values(X)


@dataclass(frozen=True)
class Tape:
    """Flat single-assignment program; slot ``k`` holds instruction ``k``."""

    ops: np.ndarray
    arg0: np.ndarray
    arg1: np.ndarray
    consts: np.ndarray
    instructions: tuple = field(repr=False, compare=False, default=())

    @classmethod
    def build(cls, rows: Sequence[tuple[int, int, int, float]]) -> "Tape":
        rows = list(rows)
        return cls(
            np.array([r[0] for r in rows], dtype=np.int64),
            np.array([r[1] for r in rows], dtype=np.int64),
            np.array([r[2] for r in rows], dtype=np.int64),
            np.array([r[3] for r in rows], dtype=np.float64),
            tuple(rows),
        )

    def __len__(self):
        return len(self.ops)

    def run(self, args):
        """Interpret the tape with generic arithmetic (floats, arrays, Duals)."""
        K = _kernels
        slots = []
        push = slots.append
        for op, a, b, c in self.instructions:
            if op == K.OP_CONST:
                push(c)
            elif op == K.OP_VAR:
                push(args[a])
            elif op == K.OP_ADD:
                push(slots[a] + slots[b])
            elif op == K.OP_SUB:
                push(slots[a] - slots[b])
            elif op == K.OP_MUL:
                push(slots[a] * slots[b])
            elif op == K.OP_DIV:
                push(div(slots[a], slots[b]))
            elif op == K.OP_NEG:
                push(-slots[a])
            elif op == K.OP_POW:
                push(power(slots[a], c))
            else:
                push(_TAPE_FUNCS[op](slots[a]))
        return slots[-1]


_TAPE_FUNCS = {
    _kernels.OP_SIN: sin,
    _kernels.OP_COS: cos,
    _kernels.OP_EXP: exp,
    _kernels.OP_LOG: log,
    _kernels.OP_SQRT: sqrt,
    _kernels.OP_ABS: fabs,
    _kernels.OP_ASINH: arcsinh,
}


class TapeField(ScalarField):
    """Compiled expression: batch value/gradient go through the kernels."""

    def __init__(self, tape: Tape, dim: int, names=None, source: str | None = None):
        self.tape = tape
        self.dim = dim
        self.names = tuple(names) if names is not None else None
        self.source = source

    def __repr__(self):
        return f"TapeField({self.source!r}, dim={self.dim})"

    def __call__(self, *args):
        return self.tape.run(args)

    def values(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self._check_args(X.shape[1])
        return _kernels.eval_batch(self.tape, X)

    def value(self, x):
        return float(self.values(np.asarray(x, dtype=float)[None, :])[0])

    def value_and_gradient(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self._check_args(X.shape[1])
        return _kernels.eval_grad_batch(self.tape, X)


class VectorField:
    """Ordered list of component fields sharing one input dimension."""

    def __init__(self, components: Sequence[ScalarField]):
        self.components = list(components)
        dims = {c.dim for c in self.components}
        if len(dims) != 1:
            raise ValueError("components must share one input dimension")
        self.dim = dims.pop()

    def __len__(self):
        return len(self.components)

    def __call__(self, *args):
        return [c(*args) for c in self.components]

    def evaluate(self, x) -> np.ndarray:
        return self.evaluate_batch(np.asarray(x, dtype=float)[None, :])[0]

    def evaluate_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.stack([c.values(X) for c in self.components], axis=1)

    def jacobian(self, x) -> np.ndarray:
        return jacobian(self.components, x)


def gradient(f: ScalarField, x) -> np.ndarray:
    return f.gradient(x)


def jacobian(components: Sequence[ScalarField], x) -> np.ndarray:
    """Row ``r`` is the gradient of ``components[r]`` at ``x``."""
    x = np.asarray(x, dtype=float)
    if len(components) == 0:
        return np.zeros((0, x.shape[0]))
    return np.stack([c.gradient(x) for c in components])


def jacobian_batch(components: Sequence[ScalarField], X) -> tuple[np.ndarray, np.ndarray]:
    """Values ``(m, r)`` and Jacobians ``(m, r, d)`` over a batch of points."""
    vals, grads = zip(*(c.value_and_gradient(X) for c in components))
    return np.stack(vals, axis=1), np.stack(grads, axis=1)


@dataclass
class FDReport:
    samples: int
    worst_abs_error: float
    worst_rel_error: float
    worst_point: np.ndarray | None
    failures: list = field(default_factory=list)
    tol: float = 1e-6

    @property
    def passed(self) -> bool:
        return not self.failures


def fd_check(f: ScalarField, region, samples: int = 100, h: float = 1e-6,
             tol: float = 1e-6, seed: int = 0) -> FDReport:
    """Compare autodiff partials with central differences at random points.

    ``region`` is a sequence of ``(lo, hi)`` bounds, one per input.  The
    relative error of a partial is ``|ad - fd| / max(1, |ad|)``.
    """
    if h <= 0 or samples < 1:
        raise ValueError("need h > 0 and samples >= 1")
    region = np.asarray(region, dtype=float).reshape(f.dim, 2)
    rng = np.random.default_rng(seed)
    X = rng.uniform(region[:, 0], region[:, 1], size=(samples, f.dim))
    _, G = f.value_and_gradient(X)
    worst_abs = worst_rel = 0.0
    worst_point = None
    failures = []
    for i in range(f.dim):
        step = np.zeros(f.dim)
        step[i] = h
        fd = (f.values(X + step) - f.values(X - step)) / (2 * h)
        err = np.abs(G[:, i] - fd)
        rel = err / np.maximum(1.0, np.abs(G[:, i]))
        k = int(np.argmax(rel))
        if rel[k] > worst_rel:
            worst_rel, worst_point = float(rel[k]), X[k].copy()
        worst_abs = max(worst_abs, float(err.max()))
        for j in np.flatnonzero(rel > tol):
            failures.append((X[j].copy(), i, float(G[j, i]), float(fd[j])))
    return FDReport(samples, worst_abs, worst_rel, worst_point, failures, tol)
