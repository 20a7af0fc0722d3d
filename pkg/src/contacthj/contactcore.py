"""Contact geometry of ``T*Q x R`` with ``eta = dz - p_i dq^i``.

Coordinates are always ordered ``(q^1..q^n, p_1..p_n, z)``; tangent vectors
use the frame ``(d/dq, d/dp, d/dz)`` and covectors ``(dq, dp, dz)``.

Sign conventions: ``d eta = dq^i ^ dp_i`` and ``i_v w = w(v, .)``.  The
Jacobi bivector is ``Lambda(a, b) = -d eta(#a, #b)`` and
``#_Lambda(df) = X_f + f R``, which reproduces the coordinate expression of
``X_H`` below.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import ConstantField, FunctionField, ScalarField, VectorField, jacobian


def dimension_n(dim: int) -> int:
    if dim < 3 or dim % 2 == 0:
        raise ValueError(f"a contact chart has odd dimension 2n+1 >= 3, got {dim}")
    return (dim - 1) // 2


@dataclass(frozen=True)
class ContactState:
    q: np.ndarray
    p: np.ndarray
    z: float

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if q.shape != p.shape or q.ndim != 1:
            raise ValueError("q and p must be vectors of equal length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p)) and np.isfinite(self.z)):
            raise ValueError("state entries must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "z", float(self.z))

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.q, self.p, [self.z]])

    @classmethod
    def from_array(cls, x) -> "ContactState":
        x = np.asarray(x, dtype=float)
        n = dimension_n(x.shape[0])
        return cls(x[:n], x[n:2 * n], x[2 * n])


def _as_array(x) -> np.ndarray:
    return x.as_array() if isinstance(x, ContactState) else np.asarray(x, dtype=float)


@dataclass(frozen=True)
class TangentVector:
    base: ContactState
    components: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.components, dtype=float)
        if c.shape != (2 * self.base.n + 1,):
            raise ValueError("tangent vector needs 2n+1 components")
        object.__setattr__(self, "components", c)


@dataclass(frozen=True)
class CotangentVector:
    base: ContactState
    components: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.components, dtype=float)
        if c.shape != (2 * self.base.n + 1,):
            raise ValueError("covector needs 2n+1 components")
        object.__setattr__(self, "components", c)

    def __call__(self, v: TangentVector) -> float:
        return float(self.components @ v.components)


# ---------------------------------------------------------------------------
# pointwise linear algebra
# ---------------------------------------------------------------------------

def eta(x: ContactState) -> CotangentVector:
    return CotangentVector(x, np.concatenate([-x.p, np.zeros(x.n), [1.0]]))


def d_eta(u: TangentVector, w: TangentVector) -> float:
    n = u.base.n
    uq, up = u.components[:n], u.components[n:2 * n]
    wq, wp = w.components[:n], w.components[n:2 * n]
    return float(uq @ wp - up @ wq)


def flat(v: TangentVector) -> CotangentVector:
    """``i_v d eta + eta(v) eta``."""
    x = v.base
    n = x.n
    vq, vp, vz = v.components[:n], v.components[n:2 * n], v.components[2 * n]
    e = vz - x.p @ vq
    return CotangentVector(x, np.concatenate([-vp - e * x.p, vq, [e]]))


def sharp(alpha: CotangentVector) -> TangentVector:
    """Inverse of :func:`flat`."""
    x = alpha.base
    n = x.n
    aq, ap, az = alpha.components[:n], alpha.components[n:2 * n], alpha.components[2 * n]
    return TangentVector(x, np.concatenate([ap, -aq - az * x.p, [az + x.p @ ap]]))


def sharp_lambda(alpha: CotangentVector) -> TangentVector:
    """Vector ``#_Lambda(alpha)`` with ``<#_Lambda a, b> = Lambda(a, b)``."""
    x = alpha.base
    n = x.n
    aq, ap, az = alpha.components[:n], alpha.components[n:2 * n], alpha.components[2 * n]
    return TangentVector(x, np.concatenate([ap, -aq - az * x.p, [x.p @ ap]]))


def jacobi_bivector(alpha: CotangentVector, beta: CotangentVector) -> float:
    """``Lambda(alpha, beta) = -d eta(#alpha, #beta)``."""
    return -d_eta(sharp(alpha), sharp(beta))


def differential(f: ScalarField, x) -> CotangentVector:
    state = x if isinstance(x, ContactState) else ContactState.from_array(x)
    return CotangentVector(state, f.gradient(state.as_array()))


# ---------------------------------------------------------------------------
# vector fields
# ---------------------------------------------------------------------------

def reeb(n: int) -> VectorField:
    if n < 1:
        raise ValueError("n >= 1")
    d = 2 * n + 1
    return VectorField([ConstantField(1.0 if k == 2 * n else 0.0, d) for k in range(d)])


class ContactVectorField(VectorField):
    """``X_H`` (``kind='hamiltonian'``) or ``E_H`` (``kind='evolution'``).

    Components are generic fields (differentiable again, e.g. for Lie
    brackets); batch evaluation goes through one gradient pass of ``H``.
    """

    def __init__(self, H: ScalarField, kind: str = "hamiltonian"):
        if kind not in ("hamiltonian", "evolution"):
            raise ValueError(f"unknown field kind {kind!r}")
        self.H = H
        self.kind = kind
        self.n = n = dimension_n(H.dim)
        d = H.dim
        parts = [H.partial(i) for i in range(d)]
        evolution = kind == "evolution"

        def q_comp(i):
            return FunctionField(lambda *a: parts[n + i](*a), d, H.names)

        def p_comp(i):
            return FunctionField(lambda *a: -(parts[i](*a) + a[n + i] * parts[2 * n](*a)), d, H.names)

        def z_comp(*a):
            s = 0.0
            for i in range(n):
                s = s + a[n + i] * parts[n + i](*a)
            return s if evolution else s - H(*a)

        comps = [q_comp(i) for i in range(n)] + [p_comp(i) for i in range(n)]
        comps.append(FunctionField(z_comp, d, H.names))
        super().__init__(comps)

    def evaluate_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        vals, grads = self.H.value_and_gradient(X)
        return assemble_contact_field(X, vals, grads, self.kind == "evolution")


def assemble_contact_field(X, H, G, evolution: bool) -> np.ndarray:
    """Contact field rows from states ``X``, values ``H`` and gradients ``G``."""
    n = dimension_n(X.shape[1])
    p = X[:, n:2 * n]
    hq, hp, hz = G[:, :n], G[:, n:2 * n], G[:, 2 * n]
    s = np.einsum("ij,ij->i", p, hp)
    z = s if evolution else s - H
    return np.concatenate([hp, -(hq + p * hz[:, None]), z[:, None]], axis=1)


def hamiltonian_field(H: ScalarField) -> ContactVectorField:
    return ContactVectorField(H, "hamiltonian")


def evolution_field(H: ScalarField) -> ContactVectorField:
    return ContactVectorField(H, "evolution")


def contact_field(H: ScalarField, kind: str) -> ContactVectorField:
    return ContactVectorField(H, kind)


def darboux_frame(n: int) -> tuple[list[VectorField], list[VectorField]]:
    """Frame ``A_i = d/dq^i + p_i d/dz``, ``B^i = d/dp_i`` of ``ker eta``.

    With the coordinate bracket of :func:`lie_bracket`, ``[A_i, B^i] = -R``.
    """
    d = 2 * n + 1
    A, B = [], []
    for i in range(n):
        comps = [ConstantField(1.0 if k == i else 0.0, d) for k in range(2 * n)]
        comps.append(FunctionField(lambda *a, i=i: a[n + i], d))
        A.append(VectorField(comps))
        B.append(VectorField([ConstantField(1.0 if k == n + i else 0.0, d) for k in range(d)]))
    return A, B


def lie_bracket(X: VectorField, Y: VectorField, x) -> TangentVector:
    """Coordinate bracket ``[X, Y] = DY . X - DX . Y`` at ``x``."""
    state = x if isinstance(x, ContactState) else ContactState.from_array(x)
    pt = state.as_array()
    xv = X.evaluate(pt)
    yv = Y.evaluate(pt)
    return TangentVector(state, jacobian(Y.components, pt) @ xv - jacobian(X.components, pt) @ yv)


# ---------------------------------------------------------------------------
# Jacobi bracket
# ---------------------------------------------------------------------------

def jacobi_bracket(f: ScalarField, g: ScalarField, x) -> float:
    """``{f, g} = Lambda(df, dg) - f R(g) + g R(f)``."""
    pt = _as_array(x)
    n = dimension_n(pt.shape[0])
    fv, fg = f.value_and_gradient(pt[None, :])
    gv, gg = g.value_and_gradient(pt[None, :])
    return float(_bracket_arrays(pt[None, :], fv, fg, gv, gg, n)[0])


def _lambda_arrays(X, fg, gg, n):
    # written as a sum of antisymmetric pairs so that swapping f and g
    # negates the result exactly in floating point
    p = X[:, n:2 * n]
    fq, fp, fz = fg[:, :n], fg[:, n:2 * n], fg[:, 2 * n:]
    gq, gp, gz = gg[:, :n], gg[:, n:2 * n], gg[:, 2 * n:]
    terms = (fp * gq - gp * fq) + p * (fp * gz - gp * fz)
    return np.sum(terms, axis=1)


def _bracket_arrays(X, fv, fg, gv, gg, n):
    return _lambda_arrays(X, fg, gg, n) - fv * gg[:, 2 * n] + gv * fg[:, 2 * n]


def jacobi_bracket_batch(f: ScalarField, g: ScalarField, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = dimension_n(X.shape[1])
    fv, fg = f.value_and_gradient(X)
    gv, gg = g.value_and_gradient(X)
    return _bracket_arrays(X, fv, fg, gv, gg, n)


def lambda_batch(f: ScalarField, g: ScalarField, X) -> np.ndarray:
    """``Lambda(df, dg)`` at each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = dimension_n(X.shape[1])
    return _lambda_arrays(X, f.value_and_gradient(X)[1], g.value_and_gradient(X)[1], n)


def bracket_field(f: ScalarField, g: ScalarField) -> FunctionField:
    """``{f, g}`` as a field, differentiable again via nested duals."""
    d = f.dim
    n = dimension_n(d)
    fp = [f.partial(i) for i in range(d)]
    gp = [g.partial(i) for i in range(d)]

    def fn(*a):
        fz, gz = fp[2 * n](*a), gp[2 * n](*a)
        total = -f(*a) * gz + g(*a) * fz
        for i in range(n):
            dfp = fp[n + i](*a)
            total = total + dfp * gp[i](*a) + a[n + i] * dfp * gz
            total = total - (fp[i](*a) + a[n + i] * fz) * gp[n + i](*a)
        return total

    return FunctionField(fn, d, f.names)
