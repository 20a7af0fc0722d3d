"""Homogeneous symplectic model of a contact system on ``T*(Q x R)``.

Homogeneous coordinates are ordered ``(q^1..q^n, z, P_1..P_n, P_z)``.  The
projection ``Phi(q, z, P, P_z) = (q, -P/P_z, z)`` is defined off
``{P_z = 0}``; ``Psi`` adds ``t = -log(-P_z)`` on ``{P_z < 0}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .contactcore import ContactState, assemble_contact_field, dimension_n
from .diffcore import FunctionField, ScalarField, VectorField
from .errors import AssumptionError, ChartError, IntegrabilityError
from .sections import (DEFAULT_TOL, CheckReport, Grid, SectionQ, SectionQxR, _report,
                       classify_section)


def _homogeneous_n(dim: int) -> int:
    if dim < 4 or dim % 2:
        raise ValueError(f"homogeneous chart has even dimension 2n+2 >= 4, got {dim}")
    return (dim - 2) // 2


@dataclass(frozen=True)
class HomogeneousState:
    q: np.ndarray
    z: float
    P: np.ndarray
    Pz: float

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        P = np.atleast_1d(np.asarray(self.P, dtype=float))
        if q.shape != P.shape or q.ndim != 1:
            raise ValueError("q and P must be vectors of equal length")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "z", float(self.z))
        object.__setattr__(self, "Pz", float(self.Pz))

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.q, [self.z], self.P, [self.Pz]])

    @classmethod
    def from_array(cls, x) -> "HomogeneousState":
        x = np.asarray(x, dtype=float)
        n = _homogeneous_n(x.shape[0])
        return cls(x[:n], x[n], x[n + 1:2 * n + 1], x[2 * n + 1])


def _as_hstate(x) -> HomogeneousState:
    return x if isinstance(x, HomogeneousState) else HomogeneousState.from_array(x)


def homogenize(H: ScalarField) -> ScalarField:
    """``H~(q, z, P, P_z) = -P_z H(q, -P/P_z, z)``."""
    n = dimension_n(H.dim)
    names = None
    if H.names is not None:
        names = tuple(H.names[:n]) + (H.names[2 * n],) + tuple(
            f"P{i + 1}" for i in range(n)) + ("Pz",)

    def fn(*a):
        pz = a[2 * n + 1]
        p = [dc.div(-a[n + 1 + i], pz) for i in range(n)]
        return -pz * H(*a[:n], *p, a[n])

    return FunctionField(fn, 2 * n + 2, names)


def phi(x) -> ContactState:
    s = _as_hstate(x)
    if s.Pz == 0:
        raise ChartError("P_z = 0 lies outside the chart of Phi")
    return ContactState(s.q, -s.P / s.Pz, s.z)


def psi(x) -> tuple[ContactState, float]:
    s = _as_hstate(x)
    if not s.Pz < 0:
        raise ChartError("Psi needs P_z < 0")
    return phi(s), -math.log(-s.Pz)


class SymplecticField(VectorField):
    """Hamilton's equations for ``w = dq^i ^ dP_i + dz ^ dP_z``."""

    def __init__(self, Ht: ScalarField):
        self.H = Ht
        self.n = n = _homogeneous_n(Ht.dim)
        d = Ht.dim
        parts = [Ht.partial(i) for i in range(d)]
        comps = [parts[n + 1 + i] for i in range(n)] + [parts[2 * n + 1]]
        comps += [-parts[i] for i in range(n)] + [-parts[n]]
        super().__init__(comps)

    def evaluate_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        _, G = self.H.value_and_gradient(X)
        n = self.n
        return np.concatenate([G[:, n + 1:], -G[:, :n + 1]], axis=1)

    def evaluate(self, x):
        return self.evaluate_batch(np.asarray(x, dtype=float)[None, :])[0]


def symplectic_field(Ht: ScalarField) -> SymplecticField:
    return SymplecticField(Ht)


def tangent_phi(X, V) -> np.ndarray:
    """``T Phi`` applied row-wise: homogeneous points ``X``, vectors ``V``.

    Output rows are contact vectors in ``(d/dq, d/dp, d/dz)`` order.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    n = _homogeneous_n(X.shape[1])
    P, Pz = X[:, n + 1:2 * n + 1], X[:, 2 * n + 1]
    if np.any(Pz == 0):
        raise ChartError("P_z = 0 lies outside the chart of Phi")
    vq, vz, vP, vPz = V[:, :n], V[:, n], V[:, n + 1:2 * n + 1], V[:, 2 * n + 1]
    vp = -vP / Pz[:, None] + P * (vPz / Pz ** 2)[:, None]
    return np.concatenate([vq, vp, vz[:, None]], axis=1)


def phi_batch(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = _homogeneous_n(X.shape[1])
    Pz = X[:, 2 * n + 1]
    if np.any(Pz == 0):
        raise ChartError("P_z = 0 lies outside the chart of Phi")
    return np.concatenate([X[:, :n], -X[:, n + 1:2 * n + 1] / Pz[:, None], X[:, n:n + 1]], axis=1)


def pushforward_check(H: ScalarField, points, tol: float = DEFAULT_TOL) -> CheckReport:
    """Compare ``T Phi (X_H~)`` with ``X_H o Phi`` at homogeneous points."""
    X = np.array([_as_hstate(x).as_array() for x in points], dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need at least one point")
    if np.any(X[:, -1] == 0):
        raise ChartError("P_z = 0 lies outside the chart of Phi")
    left = tangent_phi(X, symplectic_field(homogenize(H)).evaluate_batch(X))
    Y = phi_batch(X)
    hv, hg = H.value_and_gradient(Y)
    right = assemble_contact_field(Y, hv, hg, False)
    return _report("pushforward", np.max(np.abs(left - right), axis=1), X, tol)


# ---------------------------------------------------------------------------
# symplectic sections and the lift of contact solutions
# ---------------------------------------------------------------------------

@dataclass
class SymplecticSection:
    """``(q, z) -> (q, gt_j(q, z), z, gt_t(q, z))``."""

    components: list[ScalarField]
    gamma_t: ScalarField
    names: tuple[str, ...] | None = None
    info: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.components)

    def projected(self) -> SectionQxR:
        """``Phi o gamma~``: components ``-gt_j / gt_t``."""
        gt = self.gamma_t
        comps = [FunctionField(lambda *a, c=c: dc.div(-c(*a), gt(*a)), self.n + 1, self.names)
                 for c in self.components]
        return SectionQxR(comps, self.names)

    def frozen(self, z0: float) -> SectionQ:
        """``q -> (q, gt_j(q, z0), gt_t(q, z0))`` as a section over ``Q``."""
        n = self.n

        def at(f):
            return FunctionField(lambda *q: f(*q, z0), n, None if self.names is None else self.names[:n])

        return SectionQ([at(c) for c in self.components], at(self.gamma_t),
                        None if self.names is None else self.names[:n])


def _rk4_leg(gamma_i, dz_gamma_i, q, axis, z, target, steps):
    """Carry ``(z, J)`` along ``A_axis`` from ``q[axis]`` to ``target``.

    ``dz/ds = gamma_axis`` and ``dJ/ds = -d_z gamma_axis``.  Generic arithmetic,
    so arrays and dual numbers pass through.
    """
    s0 = q[axis]
    h = (target - s0) * (1.0 / steps)
    J = 0.0 * z
    args = list(q)

    def rhs(s, zz):
        args[axis] = s
        return gamma_i(*args, zz), -dz_gamma_i(*args, zz)

    s = s0
    for k in range(steps):
        k1z, k1j = rhs(s, z)
        k2z, k2j = rhs(s + 0.5 * h, z + 0.5 * h * k1z)
        k3z, k3j = rhs(s + 0.5 * h, z + 0.5 * h * k2z)
        k4z, k4j = rhs(s + h, z + h * k3z)
        z = z + (h / 6.0) * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
        J = J + (h / 6.0) * (k1j + 2.0 * k2j + 2.0 * k3j + k4j)
        s = s0 + (k + 1) * h
    return z, J


class LiftPotential(ScalarField):
    """``g`` with ``A_i(g) = -d_z gamma_i`` and ``g = 0`` on the fibre over ``base``.

    Evaluated by integrating back along the frame ``A_i = d/dq^i + gamma_i d/dz``
    one coordinate at a time (``order`` lists the legs, first leg first).
    """

    def __init__(self, gamma: SectionQxR, base, order=None, max_step: float = 2e-3,
                 min_steps: int = 16):
        self.gamma = gamma
        self.n = n = gamma.n
        self.dim = n + 1
        self.names = gamma.names
        self.base = np.asarray(base, dtype=float)
        if self.base.shape != (n,):
            raise ValueError("base point needs n coordinates")
        self.order = tuple(range(n - 1, -1, -1)) if order is None else tuple(order)
        if sorted(self.order) != list(range(n)):
            raise ValueError("order must be a permutation of the q axes")
        self.max_step = max_step
        self.min_steps = min_steps
        self._dz = [c.partial(n) for c in gamma.components]

    def _steps(self, span) -> int:
        width = float(np.max(np.abs(np.asarray(dc.primal(span), dtype=float)), initial=0.0))
        return max(self.min_steps, int(math.ceil(width / self.max_step)))

    def __call__(self, *args):
        n = self.n
        q = list(args[:n])
        z = args[n]
        total = 0.0
        for axis in self.order:
            target = float(self.base[axis])
            steps = self._steps(q[axis] - target)
            z, J = _rk4_leg(self.gamma.components[axis], self._dz[axis], q, axis, z, target, steps)
            total = total - J
            q[axis] = target
        return total


def integrability_defect(gamma: SectionQxR, X) -> np.ndarray:
    """``max_{i<j} |A_i(d_z gamma_j) - A_j(d_z gamma_i)|`` at rows of ``X``."""
    n = gamma.n
    G = np.stack([c.values(X) for c in gamma.components], axis=1)
    dz = [c.partial(n) for c in gamma.components]
    grads = [f.value_and_gradient(X)[1] for f in dz]
    out = np.zeros(X.shape[0])
    for i in range(n):
        for j in range(i + 1, n):
            a = grads[j][:, i] + G[:, i] * grads[j][:, n]
            b = grads[i][:, j] + G[:, j] * grads[i][:, n]
            out = np.maximum(out, np.abs(a - b))
    return out


def lift_section(gamma: SectionQxR, sigma: ScalarField | None, grid: Grid,
                 tol: float = DEFAULT_TOL, base=None) -> SymplecticSection:
    """Lift a coisotropic solution to a section with Lagrangian image.

    ``gt_t = exp(g)`` and ``gt_Q = -gt_t gamma``.  The hypotheses are checked
    on ``grid``; for ``n >= 2`` the result is also integrated along the
    reversed leg order and the two potentials must agree.
    """
    X = grid.points()
    n = gamma.n
    cls = classify_section(gamma, grid, tol)
    if not (cls.coisotropic and cls.lagrangian_leaves):
        raise AssumptionError(f"section fails the lift hypotheses: {cls.defects}")
    if sigma is not None:
        G, J = gamma.data(X)
        s = sigma.values(X)
        dev = float(np.max(np.abs(J[:, :, n] - s[:, None] * G)))
        if dev > tol:
            raise AssumptionError(f"d/dz gamma != sigma gamma (defect {dev:.3g})")
    info = {"classification": cls.defects}
    if n >= 2:
        d = integrability_defect(gamma, X)
        info["integrability_defect"] = float(d.max())
        if d.max() > tol:
            raise IntegrabilityError(
                f"integrability defect {d.max():.3g} exceeds {tol:g} at {X[int(np.argmax(d))]}")
    base = np.zeros(n) if base is None else np.asarray(base, dtype=float)
    g = LiftPotential(gamma, base)
    if n >= 2:
        rev = LiftPotential(gamma, base, order=tuple(reversed(g.order)))
        gap = float(np.max(np.abs(g.values(X) - rev.values(X))))
        info["path_dependence"] = gap
        if gap > tol:
            raise IntegrabilityError(f"characteristic integration is path dependent ({gap:.3g})")
    gt = FunctionField(lambda *a: dc.exp(g(*a)), n + 1, gamma.names)
    comps = [FunctionField(lambda *a, c=c: -dc.exp(g(*a)) * c(*a), n + 1, gamma.names)
             for c in gamma.components]
    out = SymplecticSection(comps, gt, gamma.names, info)
    out.potential = g
    return out


def lagrangian_defect(gt: SymplecticSection, grid: Grid, tol: float = DEFAULT_TOL) -> CheckReport:
    """``d/dz gt_Q = d_Q gt_t`` and ``d_Q gt_Q = 0`` on the grid."""
    X = grid.points()
    n = gt.n
    _, Gt = gt.gamma_t.value_and_gradient(X)
    grads = [c.value_and_gradient(X)[1] for c in gt.components]
    d = np.zeros(X.shape[0])
    for i in range(n):
        d = np.maximum(d, np.abs(grads[i][:, n] - Gt[:, i]))
        for j in range(i + 1, n):
            d = np.maximum(d, np.abs(grads[i][:, j] - grads[j][:, i]))
    return _report("lagrangian", d, X, tol)


def exp_z_form_check(gt: SymplecticSection, grid: Grid, tol: float = DEFAULT_TOL) -> CheckReport:
    """``max |gt_i(q, z) - e^z gt_i(q, 0)|``."""
    X = grid.points()
    n = gt.n
    X0 = X.copy()
    X0[:, n] = 0.0
    ez = np.exp(X[:, n])
    d = np.zeros(X.shape[0])
    for c in gt.components:
        d = np.maximum(d, np.abs(c.values(X) - ez * c.values(X0)))
    return _report("exp-z-form", d, X, tol)


def load_symplectic_section(spec: dict, layout=None) -> SymplecticSection:
    """Section file with ``"gamma_t"``: components are ``gt_j`` over ``(q, z)``."""
    from .exprdsl import VariableLayout, compile_source

    n = int(spec["n"])
    params = dict(spec.get("params", {}))
    if layout is not None:
        params.update(layout.params)
    names = tuple(spec.get("variables", [f"q{i + 1}" for i in range(n)] + ["z"]))
    sl = VariableLayout(names, params, n)
    comps = [compile_source(c, sl) for c in spec["components"]]
    if len(comps) != n:
        raise ValueError("symplectic section needs n components")
    return SymplecticSection(comps, compile_source(spec["gamma_t"], sl), names)
