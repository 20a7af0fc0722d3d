"""Candidate Hamilton-Jacobi solutions and the checks run on them.

Two kinds of section are supported:

* :class:`SectionQxR` -- ``(q, z) -> (q, gamma_j(q, z), z)``
* :class:`SectionQ`   -- ``q -> (q, gamma_j(q), gamma_z(q))``

Every check samples a :class:`Grid` and returns a :class:`CheckReport`.  A
report whose hypotheses fail on the grid has status
``"assumptions-violated"``, which is not the same as failing the equation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .contactcore import ContactState, assemble_contact_field, dimension_n, lambda_batch
from .diffcore import ScalarField, jacobian_batch
from .exprdsl import VariableLayout, compile_source
from .flows import integrate

DEFAULT_TOL = 1e-9

PASS, FAIL, VIOLATED = "pass", "fail", "assumptions-violated"


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Tensor grid (``counts`` per axis) or ``random`` uniform samples."""

    bounds: tuple[tuple[float, float], ...]
    counts: tuple[int, ...] | None = None
    random: int | None = None
    seed: int = 0

    def __post_init__(self):
        b = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if not all(np.isfinite(v) for pair in b for v in pair):
            raise ValueError("grid bounds must be finite")
        object.__setattr__(self, "bounds", b)
        if self.counts is None and self.random is None:
            raise ValueError("grid needs counts or a random sample size")
        if self.counts is not None:
            c = tuple(int(k) for k in self.counts)
            if len(c) != len(b) or min(c) < 1:
                raise ValueError("one count >= 1 per axis")
            object.__setattr__(self, "counts", c)
        if self.random is not None and self.random < 1:
            raise ValueError("random sample size must be >= 1")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @classmethod
    def uniform(cls, lo: float, hi: float, count: int, dim: int) -> "Grid":
        return cls(((lo, hi),) * dim, (count,) * dim)

    @classmethod
    def parse(cls, spec: str, dim: int) -> "Grid":
        """``"lo:hi:count"`` per axis, comma separated; one axis is broadcast."""
        axes = [a.strip() for a in spec.split(",") if a.strip()]
        parsed = []
        for a in axes:
            parts = a.split(":")
            if len(parts) != 3:
                raise ValueError(f"bad grid axis {a!r}; expected lo:hi:count")
            parsed.append((float(parts[0]), float(parts[1]), int(parts[2])))
        if len(parsed) == 1:
            parsed = parsed * dim
        if len(parsed) != dim:
            raise ValueError(f"grid has {len(parsed)} axes, section needs {dim}")
        return cls(tuple((lo, hi) for lo, hi, _ in parsed), tuple(c for _, _, c in parsed))

    def points(self) -> np.ndarray:
        if self.random is not None:
            rng = np.random.default_rng(self.seed)
            lo = np.array([b[0] for b in self.bounds])
            hi = np.array([b[1] for b in self.bounds])
            return rng.uniform(lo, hi, size=(self.random, self.dim))
        axes = [np.linspace(lo, hi, c) for (lo, hi), c in zip(self.bounds, self.counts)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


# ---------------------------------------------------------------------------
# sections
# ---------------------------------------------------------------------------

@dataclass
class SectionQxR:
    components: list[ScalarField]
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        self.components = list(self.components)
        if not self.components:
            raise ValueError("section needs at least one component")
        if any(c.dim != len(self.components) + 1 for c in self.components):
            raise ValueError("components must be fields of (q^1..q^n, z)")

    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def domain(self) -> str:
        return "QxR"

    def data(self, X):
        """Values ``(m, n)`` and Jacobians ``(m, n, n+1)`` over ``(q, z)``."""
        return jacobian_batch(self.components, X)

    def states(self, X, values=None) -> np.ndarray:
        G = self.data(X)[0] if values is None else values
        n = self.n
        return np.concatenate([X[:, :n], G, X[:, n:n + 1]], axis=1)


@dataclass
class SectionQ:
    components: list[ScalarField]
    gamma_z: ScalarField
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        self.components = list(self.components)
        n = len(self.components)
        if n < 1 or any(c.dim != n for c in self.components) or self.gamma_z.dim != n:
            raise ValueError("components and gamma_z must be fields of (q^1..q^n)")

    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def domain(self) -> str:
        return "Q"

    @classmethod
    def one_jet(cls, f: ScalarField, names=None) -> "SectionQ":
        """``j^1 f = (q, df/dq, f)``."""
        return cls([f.partial(i) for i in range(f.dim)], f, names or f.names)

    def data(self, X):
        G, J = jacobian_batch(self.components, X)
        gz, dgz = self.gamma_z.value_and_gradient(X)
        return G, J, gz, dgz

    def states(self, X, values=None) -> np.ndarray:
        if values is None:
            G, _, gz, _ = self.data(X)
        else:
            G, gz = values
        return np.concatenate([X, G, gz[:, None]], axis=1)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class CheckReport:
    check: str
    status: str
    max_residual: float
    witness: np.ndarray | None
    samples: int
    tol: float
    residuals: np.ndarray | None = field(default=None, repr=False)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> dict:
        d = {
            "command": self.check,
            "pass": self.passed,
            "status": self.status,
            "max_residual": float(self.max_residual),
            "witness": None if self.witness is None else [float(v) for v in self.witness],
            "samples": int(self.samples),
            "tol": float(self.tol),
        }
        for k, v in self.extra.items():
            d[k] = _jsonable(v)
        return d


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _report(check, per_point, X, tol, extra=None, status=None):
    per_point = np.asarray(per_point, dtype=float)
    k = int(np.argmax(per_point)) if per_point.size else 0
    worst = float(per_point[k]) if per_point.size else 0.0
    if status is None:
        status = PASS if worst <= tol else FAIL
    return CheckReport(check, status, worst, X[k].copy() if per_point.size else None,
                       X.shape[0], tol, per_point, extra or {})


def _violated(check, X, tol, why, extra=None):
    e = {"assumptions": why}
    e.update(extra or {})
    return CheckReport(check, VIOLATED, float("nan"), None, X.shape[0], tol, None, e)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

@dataclass
class Classification:
    coisotropic: bool
    lagrangian_leaves: bool
    proportional: bool
    defects: dict
    witnesses: dict
    samples: int
    tol: float

    @property
    def hj_assumptions(self) -> bool:
        """Coisotropic image foliated by Lagrangian leaves."""
        return self.coisotropic and self.lagrangian_leaves

    def to_dict(self) -> dict:
        return {
            "command": "classify",
            "pass": self.hj_assumptions,
            "coisotropic": self.coisotropic,
            "lagrangian_leaves": self.lagrangian_leaves,
            "proportional": self.proportional,
            "max_residual": max(self.defects.values()),
            "defects": _jsonable(self.defects),
            "witness": _jsonable(self.witnesses),
            "samples": self.samples,
            "tol": self.tol,
        }


def section_defects(gamma: SectionQxR, X):
    """Pointwise curl, proportionality and coisotropy defects.

    * curl: ``max_{i<j} |d_j gamma_i - d_i gamma_j|`` (Lagrangian leaves);
    * proportionality: ``max |gamma_j d_z gamma_i - gamma_i d_z gamma_j|``;
    * form: ``max |curl_ij + gamma_j d_z gamma_i - gamma_i d_z gamma_j|``, the
      pairing ``Z_a(phi_b)`` of the defining functions of the image, which
      vanishes whenever the other two do.
    """
    n = gamma.n
    G, J = gamma.data(X)
    m = X.shape[0]
    curl = np.zeros(m)
    prop = np.zeros(m)
    cois = np.zeros(m)
    for i in range(n):
        for j in range(i + 1, n):
            c = J[:, i, j] - J[:, j, i]
            pr = G[:, j] * J[:, i, n] - G[:, i] * J[:, j, n]
            curl = np.maximum(curl, np.abs(c))
            prop = np.maximum(prop, np.abs(pr))
            cois = np.maximum(cois, np.abs(c + pr))
    return curl, prop, cois


def classify_section(gamma: SectionQxR, grid: Grid, tol: float = DEFAULT_TOL) -> Classification:
    X = grid.points()
    curl, prop, cois = section_defects(gamma, X)
    defects, witnesses = {}, {}
    both = np.maximum(curl, prop)
    for name, arr in (("lagrangian_leaves", curl), ("proportional", prop),
                      ("coisotropic", both), ("coisotropy_form", cois)):
        k = int(np.argmax(arr))
        defects[name] = float(arr[k])
        if arr[k] > tol:
            witnesses[name] = X[k].copy()
    return Classification(
        coisotropic=defects["coisotropic"] <= tol,
        lagrangian_leaves=defects["lagrangian_leaves"] <= tol,
        proportional=defects["proportional"] <= tol,
        defects=defects, witnesses=witnesses, samples=X.shape[0], tol=tol)


def legendrian_check(gamma: SectionQ, grid: Grid, tol: float = DEFAULT_TOL) -> CheckReport:
    """``max |gamma_i - d gamma_z / dq^i|`` over the grid."""
    X = grid.points()
    G, _, _, dgz = gamma.data(X)
    return _report("legendrian", np.max(np.abs(G - dgz), axis=1), X, tol)


# ---------------------------------------------------------------------------
# Hamilton-Jacobi residuals
# ---------------------------------------------------------------------------

def _hamiltonian_at(H: ScalarField, S):
    hv, hg = H.value_and_gradient(S)
    n = dimension_n(S.shape[1])
    return hv, hg[:, :n], hg[:, n:2 * n], hg[:, 2 * n]


def _qxr_terms(H, gamma, X):
    n = gamma.n
    G, J = gamma.data(X)
    S = gamma.states(X, G)
    hv, hq, hp, hz = _hamiltonian_at(H, S)
    return G, J, hv, hq, hp, hz, n


def xh_residual_vectors(H: ScalarField, gamma: SectionQxR, X) -> np.ndarray:
    """Left side of the contact HJ equation for ``X_H`` (one column per j).

    ``d_j H + H_{p_i} d_j gamma_i + gamma_j (H_z + H_{p_i} d_z gamma_i) - H d_z gamma_j``
    """
    G, J, hv, hq, hp, hz, n = _qxr_terms(H, gamma, X)
    dq = J[:, :, :n]  # dq[m, i, j] = d gamma_i / d q^j
    dz = J[:, :, n]
    gamma_o = hz + np.einsum("mi,mi->m", hp, dz)
    return hq + np.einsum("mi,mij->mj", hp, dq) + G * gamma_o[:, None] - hv[:, None] * dz


def xh_relatedness_vectors(H: ScalarField, gamma: SectionQxR, X) -> np.ndarray:
    """Raw relatedness condition for ``X_H`` before the leaf assumptions are used."""
    G, J, hv, hq, hp, hz, n = _qxr_terms(H, gamma, X)
    dq = J[:, :, :n]
    dz = J[:, :, n]
    zdot = np.einsum("mi,mi->m", G, hp) - hv
    return hq + np.einsum("mi,mji->mj", hp, dq) + G * hz[:, None] + zdot[:, None] * dz


def ev_residual_vectors(H: ScalarField, gamma: SectionQxR, X) -> np.ndarray:
    """``d_j H + H_{p_i} d_i gamma_j + gamma_i H_{p_i} d_z gamma_j + gamma_j H_z``."""
    G, J, hv, hq, hp, hz, n = _qxr_terms(H, gamma, X)
    dq = J[:, :, :n]
    dz = J[:, :, n]
    zdot = np.einsum("mi,mi->m", G, hp)
    return hq + np.einsum("mi,mji->mj", hp, dq) + zdot[:, None] * dz + G * hz[:, None]


def xh_global_form(H: ScalarField, gamma: SectionQxR, X) -> np.ndarray:
    """``d(H o gamma_z) + gamma_o gamma*theta - (H o gamma) i_{d/dz} d(gamma*theta)``.

    ``d(H o gamma_z)`` is differentiated through the composed field, not by
    the chain rule, so it cross-checks :func:`xh_residual_vectors`.
    """
    n = gamma.n
    G, J = gamma.data(X)
    S = gamma.states(X, G)
    hv, _, hp, hz = _hamiltonian_at(H, S)
    composed = compose_qxr(H, gamma)
    _, dcomp = composed.value_and_gradient(X)
    gamma_o = hz + np.einsum("mi,mi->m", hp, J[:, :, n])
    return dcomp[:, :n] + gamma_o[:, None] * G - hv[:, None] * J[:, :, n]


def compose_qxr(H: ScalarField, gamma: SectionQxR) -> ScalarField:
    """``(q, z) -> H(q, gamma(q, z), z)``."""
    from .diffcore import FunctionField

    n = gamma.n

    def fn(*a):
        q = a[:n]
        return H(*q, *(c(*a) for c in gamma.components), a[n])

    return FunctionField(fn, n + 1, gamma.names)


def compose_q(H: ScalarField, gamma: SectionQ) -> ScalarField:
    """``q -> H(q, gamma(q), gamma_z(q))``."""
    from .diffcore import FunctionField

    def fn(*q):
        return H(*q, *(c(*q) for c in gamma.components), gamma.gamma_z(*q))

    return FunctionField(fn, gamma.n, gamma.names)


def _norm_rows(V):
    return np.max(np.abs(V), axis=1)


def hj_residual_xh(H: ScalarField, gamma: SectionQxR, grid: Grid, tol: float = DEFAULT_TOL) -> CheckReport:
    X = grid.points()
    cls = classify_section(gamma, grid, tol)
    if not cls.hj_assumptions:
        return _violated("hj-xh", X, tol, "section is not coisotropic with Lagrangian leaves",
                         {"defects": cls.defects})
    R = xh_residual_vectors(H, gamma, X)
    return _report("hj-xh", _norm_rows(R), X, tol, {"components": R.shape[1]})


def hj_residual_ev(H: ScalarField, gamma: SectionQxR, grid: Grid, tol: float = DEFAULT_TOL) -> CheckReport:
    X = grid.points()
    cls = classify_section(gamma, grid, tol)
    if not cls.hj_assumptions:
        return _violated("hj-ev", X, tol, "section is not coisotropic with Lagrangian leaves",
                         {"defects": cls.defects})
    R = ev_residual_vectors(H, gamma, X)
    return _report("hj-ev", _norm_rows(R), X, tol, {"components": R.shape[1]})


def hj_residual_xh_alt(H: ScalarField, gamma: SectionQ, grid: Grid, tol: float = DEFAULT_TOL) -> CheckReport:
    """``|H o gamma|`` for a Legendrian section over ``Q``."""
    X = grid.points()
    leg = legendrian_check(gamma, grid, tol)
    if not leg.passed:
        return _violated("hj-xh-alt", X, tol, "section is not Legendrian",
                         {"legendrian_defect": leg.max_residual})
    G, _, gz, _ = gamma.data(X)
    hv = H.values(gamma.states(X, (G, gz)))
    return _report("hj-xh-alt", np.abs(hv), X, tol)


def hj_residual_ev_alt(H: ScalarField, gamma: SectionQ, grid: Grid, tol: float = DEFAULT_TOL) -> CheckReport:
    """Euclidean norm of ``d(H o gamma)``; also reports ``k = mean(H o gamma)``."""
    X = grid.points()
    leg = legendrian_check(gamma, grid, tol)
    if not leg.passed:
        return _violated("hj-ev-alt", X, tol, "section is not Legendrian",
                         {"legendrian_defect": leg.max_residual})
    G, J, gz, dgz = gamma.data(X)
    hv, hq, hp, hz = _hamiltonian_at(H, gamma.states(X, (G, gz)))
    dH = hq + np.einsum("mi,mij->mj", hp, J) + hz[:, None] * dgz
    return _report("hj-ev-alt", np.linalg.norm(dH, axis=1), X, tol, {"k": float(np.mean(hv))})


# ---------------------------------------------------------------------------
# gamma-relatedness, the ground truth
# ---------------------------------------------------------------------------

def relatedness_mismatch(H: ScalarField, kind: str, gamma, X) -> np.ndarray:
    """``field(gamma(x)) - T gamma (T pi field(gamma(x)))`` row by row."""
    n = gamma.n
    if isinstance(gamma, SectionQxR):
        G, J = gamma.data(X)
        S = gamma.states(X, G)
        hv, hg = H.value_and_gradient(S)
        v1 = assemble_contact_field(S, hv, hg, kind == "evolution")
        base = np.concatenate([v1[:, :n], v1[:, 2 * n:]], axis=1)  # (q-dot, z-dot)
        fibre = np.einsum("mij,mj->mi", J, base)
        v2 = np.concatenate([base[:, :n], fibre, base[:, n:]], axis=1)
    else:
        G, J, gz, dgz = gamma.data(X)
        S = gamma.states(X, (G, gz))
        hv, hg = H.value_and_gradient(S)
        v1 = assemble_contact_field(S, hv, hg, kind == "evolution")
        qdot = v1[:, :n]
        v2 = np.concatenate([qdot, np.einsum("mij,mj->mi", J, qdot),
                             np.einsum("mj,mj->m", dgz, qdot)[:, None]], axis=1)
    return v1 - v2


def gamma_related_check(H: ScalarField, kind: str, gamma, grid: Grid, tol: float = DEFAULT_TOL) -> CheckReport:
    X = grid.points()
    n = gamma.n
    M = relatedness_mismatch(H, kind, gamma, X)
    rows = {
        "q": float(np.max(np.abs(M[:, :n]))),
        "p": float(np.max(np.abs(M[:, n:2 * n]))),
        "z": float(np.max(np.abs(M[:, 2 * n]))),
    }
    return _report(f"gamma-related-{kind}", _norm_rows(M), X, tol, {"row_mismatch": rows})


def strong_solution_check(H: ScalarField, gamma: SectionQxR, grid: Grid, tol: float = DEFAULT_TOL) -> CheckReport:
    """``|H o gamma - gamma_i H_{p_i} o gamma|``; per-``z0`` maxima in ``extra``."""
    X = grid.points()
    sol = hj_residual_xh(H, gamma, grid, tol)
    if not sol.passed:
        return _violated("strong", X, tol, "section is not a solution of the HJ equation",
                         {"hj_status": sol.status, "hj_residual": sol.max_residual})
    G, J, hv, hq, hp, hz, n = _qxr_terms(H, gamma, X)
    r = np.abs(hv - np.einsum("mi,mi->m", G, hp))
    per_z = {}
    for z0 in np.unique(X[:, n]):
        per_z[repr(float(z0))] = float(r[X[:, n] == z0].max())
    return _report("strong", r, X, tol, {"per_z": per_z})


# ---------------------------------------------------------------------------
# complete solutions
# ---------------------------------------------------------------------------

def involution_defect(f: ScalarField, g: ScalarField, x) -> float:
    """``{f, g} + f R(g) - g R(f)``, which is ``Lambda(df, dg)``."""
    pt = x.as_array() if isinstance(x, ContactState) else np.asarray(x, dtype=float)
    return float(lambda_batch(f, g, pt[None, :])[0])


def conserved_check(H: ScalarField, kind: str, fs: Sequence[ScalarField], x0, t_end: float,
                    dt: float, tol: float = 1e-8) -> CheckReport:
    traj = integrate(H, kind, x0, t_end, dt)
    drifts = np.array([float(np.max(np.abs(f.values(traj.states) - f.values(traj.states[:1])[0])))
                       for f in fs])
    worst = float(drifts.max()) if drifts.size else 0.0
    status = PASS if worst <= tol and not traj.blew_up else FAIL
    return CheckReport(f"conserved-{kind}", status, worst, traj.states[0].copy(), len(traj), tol,
                       drifts, {"drifts": drifts, "blew_up": traj.blew_up})


# ---------------------------------------------------------------------------
# section files
# ---------------------------------------------------------------------------

def load_section(source, layout: VariableLayout | None = None):
    """Build a section from a JSON file path, JSON text or a parsed dict.

    Schema: ``{"n", "domain": "QxR"|"Q", "components": [expr], "gamma_z": expr,
    "params": {name: value}}`` plus optional ``"variables"`` (coordinate names
    on ``Q`` and, for ``QxR``, ``z``) and ``"gamma_t"`` (symplectic lift).
    Omitting ``"components"`` on a ``Q`` section means the 1-jet of ``gamma_z``.
    """
    spec = _read_spec(source)
    n = int(spec["n"])
    domain = spec.get("domain", "QxR")
    if domain not in ("QxR", "Q"):
        raise ValueError(f"unknown section domain {domain!r}")
    # file parameters are defaults; the system layout (and so the CLI) wins
    params = dict(spec.get("params", {}))
    if layout is not None:
        params.update(layout.params)
    if "variables" in spec:
        names = tuple(spec["variables"])
    elif layout is not None and layout.chart == "contact":
        names = layout.q + ((layout.z,) if domain == "QxR" else ())
    else:
        names = tuple(f"q{i + 1}" for i in range(n)) + (("z",) if domain == "QxR" else ())
    expected = n + (1 if domain == "QxR" else 0)
    if len(names) != expected:
        raise ValueError(f"section over {domain} with n={n} needs {expected} variable names")
    sl = VariableLayout(names, params, n if n >= 1 else 0)
    comps = spec.get("components")
    if domain == "QxR":
        if comps is None or len(comps) != n:
            raise ValueError("QxR section needs n component expressions")
        section = SectionQxR([compile_source(c, sl) for c in comps], names)
    else:
        if "gamma_z" not in spec:
            raise ValueError("Q section needs gamma_z")
        gz = compile_source(spec["gamma_z"], sl)
        if comps is None:
            section = SectionQ.one_jet(gz, names)
        else:
            if len(comps) != n:
                raise ValueError("Q section needs n component expressions")
            section = SectionQ([compile_source(c, sl) for c in comps], gz, names)
    section.spec = spec
    section.layout = sl
    return section


def _read_spec(source) -> dict:
    if isinstance(source, dict):
        return source
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        return json.loads(Path(source).read_text(encoding="utf-8"))
    return json.loads(source)
