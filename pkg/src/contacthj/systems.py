"""Built-in example systems and their constructed exact solutions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from scipy import integrate as sp_integrate

from .diffcore import ConstantField, FunctionField
from .errors import EvaluationError
from .exprdsl import (BinOp, Call, Num, Param, Var, VariableLayout, compile_expr, contact_layout,
                      parse, pretty, substitute)
from .sections import SectionQ


@dataclass(frozen=True)
class SystemPreset:
    name: str
    layout: VariableLayout
    H: object  # compiled ScalarField
    source: str
    notes: str = ""

    @property
    def n(self) -> int:
        return self.layout.n


# ---------------------------------------------------------------------------
# linear dissipation:  H = p^2/(2m) + V(q) + lam z
# ---------------------------------------------------------------------------

def linear_dissipation(m: float = 1.0, lam: float = 0.0, V: str = "q1^2/2") -> SystemPreset:
    if not m > 0:
        raise ValueError("mass must be positive")
    layout = contact_layout(1, params={"m": m, "lam": lam})
    pot = parse(V, layout)
    kinetic = BinOp("/", BinOp("^", Var("p1"), Num(2.0)), BinOp("*", Num(2.0), Param("m")))
    expr = BinOp("+", BinOp("+", kinetic, pot), BinOp("*", Param("lam"), Var("z")))
    return SystemPreset("linear-dissipation", layout, compile_expr(expr, layout), pretty(expr),
                        "mechanical system with linear dissipation in z")


def linear_dissipation_potential(m: float, lam: float, k: float, alpha: float) -> str:
    """``V(q) = k - alpha^2/(2m) - lam alpha q``, for which ``gamma_z = alpha q`` solves."""
    c0 = k - alpha ** 2 / (2.0 * m)
    c1 = lam * alpha
    return f"{c0!r} - {c1!r}*q1"


def linear_dissipation_solution(m: float, lam: float, k: float, alpha: float) -> SectionQ:
    """``gamma(q) = (q, alpha, alpha q)``; exact for :func:`linear_dissipation_potential`."""
    gz = FunctionField(lambda q: alpha * q, 1, ("q1",))
    return SectionQ([ConstantField(alpha, 1, ("q1",))], gz, ("q1",))


def quadrature_display_residual(m: float, lam: float, k: float, V: str, qs,
                                lower: float = 0.0) -> dict:
    """Residual of the candidate quadrature formula for ``gamma_p``.

    ``gamma_p(q) = exp(-2 m lam q) int_lower^q (2mk - 2mV(s)) exp(2 m lam s) ds``.
    ``gamma_z`` is taken Legendrian, ``gamma_z' = gamma_p``, with the constant
    fixed so that the equation holds at ``q = lower``.  The report is
    informational: the formula is not assumed to be a solution.
    """
    if lam == 0:
        raise ValueError("the display needs lam != 0")
    layout = contact_layout(1, params={"m": m, "lam": lam})
    Vf = compile_expr(parse(V, layout), layout)

    def v(s):
        return Vf.value([s, 0.0, 0.0])

    def gamma_p(q):
        val, _ = sp_integrate.quad(lambda s: (2 * m * k - 2 * m * v(s)) * np.exp(2 * m * lam * s),
                                   lower, q, epsabs=1e-13, epsrel=1e-12)
        return np.exp(-2 * m * lam * q) * val

    gp0 = gamma_p(lower)
    gz0 = (k - gp0 ** 2 / (2 * m) - v(lower)) / lam
    rows = []
    for q in np.asarray(qs, dtype=float):
        gz, _ = sp_integrate.quad(gamma_p, lower, q, epsabs=1e-12, epsrel=1e-11)
        gz += gz0
        gp = gamma_p(q)
        rows.append(abs(gp ** 2 / (2 * m) + v(q) + lam * gz - k))
    rows = np.array(rows)
    i = int(np.argmax(rows))
    return {"command": "quadrature-display", "max_residual": float(rows[i]),
            "witness": [float(np.asarray(qs, dtype=float)[i])], "samples": len(rows),
            "residuals": rows}


# ---------------------------------------------------------------------------
# ideal gas:  H = T S - R N T + mu N - U
# ---------------------------------------------------------------------------

IDEAL_GAS_Q = ("S", "V", "N")
IDEAL_GAS_P = ("T", "negP", "mu")  # p_2 = -P from eta = dU - T dS + P dV - mu dN


def ideal_gas(R: float = 1.0) -> SystemPreset:
    if not R > 0:
        raise ValueError("R must be positive")
    layout = contact_layout(3, q=IDEAL_GAS_Q, p=IDEAL_GAS_P, z="U", params={"R": R})
    source = "T*S - R*N*T + mu*N - U"
    return SystemPreset("ideal-gas", layout, compile_expr(parse(source, layout), layout), source,
                        "classical ideal gas, energy representation; p = (T, -P, mu)")


def _gas_q_layout(R: float) -> VariableLayout:
    return VariableLayout(IDEAL_GAS_Q, {"R": R}, 3)


def ideal_gas_energy(R: float, G: str) -> str:
    """``gamma_U = N G(S/N + R log N, V)`` as an expression string."""
    g = parse(G, VariableLayout(("c", "V"), {"R": R}))
    c = BinOp("+", BinOp("/", Var("S"), Var("N")), BinOp("*", Param("R"), Call("log", Var("N"))))
    return pretty(BinOp("*", Var("N"), substitute(g, {"c": c})))


def ideal_gas_solution(R: float, G: str) -> SectionQ:
    """1-jet of ``gamma_U``; components ``(T, -P, mu) = d gamma_U / d(S, V, N)``."""
    layout = _gas_q_layout(R)
    gu = compile_expr(parse(ideal_gas_energy(R, G), layout), layout)
    return SectionQ.one_jet(gu, IDEAL_GAS_Q)


def gas_display_residual(R: float, k: float, F: str, X) -> dict:
    """Residual of a candidate closed form for the gas PDE.

    ``gamma_U = k arcsinh(S / sqrt(-S^2 + (-7N + S)^2)) + F(-S^2 + (RN - S)^2, V)``
    is substituted into ``(S - RN) d_S gamma_U + N d_N gamma_U - gamma_U = k``.
    Points where the square root is not real are skipped and counted.
    """
    layout = _gas_q_layout(R)
    f = parse(F, VariableLayout(("a", "V"), {"R": R}))
    a = parse("-S^2 + (R*N - S)^2", layout)
    radicand = parse("-S^2 + (-7*N + S)^2", layout)
    expr = BinOp("+", BinOp("*", Num(float(k)), Call("arcsinh", BinOp("/", Var("S"), Call("sqrt", radicand)))),
                 substitute(f, {"a": a}))
    gu = compile_expr(expr, layout)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    ok = compile_expr(radicand, layout).values(X) > 0
    Y = X[ok]
    out = {"command": "gas-display", "expression": pretty(expr), "samples": int(ok.sum()),
           "skipped": int((~ok).sum()), "max_residual": float("nan"), "witness": None}
    if Y.shape[0] == 0:
        return out
    try:
        val, grad = gu.value_and_gradient(Y)
    except EvaluationError as exc:  # pragma: no cover - masked above
        out["error"] = str(exc)
        return out
    S, N = Y[:, 0], Y[:, 2]
    r = np.abs((S - R * N) * grad[:, 0] + N * grad[:, 2] - val - k)
    i = int(np.argmax(r))
    out["max_residual"] = float(r[i])
    out["witness"] = [float(v) for v in Y[i]]
    return out


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

def _make_linear(params: Mapping[str, float], potential: str | None) -> SystemPreset:
    extra = set(params) - {"m", "lam"}
    if extra:
        raise ValueError(f"unknown parameters for linear-dissipation: {sorted(extra)}")
    return linear_dissipation(params.get("m", 1.0), params.get("lam", 0.0),
                              potential if potential is not None else "q1^2/2")


def _make_gas(params: Mapping[str, float], potential: str | None) -> SystemPreset:
    extra = set(params) - {"R"}
    if extra:
        raise ValueError(f"unknown parameters for ideal-gas: {sorted(extra)}")
    if potential is not None:
        raise ValueError("ideal-gas takes no potential")
    return ideal_gas(params.get("R", 1.0))


PRESETS: dict[str, Callable[[Mapping[str, float], str | None], SystemPreset]] = {
    "linear-dissipation": _make_linear,
    "ideal-gas": _make_gas,
}


def make_preset(name: str, params: Mapping[str, float] | None = None,
                potential: str | None = None) -> SystemPreset:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown system {name!r}; known: {', '.join(sorted(PRESETS))}") from None
    return factory(dict(params or {}), potential)


def load_system(spec: Mapping, params: Mapping[str, float] | None = None) -> SystemPreset:
    """System file ``{"n", "layout": {"q", "p", "z"}, "H": expr, "params"}``."""
    n = int(spec["n"])
    lay = spec.get("layout", {}) or {}
    merged = dict(spec.get("params", {}))
    merged.update(params or {})
    layout = contact_layout(n, lay.get("q"), lay.get("p"), lay.get("z", "z"), merged)
    source = spec["H"]
    return SystemPreset(spec.get("name", "custom"), layout,
                        compile_expr(parse(source, layout), layout), source, "from file")
