"""A small arithmetic language for Hamiltonians, potentials and sections.

Grammar (``^`` binds tighter than unary minus and is right-associative)::

    expr  := term (("+" | "-") term)*
    term  := unary (("*" | "/") unary)*
    unary := "-" unary | power
    power := atom ("^" unary)?
    atom  := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"

Identifiers resolve against a :class:`VariableLayout` at parse time: either a
coordinate, a bound parameter, or one of the functions in ``FUNCTIONS``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from . import _kernels as K
from .diffcore import FUNCTIONS, Tape, TapeField, div, power
from .errors import EvaluationError, ExprSyntaxError, UnknownIdentifier

# ---------------------------------------------------------------------------
# layouts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VariableLayout:
    """Ordered coordinate names plus bound parameter values.

    ``n`` is the configuration dimension for the structured charts built by
    :func:`contact_layout` and :func:`homogeneous_layout`; it is 0 for plain
    coordinate lists.
    """

    names: tuple[str, ...]
    params: Mapping[str, float] = field(default_factory=dict)
    n: int = 0
    chart: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "params", {k: float(v) for k, v in dict(self.params).items()})
        everything = list(self.names) + list(self.params)
        if len(set(everything)) != len(everything):
            raise ValueError(f"layout names are not unique: {everything}")
        for name in everything:
            if not _IDENT.fullmatch(name) or name in FUNCTIONS:
                raise ValueError(f"invalid layout name {name!r}")
        if self.chart != "custom" and self.n < 1:
            raise ValueError("layout needs n >= 1")

    @property
    def dim(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    @property
    def q(self) -> tuple[str, ...]:
        return self.names[: self.n]

    @property
    def p(self) -> tuple[str, ...]:
        if self.chart != "contact":
            raise AttributeError("p names exist only on contact layouts")
        return self.names[self.n: 2 * self.n]

    @property
    def z(self) -> str:
        return self.names[2 * self.n] if self.chart == "contact" else self.names[self.n]

    def with_params(self, **params) -> "VariableLayout":
        merged = dict(self.params)
        merged.update(params)
        return VariableLayout(self.names, merged, self.n, self.chart)

    def section_layout(self, with_z: bool = True) -> "VariableLayout":
        """Layout of ``Q x R`` (or ``Q``) for sections over this contact chart."""
        names = self.q + ((self.z,) if with_z else ())
        return VariableLayout(names, self.params, self.n, "custom")


def contact_layout(n: int, q: Sequence[str] | None = None, p: Sequence[str] | None = None,
                   z: str = "z", params: Mapping[str, float] | None = None) -> VariableLayout:
    q = tuple(q) if q is not None else tuple(f"q{i + 1}" for i in range(n))
    p = tuple(p) if p is not None else tuple(f"p{i + 1}" for i in range(n))
    if len(q) != n or len(p) != n:
        raise ValueError("need n names for q and for p")
    return VariableLayout(q + p + (z,), params or {}, n, "contact")


def homogeneous_layout(n: int, params: Mapping[str, float] | None = None) -> VariableLayout:
    """Chart ``(q^1..q^n, z, P_1..P_n, P_z)`` on ``T*(Q x R)``."""
    names = tuple(f"q{i + 1}" for i in range(n)) + ("z",) + tuple(f"P{i + 1}" for i in range(n)) + ("Pz",)
    return VariableLayout(names, params or {}, n, "homogeneous")


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Param, Neg, BinOp, Call]

# ---------------------------------------------------------------------------
# tokenizer / parser
# ---------------------------------------------------------------------------

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()])"
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # "num", "ident", "op", "eof"
    text: str
    line: int
    col: int


def tokenize(source: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind != "ws":
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, source: str, layout: VariableLayout):
        self.toks = tokenize(source)
        self.i = 0
        self.layout = layout

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def fail(self, expected):
        t = self.tok
        what = "end of input" if t.kind == "eof" else repr(t.text)
        raise ExprSyntaxError(f"unexpected {what}", t.line, t.col, expected)

    def eat(self, text):
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "eof":
            self.fail({"+", "-", "*", "/", "^", "end of input"})
        return e

    def expr(self):
        e = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.unary())
        return e

    def unary(self):
        if self.eat("-"):
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.eat("^"):
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.i += 1
            value = float(t.text)
            if not np.isfinite(value):
                raise ExprSyntaxError("numeric literal overflows", t.line, t.col)
            return Num(value)
        if t.kind == "ident":
            self.i += 1
            if t.text in FUNCTIONS:
                if not self.eat("("):
                    self.fail({"("})
                arg = self.expr()
                if not self.eat(")"):
                    self.fail({")", "+", "-", "*", "/", "^"})
                return Call(t.text, arg)
            if t.text in self.layout.names:
                return Var(t.text)
            if t.text in self.layout.params:
                return Param(t.text)
            raise UnknownIdentifier(t.text, t.line, t.col)
        if self.eat("("):
            e = self.expr()
            if not self.eat(")"):
                self.fail({")", "+", "-", "*", "/", "^"})
            return e
        self.fail({"number", "identifier", "(", "-"})


def parse(source: str, layout: VariableLayout) -> Expr:
    """Parse ``source`` against ``layout``; raises ExprSyntaxError/UnknownIdentifier."""
    expr = _Parser(source, layout).parse()
    _check_exponents(expr)
    return expr


def _mentions_variable(e: Expr) -> bool:
    if isinstance(e, Var):
        return True
    if isinstance(e, (Num, Param)):
        return False
    if isinstance(e, Neg):
        return _mentions_variable(e.operand)
    if isinstance(e, Call):
        return _mentions_variable(e.arg)
    return _mentions_variable(e.left) or _mentions_variable(e.right)


def _check_exponents(e: Expr):
    if isinstance(e, BinOp):
        if e.op == "^" and _mentions_variable(e.right):
            raise ExprSyntaxError("exponent must not depend on a variable")
        _check_exponents(e.left)
        _check_exponents(e.right)
    elif isinstance(e, Neg):
        _check_exponents(e.operand)
    elif isinstance(e, Call):
        _check_exponents(e.arg)


# ---------------------------------------------------------------------------
# pretty printer
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return 4 if e.op == "^" else _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    return 5


def _fmt_num(v: float) -> str:
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def pretty(e: Expr) -> str:
    """Render with the fewest parentheses that reparse to the same tree."""
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, (Var, Param)):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({pretty(e.arg)})"
    if isinstance(e, Neg):
        inner = pretty(e.operand)
        return "-" + (inner if _prec(e.operand) >= 3 else f"({inner})")
    if e.op == "^":
        base = pretty(e.left)
        exp = pretty(e.right)
        if _prec(e.left) < 5:
            base = f"({base})"
        if _prec(e.right) < 3:
            exp = f"({exp})"
        return f"{base}^{exp}"
    p = _PREC[e.op]
    left = pretty(e.left)
    right = pretty(e.right)
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


# ---------------------------------------------------------------------------
# compilation to a tape
# ---------------------------------------------------------------------------

_BINOPS = {"+": K.OP_ADD, "-": K.OP_SUB, "*": K.OP_MUL, "/": K.OP_DIV}
_CALLS = {"sin": K.OP_SIN, "cos": K.OP_COS, "exp": K.OP_EXP, "log": K.OP_LOG,
          "sqrt": K.OP_SQRT, "abs": K.OP_ABS, "arcsinh": K.OP_ASINH}


def fold(e: Expr, params: Mapping[str, float]) -> float:
    """Evaluate a variable-free subtree; raises EvaluationError at poles."""
    v = float(_fold(e, params))
    if not np.isfinite(v):
        raise EvaluationError("non-finite constant")
    return v


def _fold(e, params):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Param):
        return params[e.name]
    if isinstance(e, Neg):
        return -_fold(e.operand, params)
    if isinstance(e, Call):
        return float(FUNCTIONS[e.func](_fold(e.arg, params)))
    a, b = _fold(e.left, params), _fold(e.right, params)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        return float(div(a, b))
    return float(power(a, b))


class _Emitter:
    def __init__(self, layout: VariableLayout):
        self.layout = layout
        self.rows: list[tuple[int, int, int, float]] = []
        self.memo: dict = {}

    def emit(self, row):
        slot = self.memo.get(row)
        if slot is None:
            slot = len(self.rows)
            self.rows.append(row)
            self.memo[row] = slot
        return slot

    def visit(self, e: Expr) -> int:
        if not _mentions_variable(e):
            try:
                return self.emit((K.OP_CONST, 0, 0, fold(e, self.layout.params)))
            except EvaluationError:
                pass  # keep the pole in the tape so evaluation reports it
        if isinstance(e, Num):
            return self.emit((K.OP_CONST, 0, 0, e.value))
        if isinstance(e, Param):
            return self.emit((K.OP_CONST, 0, 0, self.layout.params[e.name]))
        if isinstance(e, Var):
            return self.emit((K.OP_VAR, self.layout.index(e.name), 0, 0.0))
        if isinstance(e, Neg):
            return self.emit((K.OP_NEG, self.visit(e.operand), 0, 0.0))
        if isinstance(e, Call):
            return self.emit((_CALLS[e.func], self.visit(e.arg), 0, 0.0))
        if e.op == "^":
            c = float(fold(e.right, self.layout.params))
            return self.emit((K.OP_POW, self.visit(e.left), 0, c))
        return self.emit((_BINOPS[e.op], self.visit(e.left), self.visit(e.right), 0.0))


def compile_expr(expr: Expr, layout: VariableLayout) -> TapeField:
    """Fold parameters in and lower ``expr`` to an evaluable field."""
    em = _Emitter(layout)
    last = em.visit(expr)
    rows = em.rows
    if last != len(rows) - 1:
        # result slot was memoised earlier; copy it to the end
        rows.append((K.OP_ADD, last, em.emit((K.OP_CONST, 0, 0, 0.0)), 0.0))
    return TapeField(Tape.build(rows), layout.dim, layout.names, pretty(expr))


def compile_source(source: str, layout: VariableLayout) -> TapeField:
    return compile_expr(parse(source, layout), layout)


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (used to build composed sections)."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, (Num, Param)):
        return e
    if isinstance(e, Neg):
        return Neg(substitute(e.operand, mapping))
    if isinstance(e, Call):
        return Call(e.func, substitute(e.arg, mapping))
    return BinOp(e.op, substitute(e.left, mapping), substitute(e.right, mapping))


__all__ = [
    "VariableLayout", "contact_layout", "homogeneous_layout",
    "Num", "Var", "Param", "Neg", "BinOp", "Call", "Expr",
    "parse", "pretty", "compile_expr", "compile_source", "substitute", "fold", "tokenize",
    "EvaluationError",
]
