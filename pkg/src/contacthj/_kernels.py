"""Hot loops: tape evaluation with forward-mode gradients, and RK4 for the
contact Hamilton / evolution equations.

Each kernel has a numba ``@njit`` version and a pure-numpy version with the
same signature and status codes.  Set ``CONTACTHJ_NUMBA=0`` to force the
numpy path; it is also used when numba cannot be imported.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .errors import EvaluationError

OP_CONST, OP_VAR, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_NEG, OP_POW = range(8)
OP_SIN, OP_COS, OP_EXP, OP_LOG, OP_SQRT, OP_ABS, OP_ASINH = range(8, 15)

OK = 0
ERR_DIV, ERR_LOG, ERR_SQRT, ERR_POW, ERR_NONFINITE, BLOWUP = 1, 2, 3, 4, 5, 6

STATUS_MESSAGES = {
    ERR_DIV: "division by zero",
    ERR_LOG: "log of a non-positive number",
    ERR_SQRT: "sqrt outside its domain",
    ERR_POW: "power outside its domain",
    ERR_NONFINITE: "non-finite value",
}


def _numba_requested() -> bool:
    return os.environ.get("CONTACTHJ_NUMBA", "1").strip().lower() not in {"0", "false", "no", "off"}


try:
    if not _numba_requested():
        raise ImportError
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised with CONTACTHJ_NUMBA=0
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy path: vectorised over points
# ---------------------------------------------------------------------------

def _np_tape(ops, a0, a1, consts, X, need_grad):
    # overflow and domain errors surface as status codes, not warnings
    with np.errstate(all="ignore"):
        return _np_tape_body(ops, a0, a1, consts, X, need_grad)


def _np_tape_body(ops, a0, a1, consts, X, need_grad):
    m, d = X.shape
    L = ops.shape[0]
    vals = [None] * L
    grads = [None] * L
    zero = np.zeros((m, d))
    for k in range(L):
        op = ops[k]
        a = a0[k]
        b = a1[k]
        if op == OP_CONST:
            v = np.full(m, consts[k])
            g = zero
        elif op == OP_VAR:
            v = X[:, a].copy()
            if need_grad:
                g = np.zeros((m, d))
                g[:, a] = 1.0
        elif op == OP_ADD:
            v = vals[a] + vals[b]
            if need_grad:
                g = grads[a] + grads[b]
        elif op == OP_SUB:
            v = vals[a] - vals[b]
            if need_grad:
                g = grads[a] - grads[b]
        elif op == OP_MUL:
            v = vals[a] * vals[b]
            if need_grad:
                g = grads[a] * vals[b][:, None] + vals[a][:, None] * grads[b]
        elif op == OP_DIV:
            den = vals[b]
            if np.any(den == 0.0):
                return None, None, ERR_DIV
            v = vals[a] / den
            if need_grad:
                g = (grads[a] - v[:, None] * grads[b]) / den[:, None]
        elif op == OP_NEG:
            v = -vals[a]
            if need_grad:
                g = -grads[a]
        elif op == OP_POW:
            c = consts[k]
            x = vals[a]
            if c == 0.0:
                v = np.ones(m)
                g = zero
            else:
                integral = c == math.floor(c)
                if (c < 0.0 and np.any(x == 0.0)) or (not integral and np.any(x < 0.0)):
                    return None, None, ERR_POW
                if need_grad and c < 1.0 and np.any(x == 0.0):
                    return None, None, ERR_POW
                v = x ** c
                if need_grad:
                    g = (c * x ** (c - 1.0))[:, None] * grads[a]
        else:
            x = vals[a]
            if op == OP_SIN:
                v = np.sin(x)
                dx = np.cos(x) if need_grad else None
            elif op == OP_COS:
                v = np.cos(x)
                dx = -np.sin(x) if need_grad else None
            elif op == OP_EXP:
                v = np.exp(x)
                dx = v
            elif op == OP_LOG:
                if np.any(x <= 0.0):
                    return None, None, ERR_LOG
                v = np.log(x)
                dx = 1.0 / x if need_grad else None
            elif op == OP_SQRT:
                if np.any(x < 0.0) or (need_grad and np.any(x == 0.0)):
                    return None, None, ERR_SQRT
                v = np.sqrt(x)
                dx = 0.5 / v if need_grad else None
            elif op == OP_ABS:
                v = np.abs(x)
                dx = np.sign(x)
            else:
                v = np.arcsinh(x)
                dx = 1.0 / np.sqrt(1.0 + x * x) if need_grad else None
            if need_grad:
                g = dx[:, None] * grads[a]
        vals[k] = v
        if need_grad:
            grads[k] = g
    v = vals[L - 1]
    g = grads[L - 1] if need_grad else None
    if not np.all(np.isfinite(v)) or (need_grad and not np.all(np.isfinite(g))):
        return None, None, ERR_NONFINITE
    return v, g, OK


def eval_batch_numpy(ops, a0, a1, consts, X):
    v, _, st = _np_tape(ops, a0, a1, consts, X, False)
    return (v if st == OK else np.zeros(X.shape[0])), st


def eval_grad_batch_numpy(ops, a0, a1, consts, X):
    v, g, st = _np_tape(ops, a0, a1, consts, X, True)
    if st != OK:
        return np.zeros(X.shape[0]), np.zeros(X.shape), st
    return v, np.array(g, copy=True), st


def _py_point(tape, x, d):
    """One point with Python floats; much cheaper than 1-row arrays inside RK4."""
    ops, a0, a1, consts = tape
    vals = []
    grads = []
    zero = [0.0] * d
    try:
        for k in range(len(ops)):
            op = ops[k]
            a = a0[k]
            b = a1[k]
            if op == OP_CONST:
                v, g = consts[k], zero
            elif op == OP_VAR:
                v = x[a]
                g = [0.0] * d
                g[a] = 1.0
            elif op == OP_ADD:
                v = vals[a] + vals[b]
                g = [u + w for u, w in zip(grads[a], grads[b])]
            elif op == OP_SUB:
                v = vals[a] - vals[b]
                g = [u - w for u, w in zip(grads[a], grads[b])]
            elif op == OP_MUL:
                va, vb = vals[a], vals[b]
                v = va * vb
                g = [u * vb + va * w for u, w in zip(grads[a], grads[b])]
            elif op == OP_DIV:
                den = vals[b]
                if den == 0.0:
                    return ERR_DIV, 0.0, None
                v = vals[a] / den
                g = [(u - v * w) / den for u, w in zip(grads[a], grads[b])]
            elif op == OP_NEG:
                v = -vals[a]
                g = [-u for u in grads[a]]
            elif op == OP_POW:
                c = consts[k]
                xa = vals[a]
                if c == 0.0:
                    v, g = 1.0, zero
                else:
                    integral = c == math.floor(c)
                    if (c < 0.0 and xa == 0.0) or (not integral and xa < 0.0) or \
                            (c < 1.0 and xa == 0.0):
                        return ERR_POW, 0.0, None
                    v = xa ** c
                    dx = c * xa ** (c - 1.0)
                    g = [dx * u for u in grads[a]]
            else:
                xa = vals[a]
                if op == OP_SIN:
                    v, dx = math.sin(xa), math.cos(xa)
                elif op == OP_COS:
                    v, dx = math.cos(xa), -math.sin(xa)
                elif op == OP_EXP:
                    v = math.exp(xa)
                    dx = v
                elif op == OP_LOG:
                    if xa <= 0.0:
                        return ERR_LOG, 0.0, None
                    v, dx = math.log(xa), 1.0 / xa
                elif op == OP_SQRT:
                    if xa <= 0.0:
                        return ERR_SQRT, 0.0, None
                    v = math.sqrt(xa)
                    dx = 0.5 / v
                elif op == OP_ABS:
                    v = abs(xa)
                    dx = 1.0 if xa > 0.0 else (-1.0 if xa < 0.0 else 0.0)
                else:
                    v, dx = math.asinh(xa), 1.0 / math.sqrt(1.0 + xa * xa)
                g = [dx * u for u in grads[a]]
            vals.append(v)
            grads.append(g)
    except OverflowError:
        return ERR_NONFINITE, 0.0, None
    v, g = vals[-1], grads[-1]
    if not math.isfinite(v) or not all(math.isfinite(u) for u in g):
        return ERR_NONFINITE, 0.0, None
    return OK, v, g


def _contact_rhs_py(tape, x, n, evolution):
    st, H, g = _py_point(tape, x, 2 * n + 1)
    if st != OK:
        return st, 0.0, None
    p = x[n:2 * n]
    hz = g[2 * n]
    out = g[n:2 * n] + [-(g[i] + p[i] * hz) for i in range(n)]
    s = 0.0
    for i in range(n):
        s += p[i] * g[n + i]
    out.append(s if evolution else s - H)
    return OK, H, out


def rk4_contact_numpy(ops, a0, a1, consts, x0, n, evolution, times, threshold):
    m = times.shape[0]
    d = 2 * n + 1
    tape = (ops.tolist(), a0.tolist(), a1.tolist(), consts.tolist())
    states = np.zeros((m, d))
    hvals = np.zeros(m)
    states[0] = x0
    x = [float(v) for v in x0]
    ts = times.tolist()
    for k in range(m - 1):
        h = ts[k + 1] - ts[k]
        st, H, k1 = _contact_rhs_py(tape, x, n, evolution)
        if st != OK:
            return states, hvals, st, k + 1
        hvals[k] = H
        st, _, k2 = _contact_rhs_py(tape, [u + 0.5 * h * w for u, w in zip(x, k1)], n, evolution)
        if st != OK:
            return states, hvals, st, k + 1
        st, _, k3 = _contact_rhs_py(tape, [u + 0.5 * h * w for u, w in zip(x, k2)], n, evolution)
        if st != OK:
            return states, hvals, st, k + 1
        st, _, k4 = _contact_rhs_py(tape, [u + h * w for u, w in zip(x, k3)], n, evolution)
        if st != OK:
            return states, hvals, st, k + 1
        c = h / 6.0
        x = [u + c * (r1 + 2.0 * r2 + 2.0 * r3 + r4)
             for u, r1, r2, r3, r4 in zip(x, k1, k2, k3, k4)]
        if not all(math.isfinite(u) and abs(u) <= threshold for u in x):
            return states, hvals, BLOWUP, k + 1
        states[k + 1] = x
    st, H, _ = _contact_rhs_py(tape, x, n, evolution)
    hvals[m - 1] = H
    return states, hvals, st, m


# ---------------------------------------------------------------------------
# numba path: one point at a time, gradient rows in a work array
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _nb_tape(ops, a0, a1, consts, x, vals, grads, need_grad):
        L = ops.shape[0]
        d = x.shape[0]
        for k in range(L):
            op = ops[k]
            a = a0[k]
            b = a1[k]
            if op == OP_CONST:
                vals[k] = consts[k]
                if need_grad:
                    for j in range(d):
                        grads[k, j] = 0.0
            elif op == OP_VAR:
                vals[k] = x[a]
                if need_grad:
                    for j in range(d):
                        grads[k, j] = 0.0
                    grads[k, a] = 1.0
            elif op == OP_ADD:
                vals[k] = vals[a] + vals[b]
                if need_grad:
                    for j in range(d):
                        grads[k, j] = grads[a, j] + grads[b, j]
            elif op == OP_SUB:
                vals[k] = vals[a] - vals[b]
                if need_grad:
                    for j in range(d):
                        grads[k, j] = grads[a, j] - grads[b, j]
            elif op == OP_MUL:
                va = vals[a]
                vb = vals[b]
                vals[k] = va * vb
                if need_grad:
                    for j in range(d):
                        grads[k, j] = grads[a, j] * vb + va * grads[b, j]
            elif op == OP_DIV:
                den = vals[b]
                if den == 0.0:
                    return ERR_DIV
                v = vals[a] / den
                vals[k] = v
                if need_grad:
                    for j in range(d):
                        grads[k, j] = (grads[a, j] - v * grads[b, j]) / den
            elif op == OP_NEG:
                vals[k] = -vals[a]
                if need_grad:
                    for j in range(d):
                        grads[k, j] = -grads[a, j]
            elif op == OP_POW:
                c = consts[k]
                xa = vals[a]
                if c == 0.0:
                    vals[k] = 1.0
                    if need_grad:
                        for j in range(d):
                            grads[k, j] = 0.0
                else:
                    integral = c == math.floor(c)
                    if (c < 0.0 and xa == 0.0) or (not integral and xa < 0.0):
                        return ERR_POW
                    if need_grad and c < 1.0 and xa == 0.0:
                        return ERR_POW
                    vals[k] = xa ** c
                    if need_grad:
                        dx = c * xa ** (c - 1.0)
                        for j in range(d):
                            grads[k, j] = dx * grads[a, j]
            else:
                xa = vals[a]
                dx = 0.0
                if op == OP_SIN:
                    vals[k] = math.sin(xa)
                    dx = math.cos(xa)
                elif op == OP_COS:
                    vals[k] = math.cos(xa)
                    dx = -math.sin(xa)
                elif op == OP_EXP:
                    vals[k] = math.exp(xa)
                    dx = vals[k]
                elif op == OP_LOG:
                    if xa <= 0.0:
                        return ERR_LOG
                    vals[k] = math.log(xa)
                    dx = 1.0 / xa
                elif op == OP_SQRT:
                    if xa < 0.0 or (need_grad and xa == 0.0):
                        return ERR_SQRT
                    vals[k] = math.sqrt(xa)
                    if need_grad:
                        dx = 0.5 / vals[k]
                elif op == OP_ABS:
                    vals[k] = abs(xa)
                    if xa > 0.0:
                        dx = 1.0
                    elif xa < 0.0:
                        dx = -1.0
                else:
                    vals[k] = math.asinh(xa)
                    dx = 1.0 / math.sqrt(1.0 + xa * xa)
                if need_grad:
                    for j in range(d):
                        grads[k, j] = dx * grads[a, j]
        if not math.isfinite(vals[L - 1]):
            return ERR_NONFINITE
        if need_grad:
            for j in range(d):
                if not math.isfinite(grads[L - 1, j]):
                    return ERR_NONFINITE
        return OK

    @njit(cache=True)
    def eval_batch_numba(ops, a0, a1, consts, X):
        m, d = X.shape
        L = ops.shape[0]
        out = np.zeros(m)
        vals = np.empty(L)
        grads = np.empty((1, 1))
        for i in range(m):
            st = _nb_tape(ops, a0, a1, consts, X[i], vals, grads, False)
            if st != OK:
                return out, st
            out[i] = vals[L - 1]
        return out, OK

    @njit(cache=True)
    def eval_grad_batch_numba(ops, a0, a1, consts, X):
        m, d = X.shape
        L = ops.shape[0]
        out = np.zeros(m)
        gout = np.zeros((m, d))
        vals = np.empty(L)
        grads = np.empty((L, d))
        for i in range(m):
            st = _nb_tape(ops, a0, a1, consts, X[i], vals, grads, True)
            if st != OK:
                return out, gout, st
            out[i] = vals[L - 1]
            for j in range(d):
                gout[i, j] = grads[L - 1, j]
        return out, gout, OK

    @njit(cache=True)
    def _nb_contact_rhs(ops, a0, a1, consts, x, n, evolution, vals, grads, out):
        st = _nb_tape(ops, a0, a1, consts, x, vals, grads, True)
        if st != OK:
            return st, 0.0
        L = ops.shape[0]
        H = vals[L - 1]
        hz = grads[L - 1, 2 * n]
        s = 0.0
        for i in range(n):
            hp = grads[L - 1, n + i]
            out[i] = hp
            out[n + i] = -(grads[L - 1, i] + x[n + i] * hz)
            s += x[n + i] * hp
        out[2 * n] = s if evolution else s - H
        return OK, H

    @njit(cache=True)
    def rk4_contact_numba(ops, a0, a1, consts, x0, n, evolution, times, threshold):
        m = times.shape[0]
        d = 2 * n + 1
        L = ops.shape[0]
        states = np.zeros((m, d))
        hvals = np.zeros(m)
        vals = np.empty(L)
        grads = np.empty((L, d))
        k1 = np.zeros(d)
        k2 = np.zeros(d)
        k3 = np.zeros(d)
        k4 = np.zeros(d)
        tmp = np.zeros(d)
        for j in range(d):
            states[0, j] = x0[j]
        for k in range(m - 1):
            h = times[k + 1] - times[k]
            x = states[k]
            st, H = _nb_contact_rhs(ops, a0, a1, consts, x, n, evolution, vals, grads, k1)
            if st != OK:
                return states, hvals, st, k + 1
            hvals[k] = H
            for j in range(d):
                tmp[j] = x[j] + 0.5 * h * k1[j]
            st, _ = _nb_contact_rhs(ops, a0, a1, consts, tmp, n, evolution, vals, grads, k2)
            if st != OK:
                return states, hvals, st, k + 1
            for j in range(d):
                tmp[j] = x[j] + 0.5 * h * k2[j]
            st, _ = _nb_contact_rhs(ops, a0, a1, consts, tmp, n, evolution, vals, grads, k3)
            if st != OK:
                return states, hvals, st, k + 1
            for j in range(d):
                tmp[j] = x[j] + h * k3[j]
            st, _ = _nb_contact_rhs(ops, a0, a1, consts, tmp, n, evolution, vals, grads, k4)
            if st != OK:
                return states, hvals, st, k + 1
            bad = False
            for j in range(d):
                v = x[j] + (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
                if not math.isfinite(v) or abs(v) > threshold:
                    bad = True
                tmp[j] = v
            if bad:
                return states, hvals, BLOWUP, k + 1
            for j in range(d):
                states[k + 1, j] = tmp[j]
        st, H = _nb_contact_rhs(ops, a0, a1, consts, states[m - 1], n, evolution, vals, grads, k1)
        hvals[m - 1] = H
        return states, hvals, st, m

else:  # pragma: no cover
    eval_batch_numba = eval_batch_numpy
    eval_grad_batch_numba = eval_grad_batch_numpy
    rk4_contact_numba = rk4_contact_numpy


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def _raise(status):
    raise EvaluationError(STATUS_MESSAGES.get(status, f"kernel status {status}"))


def eval_batch(tape, X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    fn = eval_batch_numba if HAVE_NUMBA else eval_batch_numpy
    v, st = fn(tape.ops, tape.arg0, tape.arg1, tape.consts, X)
    if st != OK:
        _raise(st)
    return v


def eval_grad_batch(tape, X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    fn = eval_grad_batch_numba if HAVE_NUMBA else eval_grad_batch_numpy
    v, g, st = fn(tape.ops, tape.arg0, tape.arg1, tape.consts, X)
    if st != OK:
        _raise(st)
    return v, g


def rk4_contact(tape, x0, n, evolution, times, threshold):
    """Returns ``(states, H, status, count)``; rows past ``count`` are unused."""
    fn = rk4_contact_numba if HAVE_NUMBA else rk4_contact_numpy
    return fn(tape.ops, tape.arg0, tape.arg1, tape.consts,
              np.ascontiguousarray(x0, dtype=np.float64), int(n), bool(evolution),
              np.ascontiguousarray(times, dtype=np.float64), float(threshold))
