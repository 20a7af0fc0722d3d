import json
import os
import subprocess
import sys

import numpy as np
import pytest

from contacthj import _kernels as K
from contacthj.exprdsl import compile_source, contact_layout
from contacthj.flows import sample_times

from _generators import random_hamiltonian

needs_numba = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba backend disabled")

SOURCES = [
    "p1^2/(2*m) + q1^2/2 + lam*z",
    "sin(q1)*exp(p1/3) + sqrt(1 + z^2)*log(2 + cos(q1)) - arcsinh(p1*z)/(3 + abs(z))",
    "(q1^2 + 1)^1.5 - z^3 + (p1^2 + 2)^-2",
]


def _tape(source):
    return compile_source(source, contact_layout(1, params={"m": 1.0, "lam": 0.1})).tape


@needs_numba
@pytest.mark.parametrize("source", SOURCES)
def test_evaluation_kernels_agree(source):
    t = _tape(source)
    X = np.random.default_rng(0).uniform(-2, 2, size=(200, 3))
    v1, s1 = K.eval_batch_numba(t.ops, t.arg0, t.arg1, t.consts, X)
    v2, s2 = K.eval_batch_numpy(t.ops, t.arg0, t.arg1, t.consts, X)
    assert s1 == s2 == K.OK
    assert np.allclose(v1, v2, rtol=1e-14, atol=1e-14)
    v1, g1, s1 = K.eval_grad_batch_numba(t.ops, t.arg0, t.arg1, t.consts, X)
    v2, g2, s2 = K.eval_grad_batch_numpy(t.ops, t.arg0, t.arg1, t.consts, X)
    assert s1 == s2 == K.OK
    assert np.allclose(g1, g2, rtol=1e-13, atol=1e-13)


@needs_numba
def test_random_polynomial_kernels_agree():
    rng = np.random.default_rng(1)
    for _ in range(10):
        t = random_hamiltonian(rng, 2).tape
        X = rng.uniform(-2, 2, size=(50, 5))
        _, g1, _ = K.eval_grad_batch_numba(t.ops, t.arg0, t.arg1, t.consts, X)
        _, g2, _ = K.eval_grad_batch_numpy(t.ops, t.arg0, t.arg1, t.consts, X)
        assert np.allclose(g1, g2, rtol=1e-12, atol=1e-12)


@needs_numba
@pytest.mark.parametrize("source, x", [("log(q1)", [0.0, 0.0, 0.0]), ("1/z", [1.0, 1.0, 0.0]),
                                       ("sqrt(p1)", [0.0, -1.0, 0.0])])
def test_error_statuses_agree(source, x):
    t = _tape(source)
    X = np.array([x])
    s1 = K.eval_batch_numba(t.ops, t.arg0, t.arg1, t.consts, X)[1]
    s2 = K.eval_batch_numpy(t.ops, t.arg0, t.arg1, t.consts, X)[1]
    assert s1 == s2 != K.OK


@needs_numba
@pytest.mark.parametrize("evolution", [False, True])
@pytest.mark.parametrize("source", [
    SOURCES[0],
    "p1^2/2 - cos(q1) + 0.1*sin(z)*sqrt(1 + p1^2) + log(2 + cos(q1))*arcsinh(z)/(3 + abs(z))",
    "(p1^2 + 1)^1.5/3 + q1^4/4 - exp(-z^2)*q1",
])
def test_rk4_kernels_agree(source, evolution):
    t = _tape(source)
    times = sample_times(2.0, 1e-2)
    x0 = np.array([1.0, 1.0, 1.0])
    a = K.rk4_contact_numba(t.ops, t.arg0, t.arg1, t.consts, x0, 1, evolution, times, 1e12)
    b = K.rk4_contact_numpy(t.ops, t.arg0, t.arg1, t.consts, x0, 1, evolution, times, 1e12)
    assert a[2] == b[2] == K.OK and a[3] == b[3]
    assert np.allclose(a[0], b[0], rtol=1e-13, atol=1e-13)
    assert np.allclose(a[1], b[1], rtol=1e-13, atol=1e-13)


@needs_numba
@pytest.mark.parametrize("source, x0, status", [
    ("-z^2", [0.0, 0.0, 1.0], K.BLOWUP),
    ("-p1 + log(q1)", [0.5, 0.0, 0.0], K.ERR_LOG),
    ("exp(exp(p1)) - 10*q1", [0.0, 0.0, 0.0], None),
])
def test_rk4_stops_identically(source, x0, status):
    t = _tape(source)
    times = sample_times(2.0, 1e-3)
    x0 = np.array(x0)
    a = K.rk4_contact_numba(t.ops, t.arg0, t.arg1, t.consts, x0, 1, False, times, 1e12)
    b = K.rk4_contact_numpy(t.ops, t.arg0, t.arg1, t.consts, x0, 1, False, times, 1e12)
    assert a[2] == b[2] != K.OK and a[3] == b[3]
    if status is not None:
        assert a[2] == status
    assert np.allclose(a[0][:a[3]], b[0][:b[3]], rtol=1e-12, atol=1e-12)


def test_environment_flag_selects_numpy():
    code = ("import json, contacthj\n"
            "from contacthj.exprdsl import compile_source, contact_layout\n"
            "from contacthj.flows import integrate\n"
            "H = compile_source('p1^2/2 + q1^2/2 + 0.1*z', contact_layout(1))\n"
            "tr = integrate(H, 'hamiltonian', [1, 1, 1], 1.0, 0.01)\n"
            "print(json.dumps({'backend': contacthj.BACKEND, 'end': tr.states[-1].tolist()}))\n")
    env = dict(os.environ, CONTACTHJ_NUMBA="0")
    proc = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                          check=True)
    out = json.loads(proc.stdout)
    assert out["backend"] == "numpy"
    from contacthj.flows import integrate
    H = compile_source("p1^2/2 + q1^2/2 + 0.1*z", contact_layout(1))
    here = integrate(H, "hamiltonian", [1, 1, 1], 1.0, 0.01).states[-1]
    assert np.allclose(out["end"], here, rtol=1e-13, atol=1e-13)
