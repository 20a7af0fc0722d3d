import json
import time

import numpy as np
import pytest

from contacthj.diffcore import FunctionField
from contacthj.errors import EvaluationError
from contacthj.exprdsl import compile_source, contact_layout
from contacthj.flows import dissipation_report, integrate, sample_times

L1 = contact_layout(1, params={"m": 1.0, "lam": 0.1})
H_LD = "p1^2/(2*m) + q1^2/2 + lam*z"


def test_sample_times_end_exactly_on_t_end():
    t = sample_times(1.0, 0.3)
    assert t.tolist() == pytest.approx([0.0, 0.3, 0.6, 0.9, 1.0])
    assert t[-1] == 1.0
    t = sample_times(10.0, 1e-3)
    assert len(t) == 10001 and t[-1] == 10.0
    assert sample_times(0.05, 0.1).tolist() == [0.0, 0.05]
    with pytest.raises(ValueError):
        sample_times(1.0, 0.0)


def test_dissipation_law():
    H = compile_source(H_LD, L1)
    integrate(H, "hamiltonian", [1, 1, 1], 0.01, 1e-3)  # compile the kernel
    t0 = time.perf_counter()
    traj = integrate(H, "hamiltonian", [1, 1, 1], 10.0, 1e-3)
    elapsed = time.perf_counter() - t0
    exact = 1.1 * np.exp(-0.1 * traj.times)
    assert np.max(np.abs(traj.H - exact) / exact) < 1e-6
    assert elapsed < 2.0
    rep = dissipation_report(traj, H)
    assert rep.rate_defect < 1e-6
    assert rep.decay_rate == pytest.approx(0.1, rel=1e-6)


def test_evolution_flow_conserves_h():
    H = compile_source(H_LD, L1)
    traj = integrate(H, "evolution", [1, 1, 1], 10.0, 1e-3)
    assert np.max(np.abs(traj.H - traj.H[0])) < 1e-8
    assert dissipation_report(traj, H).conservation_drift < 1e-8


def test_without_dissipation_h_is_conserved():
    H = compile_source(H_LD, L1.with_params(lam=0.0))
    traj = integrate(H, "hamiltonian", [1, 1, 1], 10.0, 1e-3)
    assert np.max(np.abs(traj.H - traj.H[0])) < 1e-8


def test_rk4_is_fourth_order():
    H = compile_source("p1^2/2 + sin(q1) + 0.3*z*q1", contact_layout(1))
    x0 = [0.4, -0.2, 0.1]
    ref = integrate(H, "hamiltonian", x0, 2.0, 0.1 / 64).states[-1]
    e1 = np.max(np.abs(integrate(H, "hamiltonian", x0, 2.0, 0.1).states[-1] - ref))
    e2 = np.max(np.abs(integrate(H, "hamiltonian", x0, 2.0, 0.05).states[-1] - ref))
    assert 12.0 <= e1 / e2 <= 20.0


def test_kernel_and_generic_paths_agree():
    H = compile_source(H_LD, L1)
    G = FunctionField(lambda *a: H(*a), 3)
    a = integrate(H, "hamiltonian", [1, 1, 1], 1.0, 0.01)
    b = integrate(G, "hamiltonian", [1, 1, 1], 1.0, 0.01)
    assert np.allclose(a.states, b.states, rtol=1e-13, atol=1e-13)
    assert np.allclose(a.H, b.H, rtol=1e-13, atol=1e-13)


def test_blowup_returns_partial_trajectory():
    # z' = z^2 from z = 1 is singular at t = 1
    H = compile_source("-z^2", contact_layout(1))
    traj = integrate(H, "hamiltonian", [0.0, 0.0, 1.0], 2.0, 1e-3)
    assert traj.blew_up
    assert traj.times[-1] < 1.01
    assert np.all(np.isfinite(traj.states))
    G = FunctionField(lambda *a: H(*a), 3)
    assert integrate(G, "hamiltonian", [0.0, 0.0, 1.0], 2.0, 1e-3).blew_up


def test_pole_on_the_path_raises():
    H = compile_source("-p1 + log(q1)", contact_layout(1))
    with pytest.raises(EvaluationError):
        integrate(H, "hamiltonian", [0.5, 0.0, 0.0], 1.0, 0.01)


def test_bad_arguments():
    H = compile_source(H_LD, L1)
    with pytest.raises(ValueError):
        integrate(H, "gradient", [1, 1, 1], 1.0, 0.1)
    with pytest.raises(ValueError):
        integrate(H, "hamiltonian", [1, 1], 1.0, 0.1)


def test_output_formats():
    H = compile_source(H_LD, L1)
    traj = integrate(H, "evolution", [1, 1, 1], 0.3, 0.1)
    lines = traj.to_csv().splitlines()
    assert lines[0] == "t,q1,p1,z,H"
    assert len(lines) == 5
    assert [float(v) for v in lines[1].split(",")] == [0.0, 1.0, 1.0, 1.0, pytest.approx(1.1)]
    recs = json.loads(traj.to_json())
    assert recs[-1]["t"] == pytest.approx(0.3)
    assert set(recs[0]) == {"t", "q1", "p1", "z", "H"}


def test_constant_trajectory_has_zero_drift():
    H = compile_source("0", contact_layout(1))
    traj = integrate(H, "hamiltonian", [1.0, 2.0, 3.0], 1.0, 0.1)
    assert np.all(traj.states == traj.states[0])
    rep = dissipation_report(traj, H)
    assert rep.conservation_drift == 0.0 and rep.rate_defect == 0.0 and rep.decay_rate == 0.0
