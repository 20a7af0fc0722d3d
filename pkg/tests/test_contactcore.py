import numpy as np
import pytest

from contacthj.contactcore import (ContactState, CotangentVector, TangentVector, bracket_field,
                                   contact_field, d_eta, darboux_frame, differential, eta,
                                   evolution_field, flat, hamiltonian_field, jacobi_bivector,
                                   jacobi_bracket, jacobi_bracket_batch, lambda_batch, lie_bracket,
                                   reeb, sharp, sharp_lambda)
from contacthj.exprdsl import compile_source, contact_layout

from _generators import random_hamiltonian, random_states

L1 = contact_layout(1, params={"m": 1.0, "lam": 0.1})


def state(q, p, z):
    return ContactState(q, p, z)


def vec(x, comps):
    return TangentVector(x, np.asarray(comps, dtype=float))


def test_state_validation():
    with pytest.raises(ValueError):
        ContactState([1.0, 2.0], [1.0], 0.0)
    with pytest.raises(ValueError):
        ContactState([np.nan], [1.0], 0.0)
    x = ContactState.from_array([1, 2, 3, 4, 5])
    assert x.n == 2 and x.z == 5.0
    assert x.as_array().tolist() == [1, 2, 3, 4, 5]


def test_eta_on_reeb_and_coordinate_vectors():
    x = state([1.0], [2.0], 0.0)
    assert eta(x)(vec(x, [0, 0, 1])) == 1.0
    assert eta(x)(vec(x, [1, 0, 0])) == -2.0
    assert eta(x)(vec(x, [0, 1, 0])) == 0.0


def test_d_eta_is_the_canonical_pairing():
    x = state([0.0], [0.0], 0.0)
    assert d_eta(vec(x, [1, 0, 0]), vec(x, [0, 1, 0])) == 1.0
    assert d_eta(vec(x, [0, 1, 0]), vec(x, [1, 0, 0])) == -1.0
    assert d_eta(vec(x, [0, 0, 1]), vec(x, [3, -2, 5])) == 0.0


def test_flat_of_q_direction():
    # i_v d eta = (-v_p) dq + v_q dp ; eta(v) = v_z - p v_q = -2 ; eta = -p dq + dz
    x = state([0.0], [2.0], 0.0)
    by_hand = np.array([0.0, 1.0, 0.0]) + (-2.0) * np.array([-2.0, 0.0, 1.0])
    assert flat(vec(x, [1, 0, 0])).components.tolist() == by_hand.tolist() == [4.0, 1.0, -2.0]


def test_flat_of_reeb_is_eta_and_sharp_inverts():
    rng = np.random.default_rng(0)
    for n in (1, 2, 3):
        for _ in range(50):
            x = ContactState.from_array(rng.uniform(-3, 3, 2 * n + 1))
            r = vec(x, np.eye(2 * n + 1)[-1])
            assert np.allclose(flat(r).components, eta(x).components, atol=1e-14)
            v = vec(x, rng.normal(size=2 * n + 1))
            assert np.allclose(sharp(flat(v)).components, v.components, atol=1e-12)
            a = CotangentVector(x, rng.normal(size=2 * n + 1))
            assert np.allclose(flat(sharp(a)).components, a.components, atol=1e-12)


def test_hamiltonian_field_example():
    H = compile_source("p1^2/(2*m) + q1^2/2 + lam*z", L1)
    assert hamiltonian_field(H).evaluate([1, 1, 1]) == pytest.approx([1.0, -1.1, -0.1], abs=1e-15)
    assert evolution_field(H).evaluate([1, 1, 1]) == pytest.approx([1.0, -1.1, 1.0], abs=1e-15)


def test_constant_hamiltonian_is_minus_c_reeb():
    H = compile_source("2.5", contact_layout(2))
    assert hamiltonian_field(H).evaluate(np.ones(5)).tolist() == [0, 0, 0, 0, -2.5]
    assert evolution_field(H).evaluate(np.ones(5)).tolist() == [0, 0, 0, 0, 0]


def test_field_of_z_generates_scaling():
    H = compile_source("z", contact_layout(1))
    assert hamiltonian_field(H).evaluate([0.3, 2.0, 5.0]).tolist() == [0.0, -2.0, -5.0]


def test_field_kind_is_validated():
    with pytest.raises(ValueError):
        contact_field(compile_source("z", contact_layout(1)), "gradient")


def test_flat_of_hamiltonian_field():
    # flat(X_H) = dH - (R(H) + H) eta
    rng = np.random.default_rng(3)
    for n in (1, 2):
        H = random_hamiltonian(rng, n)
        for x in random_states(rng, n, 20):
            s = ContactState.from_array(x)
            xh = vec(s, hamiltonian_field(H).evaluate(x))
            dH = H.gradient(x)
            expected = dH - (dH[-1] + H.value(x)) * eta(s).components
            assert np.allclose(flat(xh).components, expected, atol=1e-10)


def test_generic_and_batched_components_agree():
    rng = np.random.default_rng(4)
    H = random_hamiltonian(rng, 2)
    X = random_states(rng, 2, 10)
    for kind in ("hamiltonian", "evolution"):
        f = contact_field(H, kind)
        generic = np.array([[c.value(x) for c in f.components] for x in X])
        assert np.allclose(generic, f.evaluate_batch(X), atol=1e-12)


def test_darboux_frame_spans_the_contact_distribution():
    rng = np.random.default_rng(2)
    for n in (1, 2, 3):
        A, B = darboux_frame(n)
        for x in random_states(rng, n, 5):
            s = ContactState.from_array(x)
            for v in A + B:
                assert eta(s)(vec(s, v.evaluate(x))) == pytest.approx(0.0, abs=1e-14)


def test_darboux_frame_brackets():
    for n in (1, 2, 3):
        A, B = darboux_frame(n)
        x = np.linspace(-1, 1, 2 * n + 1)
        for i in range(n):
            for j in range(n):
                ab = lie_bracket(A[i], B[j], x).components
                expected = -np.eye(2 * n + 1)[-1] if i == j else np.zeros(2 * n + 1)
                assert np.allclose(ab, expected, atol=1e-14)
                assert np.allclose(lie_bracket(A[i], A[j], x).components, 0)
                assert np.allclose(lie_bracket(B[i], B[j], x).components, 0)
            assert np.allclose(lie_bracket(A[i], reeb(n), x).components, 0)


def test_bracket_examples():
    lay = contact_layout(1)
    q, p, z = (compile_source(s, lay) for s in ("q1", "p1", "z"))
    assert jacobi_bracket(q, p, [0, 0, 0]) == -1.0
    assert jacobi_bracket(p, q, [0, 0, 0]) == 1.0
    at = [0.7, -0.2, 3.0]
    assert jacobi_bracket(z, q, at) == pytest.approx(0.7)
    one = compile_source("1", lay)
    # {1, f} = -R(f): the Jacobi vector field is E = -R
    assert jacobi_bracket(one, z, at) == -1.0


def test_lambda_is_minus_d_eta_of_sharps():
    rng = np.random.default_rng(5)
    n = 2
    f, g = random_hamiltonian(rng, n), random_hamiltonian(rng, n)
    X = random_states(rng, n, 30)
    lam = lambda_batch(f, g, X)
    for x, l in zip(X, lam):
        a, b = differential(f, x), differential(g, x)
        assert jacobi_bivector(a, b) == pytest.approx(l, abs=1e-10)
        assert sharp_lambda(a).components @ b.components == pytest.approx(l, abs=1e-10)


def test_sharp_lambda_of_df_is_field_plus_f_reeb():
    rng = np.random.default_rng(6)
    f = random_hamiltonian(rng, 2)
    for x in random_states(rng, 2, 10):
        expected = hamiltonian_field(f).evaluate(x) + f.value(x) * np.eye(5)[-1]
        assert np.allclose(sharp_lambda(differential(f, x)).components, expected, atol=1e-12)


def test_bracket_is_exactly_antisymmetric():
    rng = np.random.default_rng(8)
    f, g = random_hamiltonian(rng, 2), random_hamiltonian(rng, 2)
    X = random_states(rng, 2, 100)
    assert np.array_equal(lambda_batch(f, g, X), -lambda_batch(g, f, X))
    assert np.allclose(jacobi_bracket_batch(f, g, X), -jacobi_bracket_batch(g, f, X), atol=1e-12)


def test_bracket_field_matches_pointwise_bracket_and_satisfies_jacobi():
    rng = np.random.default_rng(9)
    lay = contact_layout(1)
    f, g, h = (random_hamiltonian(rng, 1, degree=3, terms=5) for _ in range(3))
    X = random_states(rng, 1, 20, -1, 1)
    fg = bracket_field(f, g)
    assert np.allclose(fg.values(X), jacobi_bracket_batch(f, g, X), atol=1e-10)
    cyc = (bracket_field(f, bracket_field(g, h)).values(X)
           + bracket_field(g, bracket_field(h, f)).values(X)
           + bracket_field(h, bracket_field(f, g)).values(X))
    assert np.max(np.abs(cyc)) < 1e-8
    assert lay.dim == 3
