import logging
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.lti_core import (
    DiscreteProblem, Plant, RealizationError, TransferFunctionSpec, build_phi, build_psi,
    controllability_matrix, discretize, plant_from_document, psi_operator, markov_parameters, realize, zoh,
)


# ── Realization ──────────────────────────────────────────────────────────────

def test_realize_double_integrator_companion_form():
    A, B = realize(TransferFunctionSpec(poles=(0, 0)))
    assert_array_equal(A, [[0.0, 0.0], [1.0, 0.0]])
    assert_array_equal(B, [[1.0], [0.0]])
    assert_allclose(np.poly(A), [1.0, 0.0, 0.0], atol=1e-15)


def test_realize_first_order():
    A, B = realize(TransferFunctionSpec(poles=(-1,)))
    assert_array_equal(A, [[-1.0]])
    assert_array_equal(B, [[1.0]])


def test_realize_lightly_damped_pair():
    A, B = realize(TransferFunctionSpec(poles=([-0.025, 1.0], [-0.025, -1.0])))
    assert_allclose(A[0], [-0.05, -1.000625], rtol=1e-12)
    assert_allclose(A[1], [1.0, 0.0])
    assert_allclose(np.poly(A), [1.0, 0.05, 1.000625], rtol=1e-12)
    assert A.dtype == float


def test_zeros_do_not_change_state_matrices():
    poles = ((0, 0),) * 4 + ((0, 1), (0, -1))
    A5, B5 = realize(TransferFunctionSpec(poles=poles))
    A7, B7 = realize(TransferFunctionSpec(poles=poles, zeros=((1, 0), (2, 0))))
    assert_array_equal(A5, A7)
    assert_array_equal(B5, B7)


def test_non_conjugate_pole_rejected():
    with pytest.raises(RealizationError, match="conjugate"):
        TransferFunctionSpec(poles=((-1, 1), (-1, 2)))


def test_improper_transfer_function_rejected():
    with pytest.raises(RealizationError, match="strictly proper"):
        TransferFunctionSpec(zeros=(-1, -2), poles=(-3, -4))


# ── Plant ────────────────────────────────────────────────────────────────────

def test_plant_validation():
    with pytest.raises(ValueError):
        Plant(A=[[0.0, 1.0]], B=[1.0], xi=[1.0], T=1.0)
    with pytest.raises(ValueError):
        Plant(A=[[0.0]], B=[1.0], xi=[1.0, 2.0], T=1.0)
    with pytest.raises(ValueError):
        Plant(A=[[0.0]], B=[1.0], xi=[1.0], T=0.0)
    with pytest.raises(ValueError):
        Plant(A=[[0.0]], B=[1.0], xi=[1.0], T=1.0, u_max=-1.0)


def test_uncontrollable_plant_warns(caplog):
    with caplog.at_level(logging.WARNING):
        plant = Plant(A=np.eye(2), B=[1.0, 0.0], xi=[1.0, 1.0], T=1.0)
    assert "not controllable" in caplog.text
    assert not plant.is_controllable()


def test_normal_plant_condition(double_integrator):
    assert double_integrator.is_controllable()
    assert not double_integrator.is_normal()
    A, B = realize(TransferFunctionSpec(poles=((-0.025, 1), (-0.025, -1))))
    assert Plant(A=A, B=B, xi=[1, 1], T=20).is_normal()


def test_controllability_matrix_columns():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    assert_array_equal(controllability_matrix(A, [0.0, 1.0]), [[0.0, 1.0], [1.0, 0.0]])


def test_plant_arrays_are_read_only(double_integrator):
    with pytest.raises(ValueError):
        double_integrator.A[0, 0] = 5.0


def test_plant_from_documents():
    p = plant_from_document({"poles": [[0, 0], [0, 0]], "zeros": [], "T": 3, "x0": [1, 0]})
    assert p.n == 2 and p.T == 3.0 and p.u_max == 1.0
    q = plant_from_document({"A": [[0, 1], [0, 0]], "B": [0, 1], "T": 5, "x0": [1, 0], "u_max": 2})
    assert_array_equal(q.B, [[0.0], [1.0]])
    assert q.u_max == 2.0
    with pytest.raises(ValueError):
        plant_from_document({"T": 1, "x0": [1]})


# ── Zero-order hold ─────────────────────────────────────────────────────────

def test_zoh_integrator():
    Ad, Bd = zoh([[0.0]], [[1.0]], 0.5)
    assert_allclose(Ad, [[1.0]])
    assert_allclose(Bd, [0.5])


def test_zoh_double_integrator_is_exact():
    Ad, Bd = zoh([[0.0, 1.0], [0.0, 0.0]], [0.0, 1.0], 0.1)
    assert_allclose(Ad, [[1.0, 0.1], [0.0, 1.0]], atol=1e-15)
    assert_allclose(Bd, [0.005, 0.1], rtol=1e-12)


def test_zoh_stable_scalar():
    Ad, Bd = zoh([[-1.0]], [[1.0]], 0.1)
    assert Ad[0, 0] == pytest.approx(math.exp(-0.1), rel=1e-14)
    assert Bd[0] == pytest.approx(1.0 - math.exp(-0.1), rel=1e-12)


def _taylor_zoh(A, B, h, terms=40):
    n = A.shape[0]
    Ad = np.eye(n)
    S = np.eye(n) * h
    term = np.eye(n)
    for k in range(1, terms):
        term = term @ (A * h) / k
        Ad = Ad + term
        S = S + term * h / (k + 1)
    return Ad, S @ B.reshape(-1)


def test_zoh_matches_taylor_series(rng):
    for _ in range(20):
        n = rng.integers(1, 8)
        A = rng.standard_normal((n, n))
        h = 1.0 / max(np.linalg.norm(A, 2), 1.0)
        B = rng.standard_normal(n)
        Ad, Bd = zoh(A, B, h)
        Ad_ref, Bd_ref = _taylor_zoh(A, B, h)
        assert np.linalg.norm(Ad - Ad_ref) <= 1e-10 * np.linalg.norm(Ad_ref)
        assert np.linalg.norm(Bd - Bd_ref) <= 1e-10 * np.linalg.norm(Bd_ref)


# ── Stacked operators ───────────────────────────────────────────────────────

def test_phi_single_sample_is_bd():
    Bd = np.array([0.5, 1.0])
    assert_array_equal(build_phi(np.eye(2), Bd, 1), Bd.reshape(2, 1))


def test_phi_double_integrator_unit_step():
    Ad = np.array([[1.0, 1.0], [0.0, 1.0]])
    Bd = np.array([0.5, 1.0])
    assert_allclose(build_phi(Ad, Bd, 2), [[1.5, 0.5], [1.0, 1.0]])


def test_psi_blocks_for_three_samples():
    Ad = np.array([[1.0, 1.0], [0.0, 1.0]])
    Bd = np.array([0.5, 1.0])
    psi = build_psi(Ad, Bd, 3)
    assert psi.shape == (4, 2)
    assert_allclose(psi[:2, 0], Bd)
    assert_allclose(psi[:2, 1], 0.0)
    assert_allclose(psi[2:, 0], Ad @ Bd)
    assert_allclose(psi[2:, 1], Bd)


def test_psi_operator_matches_dense(rng):
    n, N = 3, 9
    Ad = rng.standard_normal((n, n)) * 0.5
    Bd = rng.standard_normal(n)
    dense = build_psi(Ad, Bd, N)
    op = psi_operator(markov_parameters(Ad, Bd, N), N)
    u = rng.standard_normal(N - 1)
    y = rng.standard_normal((N - 1) * n)
    assert_allclose(op.matvec(u), dense @ u, atol=1e-10)
    assert_allclose(op.rmatvec(y), dense.T @ y, atol=1e-10)


# ── discretize ──────────────────────────────────────────────────────────────

def test_discretize_fields(double_integrator):
    d = discretize(double_integrator, 50)
    assert isinstance(d, DiscreteProblem)
    assert d.N * d.h == pytest.approx(double_integrator.T, rel=1e-15)
    assert d.PhiN.shape == (2, 50)
    assert d.c_state.shape == (49, 2)
    for k in (0, 17, 49):
        assert_allclose(d.PhiN[:, k], np.linalg.matrix_power(d.Ad, 49 - k) @ d.Bd, atol=1e-12)
    assert_allclose(d.b_terminal, -np.linalg.matrix_power(d.Ad, 50) @ double_integrator.xi, atol=1e-12)
    assert_allclose(d.c_state[4], np.linalg.matrix_power(d.Ad, 5) @ double_integrator.xi, atol=1e-12)
    assert d.PsiN.shape == (98, 49)


def test_discretize_is_deterministic(double_integrator):
    a = discretize(double_integrator, 40)
    b = discretize(double_integrator, 40)
    assert_array_equal(a.Ad, b.Ad)
    assert_array_equal(a.PhiN, b.PhiN)
    assert_array_equal(a.c_state, b.c_state)


def test_discretize_rejects_too_few_samples(double_integrator):
    with pytest.raises(ValueError):
        discretize(double_integrator, 1)
