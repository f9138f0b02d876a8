import numpy as np
import pytest

from conftest import random_ttmatrix
from ttpinv import tt as ttm
from ttpinv.oracle import DenseOracle, all_pass, bound_margins, dense_pinv_oracle, oracle_checks


def test_pinv_examples():
    np.testing.assert_allclose(dense_pinv_oracle(np.eye(4), 1.0), np.eye(4) / 2, atol=1e-15)
    P = dense_pinv_oracle(np.diag([2.0, 0.0]), 0.0)
    np.testing.assert_allclose(P.T, np.diag([0.5, 0.0]), atol=1e-15)


def test_lambda_to_zero_continuity(rng):
    U, _ = np.linalg.qr(rng.standard_normal((8, 6)))
    V, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    A = U @ np.diag(np.linspace(0.1, 2.0, 6)) @ V.T
    P = dense_pinv_oracle(A, 1e-12)
    assert np.linalg.norm(P - np.linalg.pinv(A).T) <= 1e-8


def test_general_rhs(rng):
    A = rng.standard_normal((6, 4))
    B = rng.standard_normal((4, 3))
    lam = 0.3
    expect = np.linalg.solve(A @ A.T + lam * np.eye(6), A @ B)
    np.testing.assert_allclose(dense_pinv_oracle(A, lam, B), expect, atol=1e-12)
    orc = DenseOracle(A, lam)
    # the regularized optimum with target B^T beats small perturbations
    F0 = orc.objective(orc.pstar(B), B)
    for _ in range(5):
        assert orc.objective(orc.pstar(B) + 1e-3 * rng.standard_normal((6, 3)), B) >= F0


def test_f_min_and_kappa():
    orc = DenseOracle(np.diag([2.0, 1.0, 0.0]), 0.0)
    assert orc.rank == 2
    assert orc.f_min() == 1.0
    assert orc.kappa() == np.inf
    orc = DenseOracle(np.diag([2.0, 1.0]), 1.0)
    assert orc.kappa() == pytest.approx(5.0 / 2.0)
    assert orc.f_min() == pytest.approx(2 - 4 / 5 - 1 / 2)


def test_size_guard():
    with pytest.raises(ValueError, match="limited"):
        DenseOracle(np.zeros((2**13, 2**12)))


def test_checks_at_optimum(rng):
    A = random_ttmatrix(rng, [2] * 3, [2] * 3, [1, 2, 2, 1])
    lam = 0.1
    Ad = ttm.tt_to_dense(A)
    Ps = dense_pinv_oracle(Ad, lam)
    rep = oracle_checks(Ad, Ps, lam)
    assert abs(rep["G"]) <= 1e-10
    for k, v in bound_margins(rep).items():
        assert v is None or abs(v) <= 1e-10, (k, v)


def test_checks_random_p(rng):
    for lam in (0.0, 1e-2, 1.0):
        A = random_ttmatrix(rng, [2] * 3, [2] * 3, [1, 2, 2, 1])
        P = random_ttmatrix(rng, [2] * 3, [2] * 3, [1, 2, 2, 1])
        rep = oracle_checks(A, P, lam, pivot=1)
        assert set(bound_margins(rep)) == {"gap_identity", "symmetricity", "symmetricity_general", "eigenvalues",
                                           "singular_values", "convergence_bound", "interlacing_low",
                                           "interlacing_high"}
        # the factor-2 symmetricity bound is not claimed for arbitrary P here
        general = {k: v for k, v in rep.items() if k != "symmetricity"}
        assert all_pass(general)
        assert rep["gap_identity"] >= -1e-9 * abs(rep["F"])
        assert all(isinstance(v, float) for v in bound_margins(rep).values() if v is not None)


def test_convergence_bound_skipped_when_singular():
    A = np.diag([1.0, 0.0])
    rep = oracle_checks(A, np.eye(2), 0.0)
    assert rep["convergence_bound"] is None
    assert all_pass(rep)


def test_symmetricity_factor_two_counterexample():
    # A = I, lam = 0, P = I + K with K antisymmetric: ||P^T A - A^T P||^2 = 4||K||^2
    # while G = ||K||^2, so only the factor-4 form holds away from the optimum
    K = np.array([[0.0, 1.0], [-1.0, 0.0]])
    rep = oracle_checks(np.eye(2), np.eye(2) + K, 0.0)
    assert rep["G"] == pytest.approx(2.0)
    assert rep["symmetricity"] == pytest.approx(-4.0)
    assert rep["symmetricity_general"] == pytest.approx(0.0, abs=1e-12)


def test_symmetricity_near_optimum(rng):
    A = ttm.tt_to_dense(random_ttmatrix(rng, [2] * 3, [2] * 3, [1, 2, 2, 1]))
    lam = 1e-2
    Ps = dense_pinv_oracle(A, lam)
    for _ in range(10):
        rep = oracle_checks(A, Ps + 1e-6 * rng.standard_normal(Ps.shape), lam)
        assert rep["symmetricity_general"] >= -1e-12
