import numpy as np
import pytest

from ttpinv import tt as ttm
from ttpinv.gallery import (CIRCULANT_MAX_N, ProblemSpec, circulant_sigma, convection_c,
                            convection_exact, convection_grid, gen_circulant_prescribed,
                            gen_convection_diffusion, gen_laplace, gen_random_svd, shift_operator)


def tridiag(n):
    return 2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)


def test_laplace_n2():
    expect = [[2, -1, 0, 0], [-1, 2, -1, 0], [0, -1, 2, -1], [0, 0, -1, 2]]
    np.testing.assert_array_equal(ttm.tt_to_dense(gen_laplace(2)), expect)


@pytest.mark.parametrize("N", [3, 4, 7])
def test_laplace_dense_exact(N):
    A = ttm.tt_to_dense(gen_laplace(N))
    np.testing.assert_array_equal(A, tridiag(2**N))
    np.testing.assert_array_equal(A, A.T)


@pytest.mark.parametrize("N", [2, 5, 8, 12])
def test_laplace_ranks(N):
    A = gen_laplace(N)
    assert ttm.tt_round(A, 1e-12).max_rank <= 3
    assert A.max_rank <= 3


def test_shift_operator():
    np.testing.assert_array_equal(ttm.tt_to_dense(shift_operator(3)), np.eye(8, k=-1))


def test_circulant_sigma_examples():
    s = circulant_sigma(6, 0.5)
    J = 64
    assert s[0] == 1.0
    assert s[J // 2] == 0.0
    assert circulant_sigma(6, 0.7).min() == pytest.approx(0.2 / 0.7, rel=1e-14)
    c = np.fft.ifft(s)
    assert np.abs(c.imag).max() <= 1e-12


@pytest.mark.parametrize("N,B", [(4, 0.5), (6, 0.7), (8, 0.5)])
def test_circulant_spectrum(N, B):
    A = gen_circulant_prescribed(N, B)
    assert A.shape == (2 ** (N + 1), 2**N)
    Ad = ttm.tt_to_dense(A)
    sv = np.linalg.svd(Ad, compute_uv=False)
    np.testing.assert_allclose(sv, np.sort(circulant_sigma(N, B))[::-1], atol=1e-8)
    # the two stacked blocks are the same circulant
    J = 2**N
    C = np.sqrt(2.0) * Ad[:J]
    np.testing.assert_allclose(Ad[J:], Ad[:J], atol=1e-14)
    np.testing.assert_allclose(C[1:, 1:], C[:-1, :-1], atol=1e-10)


def test_circulant_guard():
    with pytest.raises(ValueError):
        gen_circulant_prescribed(CIRCULANT_MAX_N + 1)
    with pytest.raises(ValueError):
        gen_circulant_prescribed(4, 0.0)


def test_random_svd():
    A, (U, S, V) = gen_random_svd(6, 0.5, seed=11, return_factors=True)
    assert A.ranks == (1,) * 7
    Ad = ttm.tt_to_dense(A)
    Ud, Vd = ttm.tt_to_dense(U), ttm.tt_to_dense(V)
    np.testing.assert_allclose(Ud.T @ Ud, np.eye(64), atol=1e-12)
    np.testing.assert_allclose(Vd.T @ Vd, np.eye(64), atol=1e-12)
    J = 64
    expect = 10.0 ** (-np.arange(J) / (J * 0.5))
    np.testing.assert_allclose(np.diag(ttm.tt_to_dense(S)), expect, rtol=1e-12)
    sv = np.linalg.svd(Ad, compute_uv=False)
    np.testing.assert_allclose(sv, expect, atol=1e-10)
    assert sv[0] == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        gen_random_svd(4, 0.0)


def test_random_svd_seeded():
    a = gen_random_svd(5, 0.5, seed=3)
    b = gen_random_svd(5, 0.5, seed=3)
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.cores, b.cores))


def _dense_convection(M, c):
    n = 2**M
    _, h = convection_grid(M)
    T, E = tridiag(n), np.eye(n)
    D = (np.eye(n, k=1) - np.eye(n, k=-1)) / 2
    L3 = np.kron(np.kron(E, E), T) + np.kron(np.kron(E, T), E) + np.kron(np.kron(T, E), E)
    return L3 - c * h * np.kron(np.kron(E, E), D)


@pytest.mark.parametrize("M", [1, 2])
def test_convection_dense(M):
    A, b = gen_convection_diffusion(M)
    c = convection_c(3 * M)
    Ad = ttm.tt_to_dense(A)
    np.testing.assert_allclose(Ad, _dense_convection(M, c), atol=1e-10)
    assert np.linalg.norm(Ad - Ad.T) > 0
    u = convection_exact(M)
    np.testing.assert_allclose(ttm.tt_to_dense(b), Ad @ u, atol=1e-10)


def test_convection_constants():
    assert convection_c(3) == 2.0**-7
    x, h = convection_grid(2)
    assert h == 0.2
    np.testing.assert_allclose(x, [0.2, 0.4, 0.6, 0.8])


def test_convection_manufactured_solve():
    A, b = gen_convection_diffusion(2)
    x = np.linalg.solve(ttm.tt_to_dense(A), ttm.tt_to_dense(b))
    np.testing.assert_allclose(x, convection_exact(2), atol=1e-8)


def test_convection_override_zero_is_symmetric():
    A, _ = gen_convection_diffusion(1, c=0.0)
    Ad = ttm.tt_to_dense(A)
    np.testing.assert_allclose(Ad, Ad.T, atol=1e-14)


@pytest.mark.parametrize("kw", [
    dict(family="nope", N=3),
    dict(family="laplace", N=0),
    dict(family="circulant", N=40),
    dict(family="circulant", N=4, B=-1.0),
    dict(family="random-svd", N=4, k0=1.5),
    dict(family="convection", N=4),
    dict(family="convection", N=30),
])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        ProblemSpec(**kw)


def test_spec_build():
    A, b = ProblemSpec("laplace", 3).build()
    assert b is None and A.shape == (8, 8)
    A, b = ProblemSpec("convection", 3).build()
    assert b.mode_sizes == (2, 2, 2)
