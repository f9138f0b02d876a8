import numpy as np
import pytest

from ttpinv import _kernels as K

BACKENDS = ["numpy"] + (["numba"] if K.HAVE_NUMBA else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    old = K.get_backend()
    K.set_backend(request.param)
    yield request.param
    K.set_backend(old)


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_env4_left(backend, rng):
    L = rng.standard_normal((3, 2, 2, 3))
    P = rng.standard_normal((3, 2, 3, 4))
    A = rng.standard_normal((2, 2, 2, 3))
    ref = np.einsum("paes,pijq,aikb,elkc,sljt->qbct", L, P, A, A, P)
    assert _rel(K.env4_left(L, P, A), ref) < 1e-13


def test_env3_left(backend, rng):
    L = rng.standard_normal((3, 2, 4))
    X = rng.standard_normal((3, 2, 5))
    M = rng.standard_normal((2, 2, 3, 3))
    Y = rng.standard_normal((4, 3, 2))
    ref = np.einsum("pas,piq,aijb,sjt->qbt", L, X, M, Y)
    assert _rel(K.env3_left(L, X, M, Y), ref) < 1e-13


def test_local_op(backend, rng):
    L = rng.standard_normal((3, 2, 4))
    M1 = rng.standard_normal((2, 2, 3, 3))
    M2 = rng.standard_normal((3, 3, 2, 2))
    R = rng.standard_normal((5, 2, 2))
    v = rng.standard_normal((4, 3, 2, 2))
    ref = np.einsum("pas,aijb,bklc,qct,sjlt->pikq", L, M1, M2, R, v)
    assert _rel(K.local_op(L, M1, M2, R, v), ref) < 1e-13


@pytest.mark.parametrize("dims", [(2, 3, 2, 2, 3, 2, 3), (3, 2, 3, 1, 1, 3, 2)])
def test_local_gram(backend, rng, dims):
    ra, rb, rc, nj, nl, m1, m2 = dims
    L = rng.standard_normal((4, ra, ra, 4))
    R = rng.standard_normal((3, rc, rc, 3))
    A1 = rng.standard_normal((ra, 2, m1, rb))
    A2 = rng.standard_normal((rb, 3, m2, rc))
    x = rng.standard_normal((4, 2, nj, 3, nl, 3))
    ref = np.einsum("paes,aiJb,eIJf,bkKc,fLKg,qcgr,sIjLlr->pijklq", L, A1, A1, A2, A2, R, x, optimize=True)
    assert _rel(K.local_gram(L, A1, A2, R, x), ref) < 1e-13


def test_pair_matrix(rng):
    A = rng.standard_normal((2, 3, 2, 4))
    W = K.pair_matrix(A).reshape(3, 4, 4, 2, 2, 3)
    ref = np.einsum("aijb,ckjd->ibdack", A, A)
    np.testing.assert_allclose(W, ref, rtol=1e-14)


@pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not installed")
def test_backends_agree(rng):
    L = rng.standard_normal((6, 3, 3, 6))
    R = rng.standard_normal((5, 3, 3, 5))
    A1 = rng.standard_normal((3, 2, 2, 3))
    A2 = rng.standard_normal((3, 2, 2, 3))
    x = rng.standard_normal((6, 2, 2, 2, 2, 5))
    out = {}
    old = K.get_backend()
    try:
        for b in ("numpy", "numba"):
            K.set_backend(b)
            out[b] = K.local_gram(L, A1, A2, R, x)
    finally:
        K.set_backend(old)
    assert _rel(out["numba"], out["numpy"]) < 1e-13


def test_set_backend_validation():
    with pytest.raises(ValueError):
        K.set_backend("fortran")
