"""Contraction kernels for environments and local operators.

Each kernel exists twice: a numba ``@njit`` version that stages the
contraction as transpose/reshape/matmul with no Python overhead between the
stages, and a pure-numpy version built from ``np.tensordot`` or batched
``matmul``. Both follow the same contraction order, so they agree to rounding.

The local Gram product of the pseudoinverse problem never touches the column
indices of the supercore, so :class:`GramApply` moves them to a trailing
batch axis and contracts one site pair ``A A^T`` at a time.

The backend is chosen at import time from the ``TTPINV_NUMBA`` environment
variable (``0``/``false``/``off`` disables numba; default is numba when it
imports). :func:`set_backend` switches at runtime.

Index names used in the comments:

* ``p, q`` -- ranks of the optimized train (P or x), ``a, b, c`` -- ranks of
  the operator train, ``s, t`` -- ranks of a second vector train.
* ``i, j, k, l`` -- physical mode indices.
"""

import os

import numpy as np

try:  # pragma: no cover - import guard
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

_FLAG = os.environ.get("TTPINV_NUMBA", "1").strip().lower()
_backend = "numba" if HAVE_NUMBA and _FLAG not in ("0", "false", "off", "no") else "numpy"


# ---------------------------------------------------------------------------
# pure numpy
# ---------------------------------------------------------------------------


def np_env4_left(L, P, A):
    """L'[q,b,b2,q2] = sum L[p,a,a2,p2] P[p,i,j,q] A[a,i,j3,b] A[a2,i2,j3,b2] P[p2,i2,j,q2]."""
    t = np.tensordot(L, P, (0, 0))  # a,a2,p2,i,j,q
    t = np.tensordot(t, A, ([0, 3], [0, 1]))  # a2,p2,j,q,j3,b
    t = np.tensordot(t, A, ([0, 4], [0, 2]))  # p2,j,q,b,i2,b2
    return np.tensordot(t, P, ([0, 4, 1], [0, 1, 2]))  # q,b,b2,q2


def pair_matrix(A):
    """Site operator of the pair ``A A^T`` as a matrix ``(i,b,b2) x (a,a2,i2)``.

    W[i,b,b2,a,a2,i2] = sum_j3 A[a,i,j3,b] A[a2,i2,j3,b2].
    """
    ra, ni, _, rb = A.shape
    W = np.einsum("aijb,ckjd->ibdack", A, A)
    return np.ascontiguousarray(W.reshape(ni * rb * rb, ra * ra * ni))


def np_gram_batched(L2, W1, W2, R2, X):
    """Local Gram product with the column indices as a trailing batch.

    ``L2`` is ``L.reshape(p*a*a2, p2)``, ``W1, W2`` come from
    :func:`pair_matrix`, ``R2`` is ``R.reshape(q, c*c2*q2)`` and ``X`` has
    shape ``(p2, i2, k2, q2, m)`` with ``m`` running over ``(j, l)``. The
    column indices pass through untouched, so every stage is one (batched)
    matmul without reordering. Returns ``(p, i, k, q, m)``.
    """
    rp, ni, nk, rq, m = X.shape
    t = (L2 @ X.reshape(rp, -1)).reshape(rp, W1.shape[1], nk * rq * m)  # p | a,a2,i2 | k2,q2,m
    t = (W1 @ t).reshape(rp * ni, W2.shape[1], rq * m)  # p,i | b,b2,k2 | q2,m
    t = (W2 @ t).reshape(rp * ni * nk, R2.shape[1], m)  # p,i,k | c,c2,q2 | m
    return (R2 @ t).reshape(rp, ni, nk, rq, m)


def np_env3_left(L, X, M, Y):
    """L'[q,b,t] = sum L[p,a,s] X[p,i,q] M[a,i,j,b] Y[s,j,t]."""
    t = np.tensordot(L, X, (0, 0))  # a,s,i,q
    t = np.tensordot(t, M, ([0, 2], [0, 1]))  # s,q,j,b
    return np.tensordot(t, Y, ([0, 2], [0, 1]))  # q,b,t


def np_local_op(L, M1, M2, R, v):
    """y[p,i,k,q] = sum L[p,a,s] M1[a,i,j,b] M2[b,k,l,c] R[q,c,t] v[s,j,l,t]."""
    t = np.tensordot(L, v, (2, 0))  # p,a,j,l,t
    t = np.tensordot(t, M1, ([1, 2], [0, 2]))  # p,l,t,i,b
    t = np.tensordot(t, M2, ([4, 1], [0, 2]))  # p,t,i,k,c
    return np.tensordot(t, R, ([4, 1], [1, 2]))  # p,i,k,q


# ---------------------------------------------------------------------------
# numba
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def nb_env4_left(L, P, A):
        L = np.ascontiguousarray(L)
        P = np.ascontiguousarray(P)
        A = np.ascontiguousarray(A)
        rp, ra, _, _ = L.shape
        _, ni, nj, rq = P.shape
        _, _, nj3, rb = A.shape
        # a,a2,p2 | i,j,q
        t = np.ascontiguousarray(L.reshape(rp, ra * ra * rp).T) @ P.reshape(rp, ni * nj * rq)
        t = t.reshape(ra, ra, rp, ni, nj, rq)
        # a2,p2,j,q | a,i  ->  a2,p2,j,q,j3,b
        t = np.ascontiguousarray(t.transpose((1, 2, 4, 5, 0, 3)))
        t = t.reshape(ra * rp * nj * rq, ra * ni) @ A.reshape(ra * ni, nj3 * rb)
        t = t.reshape(ra, rp, nj, rq, nj3, rb)
        # p2,j,q,b | a2,j3  ->  p2,j,q,b,i2,b2
        t = np.ascontiguousarray(t.transpose((1, 2, 3, 5, 0, 4)))
        a2 = np.ascontiguousarray(A.transpose((0, 2, 1, 3))).reshape(ra * nj3, ni * rb)
        t = t.reshape(rp * nj * rq * rb, ra * nj3) @ a2
        t = t.reshape(rp, nj, rq, rb, ni, rb)
        # q,b,b2 | p2,i2,j  ->  q,b,b2,q2
        t = np.ascontiguousarray(t.transpose((2, 3, 5, 0, 4, 1)))
        out = t.reshape(rq * rb * rb, rp * ni * nj) @ P.reshape(rp * ni * nj, rq)
        return out.reshape(rq, rb, rb, rq)

    @njit(cache=True)
    def nb_gram_batched(L2, W1, W2, R2, X):
        L2 = np.ascontiguousarray(L2)
        W1 = np.ascontiguousarray(W1)
        W2 = np.ascontiguousarray(W2)
        R2 = np.ascontiguousarray(R2)
        X = np.ascontiguousarray(X)
        rp, ni, nk, rq, m = X.shape
        t = L2 @ X.reshape(rp, ni * nk * rq * m)
        t = t.reshape(rp, W1.shape[1], nk * rq * m)
        u = np.empty((rp, W1.shape[0], nk * rq * m))
        for p in range(rp):
            np.dot(W1, t[p], u[p])
        u = u.reshape(rp * ni, W2.shape[1], rq * m)
        v = np.empty((rp * ni, W2.shape[0], rq * m))
        for p in range(rp * ni):
            np.dot(W2, u[p], v[p])
        # last stage as one gemm over (c,c2,q2)
        kc = R2.shape[1]
        v = np.ascontiguousarray(v.reshape(rp * ni * nk, kc, m).transpose((1, 0, 2)))
        w = (R2 @ v.reshape(kc, rp * ni * nk * m)).reshape(rq, rp * ni * nk, m)
        out = np.ascontiguousarray(w.transpose((1, 0, 2)))
        return out.reshape(rp, ni, nk, rq, m)

    @njit(cache=True)
    def nb_env3_left(L, X, M, Y):
        L = np.ascontiguousarray(L)
        X = np.ascontiguousarray(X)
        M = np.ascontiguousarray(M)
        Y = np.ascontiguousarray(Y)
        rp, ra, rs = L.shape
        _, ni, rq = X.shape
        _, _, nj, rb = M.shape
        rt = Y.shape[2]
        # a,s | i,q
        t = np.ascontiguousarray(L.reshape(rp, ra * rs).T) @ X.reshape(rp, ni * rq)
        t = t.reshape(ra, rs, ni, rq)
        # s,q | a,i  ->  j,b
        t = np.ascontiguousarray(t.transpose((1, 3, 0, 2)))
        t = t.reshape(rs * rq, ra * ni) @ M.reshape(ra * ni, nj * rb)
        t = t.reshape(rs, rq, nj, rb)
        # q,b | s,j  ->  t
        t = np.ascontiguousarray(t.transpose((1, 3, 0, 2)))
        out = t.reshape(rq * rb, rs * nj) @ Y.reshape(rs * nj, rt)
        return out.reshape(rq, rb, rt)

    @njit(cache=True)
    def nb_local_op(L, M1, M2, R, v):
        L = np.ascontiguousarray(L)
        M1 = np.ascontiguousarray(M1)
        M2 = np.ascontiguousarray(M2)
        R = np.ascontiguousarray(R)
        v = np.ascontiguousarray(v)
        rp, ra, rs = L.shape
        _, nj, nl, rt = v.shape
        ni = M1.shape[1]
        rb = M1.shape[3]
        nk = M2.shape[1]
        rc = M2.shape[3]
        rq = R.shape[0]
        # p,a | j,l,t
        t = L.reshape(rp * ra, rs) @ v.reshape(rs, nj * nl * rt)
        t = t.reshape(rp, ra, nj, nl, rt)
        # p,l,t | a,j  ->  i,b
        t = np.ascontiguousarray(t.transpose((0, 3, 4, 1, 2)))
        m1 = np.ascontiguousarray(M1.transpose((0, 2, 1, 3))).reshape(ra * nj, ni * rb)
        t = t.reshape(rp * nl * rt, ra * nj) @ m1
        t = t.reshape(rp, nl, rt, ni, rb)
        # p,t,i | b,l  ->  k,c
        t = np.ascontiguousarray(t.transpose((0, 2, 3, 4, 1)))
        m2 = np.ascontiguousarray(M2.transpose((0, 2, 1, 3))).reshape(rb * nl, nk * rc)
        t = t.reshape(rp * rt * ni, rb * nl) @ m2
        t = t.reshape(rp, rt, ni, nk, rc)
        # p,i,k | c,t  ->  q
        t = np.ascontiguousarray(t.transpose((0, 2, 3, 4, 1)))
        r2 = np.ascontiguousarray(R.transpose((1, 2, 0))).reshape(rc * rt, rq)
        out = t.reshape(rp * ni * nk, rc * rt) @ r2
        return out.reshape(rp, ni, nk, rq)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

_IMPLS = {
    "numpy": (np_env4_left, np_gram_batched, np_env3_left, np_local_op),
}
if HAVE_NUMBA:
    _IMPLS["numba"] = (nb_env4_left, nb_gram_batched, nb_env3_left, nb_local_op)

env4_left, gram_batched, env3_left, local_op = _IMPLS[_backend]


def get_backend():
    return _backend


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"`` kernels for subsequent calls."""
    global _backend, env4_left, gram_batched, env3_left, local_op
    if name not in _IMPLS:
        raise ValueError(f"unknown or unavailable kernel backend {name!r}")
    _backend = name
    env4_left, gram_batched, env3_left, local_op = _IMPLS[name]


class GramApply:
    """Local Gram product for fixed environments and site cores.

    Precomputes the matrix forms of ``L``, ``R`` and the site pairs once so
    that repeated products (Krylov iterations) only pay for the contraction.
    """

    def __init__(self, L, A1, A2, R):
        rp, ra = L.shape[:2]
        rq = R.shape[0]
        self.L2 = np.ascontiguousarray(L.reshape(rp * ra * ra, rp))
        self.R2 = np.ascontiguousarray(R.reshape(rq, -1))
        self.W1 = pair_matrix(np.asarray(A1))
        self.W2 = pair_matrix(np.asarray(A2))

    def __call__(self, x):
        """``x`` of shape ``(p2, i2, j, k2, l, q2)``; returns the same layout."""
        rp, ni, nj, nk, nl, rq = x.shape
        X = np.ascontiguousarray(x.transpose(0, 1, 3, 5, 2, 4)).reshape(rp, ni, nk, rq, nj * nl)
        y = gram_batched(self.L2, self.W1, self.W2, self.R2, X)
        return y.reshape(rp, ni, nk, rq, nj, nl).transpose(0, 1, 4, 2, 5, 3)


def local_gram(L, A1, A2, R, x):
    """y[p,i,j,k,l,q] = sum L[p,a,a2,p2] A1[a,i,j3,b] A1[a2,i2,j3,b2]
    A2[b,k,l3,c] A2[b2,k2,l3,c2] R[q,c,c2,q2] x[p2,i2,j,k2,l,q2]."""
    return GramApply(L, A1, A2, R)(x)
