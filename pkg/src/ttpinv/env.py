"""Environment tensors and the implicit two-site local problem.

Environments live on bonds. For a train with N sites, bond ``k`` sits
between sites ``k-1`` and ``k`` (bond 0 and bond N are the boundaries). The
left environment at bond ``k`` contracts sites ``0..k-1``; the right
environment at bond ``k`` contracts sites ``k..N-1``.

Two kinds of environment are needed for the pseudoinverse objective:

* ``E1`` (4th order, index order ``(p, a, a2, p2)``) accumulates
  ``tr(P^T A A^T P)`` and gives the quadratic term of the local problem;
* ``E2`` (matrix, ``(p, a)``) accumulates ``tr(P^T A)`` and gives the
  linear term.

The local vector is the little-endian (``order='F'``) ravel of the
supercore with axes ``(p, i_n, j_n, i_{n+1}, j_{n+1}, q)``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator

from . import _kernels as K

_T4 = (3, 1, 2, 0)


def _ones(ndim):
    return np.ones((1,) * ndim)


# ---------------------------------------------------------------------------
# explicit site blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SiteBlocks:
    """Explicit transfer matrices of one site.

    ``Z1`` has shape ``(R R_A R_A R) x (R' R_A' R_A' R')`` with the Kronecker
    factors ordered (P, A, A, P); ``Z2`` has shape ``(R R_A) x (R' R_A')``.
    """

    Z1: np.ndarray
    Z2: np.ndarray


def site_blocks(P_core, A_core):
    P_core = np.asarray(P_core, dtype=np.float64)
    A_core = np.asarray(A_core, dtype=np.float64)
    if P_core.ndim != 4 or A_core.ndim != 4 or P_core.shape[1:3] != A_core.shape[1:3]:
        raise ValueError(f"incompatible cores {P_core.shape} and {A_core.shape}")
    r, _, _, rr = P_core.shape
    a, _, _, b = A_core.shape
    Z1 = np.einsum("pijq,aikb,clkd,slje->pacsqbde", P_core, A_core, A_core, P_core)
    Z2 = np.einsum("pijq,aijb->paqb", P_core, A_core)
    Z1 = Z1.reshape((r * a) ** 2, (rr * b) ** 2)
    Z2 = Z2.reshape(r * a, rr * b)
    return SiteBlocks(Z1, Z2)


# ---------------------------------------------------------------------------
# environment recursions
# ---------------------------------------------------------------------------


def env4_left(L, P_core, A_core):
    return K.env4_left(L, P_core, A_core)


def env4_right(R, P_core, A_core):
    return K.env4_left(R, P_core.transpose(_T4), A_core.transpose(_T4))


def env2_left(L, X, Y):
    """L'[q, t] = sum L[p, s] X[p, ..., q] Y[s, ..., t]."""
    X = X.reshape(X.shape[0], -1, X.shape[-1])
    Y = Y.reshape(Y.shape[0], -1, Y.shape[-1])
    return np.tensordot(np.tensordot(L, X, (0, 0)), Y, ([0, 1], [0, 1]))


def env2_right(R, X, Y):
    """R'[p, s] = sum X[p, ..., q] Y[s, ..., t] R[q, t]."""
    X = X.reshape(X.shape[0], -1, X.shape[-1])
    Y = Y.reshape(Y.shape[0], -1, Y.shape[-1])
    return np.tensordot(X, np.tensordot(Y, R, (2, 1)), ([1, 2], [1, 2]))


def env3_left(L, X, M, Y):
    """L'[q, b, t] = sum L[p, a, s] X[p, i, q] M[a, i, j, b] Y[s, j, t]."""
    return K.env3_left(L, X, M, Y)


def env3_right(R, X, M, Y):
    return K.env3_left(R, X.transpose(2, 1, 0), M.transpose(_T4), Y.transpose(2, 1, 0))


@dataclass(frozen=True)
class EnvBlocks:
    """Environment pair ``(E1, E2)`` at a bond, seen from one side."""

    side: str
    bond: int
    E1: np.ndarray
    E2: np.ndarray


def boundary_env(side, N):
    """Scalar-one environments at bond 0 (left) or bond N (right)."""
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    return EnvBlocks(side, 0 if side == "left" else N, _ones(4), _ones(2))


def advance_left(env, P_core, A_core, blocks=None):
    """Left environment at bond m+1 from the one at bond m and site m.

    With ``blocks`` the explicit recursion vec(L')^T = vec(L)^T Z is used;
    otherwise the cores are contracted directly.
    """
    if env.side != "left":
        raise ValueError("advance_left needs a left environment")
    rr, b = P_core.shape[3], A_core.shape[3]
    if blocks is not None:
        E1 = (env.E1.reshape(1, -1) @ blocks.Z1).reshape(rr, b, b, rr)
        E2 = (env.E2.reshape(1, -1) @ blocks.Z2).reshape(rr, b)
    else:
        E1 = env4_left(env.E1, P_core, A_core)
        E2 = env2_left(env.E2, P_core, A_core)
    return EnvBlocks("left", env.bond + 1, E1, E2)


def advance_right(env, P_core, A_core, blocks=None):
    """Right environment at bond m from the one at bond m+1 and site m."""
    if env.side != "right":
        raise ValueError("advance_right needs a right environment")
    r, a = P_core.shape[0], A_core.shape[0]
    if blocks is not None:
        E1 = (blocks.Z1 @ env.E1.reshape(-1, 1)).reshape(r, a, a, r)
        E2 = (blocks.Z2 @ env.E2.reshape(-1, 1)).reshape(r, a)
    else:
        E1 = env4_right(env.E1, P_core, A_core)
        E2 = env2_right(env.E2, P_core, A_core)
    return EnvBlocks("right", env.bond - 1, E1, E2)


class Environments:
    """Per-bond storage of left and right environments for a sweep.

    ``L1[k], L2[k]`` are valid for ``k <= pivot`` and ``R1[k], R2[k]`` for
    ``k >= pivot + 2``; updating is the caller's job as the pivot moves.
    """

    def __init__(self, P_cores, A_cores, pivot=0):
        N = len(P_cores)
        self.N = N
        self.A = list(A_cores)
        self.L1 = [None] * (N + 1)
        self.L2 = [None] * (N + 1)
        self.R1 = [None] * (N + 1)
        self.R2 = [None] * (N + 1)
        self.L1[0], self.L2[0] = _ones(4), _ones(2)
        self.R1[N], self.R2[N] = _ones(4), _ones(2)
        for n in range(pivot):
            self.update_left(n, P_cores[n])
        for n in range(N - 1, pivot + 1, -1):
            self.update_right(n, P_cores[n])

    def update_left(self, n, P_core):
        """Set the left environment at bond n+1 from site n."""
        self.L1[n + 1] = env4_left(self.L1[n], P_core, self.A[n])
        self.L2[n + 1] = env2_left(self.L2[n], P_core, self.A[n])

    def update_right(self, n, P_core):
        """Set the right environment at bond n from site n."""
        self.R1[n] = env4_right(self.R1[n + 1], P_core, self.A[n])
        self.R2[n] = env2_right(self.R2[n + 1], P_core, self.A[n])

    def local_problem(self, n, lam=0.0):
        return LocalProblem(
            self.L1[n], self.R1[n + 2], self.L2[n], self.R2[n + 2],
            self.A[n], self.A[n + 1], lam, n,
        )


# ---------------------------------------------------------------------------
# local problem
# ---------------------------------------------------------------------------


def assemble_local_rhs(L2, R2, Y1, Y2):
    """Project a train onto a two-site frame given its environments.

    For 4th-order cores this is
    b[p, i, j, k, l, q] = sum L2[p, s] Y1[s, i, j, t] Y2[t, k, l, u] R2[q, u];
    3rd-order cores work the same way.
    """
    t = np.tensordot(L2, Y1, (1, 0))
    t = np.tensordot(t, Y2, (t.ndim - 1, 0))
    return np.tensordot(t, R2, (t.ndim - 1, 1))


class LocalProblem:
    """Implicit operator and right-hand side of one two-site step.

    ``apply`` computes the unregularized local Gram product; ``operator``
    adds ``lam * I`` and wraps it for Krylov solvers.
    """

    def __init__(self, L1, R1, L2, R2, A1, A2, lam=0.0, site=None):
        self.L1, self.R1, self.A1, self.A2 = L1, R1, A1, A2
        self.L2, self.R2 = L2, R2
        self.lam = float(lam)
        self.site = site
        r, rr = L1.shape[0], R1.shape[0]
        self.shape6 = (r,) + A1.shape[1:3] + A2.shape[1:3] + (rr,)
        self.size = int(np.prod(self.shape6))
        self._gram = K.GramApply(L1, A1, A2, R1)
        self._rhs = None

    def to_tensor(self, x):
        return np.asarray(x, dtype=np.float64).reshape(self.shape6, order="F")

    def to_vector(self, X):
        return np.asarray(X).reshape(-1, order="F")

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.size != self.size:
            raise ValueError(f"local vector has length {x.size}, expected {self.size}")
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite input to the local operator")
        y = self._gram(self.to_tensor(x))
        return self.to_vector(y)

    def matvec(self, x):
        y = self.apply(x)
        if self.lam:
            y = y + self.lam * np.asarray(x, dtype=np.float64).ravel()
        return y

    def operator(self):
        n = self.size
        return LinearOperator((n, n), matvec=self.matvec, rmatvec=self.matvec, dtype=np.float64)

    @property
    def rhs(self):
        if self._rhs is None:
            self._rhs = self.to_vector(assemble_local_rhs(self.L2, self.R2, self.A1, self.A2))
        return self._rhs

    def objective(self, x, J):
        """F = J + x^T A x - 2 x^T b + lam x^T x at the local vector ``x``."""
        x = np.asarray(x, dtype=np.float64).ravel()
        return float(J + x @ self.apply(x) - 2.0 * (x @ self.rhs) + self.lam * (x @ x))
