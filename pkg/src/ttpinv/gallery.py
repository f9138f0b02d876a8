"""Test-problem generators in TT format.

All operators act on quantized (binary) index spaces: a size-2^N axis is
split into N sites of size 2, least significant bit first.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tt as ttm
from .tt import TTMatrix, TTVector

CIRCULANT_MAX_N = 12
CONVECTION_MAX_M = 7

FAMILIES = ("laplace", "circulant", "random-svd", "convection")


@dataclass(frozen=True)
class ProblemSpec:
    family: str
    N: int
    B: float = 0.5
    k0: float = 0.5
    c: float = None
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.N < 1:
            raise ValueError("N must be positive")
        if self.family == "circulant":
            if not self.B > 0:
                raise ValueError("B must be positive")
            if self.N > CIRCULANT_MAX_N:
                raise ValueError(f"circulant generator is limited to N <= {CIRCULANT_MAX_N}")
        if self.family == "random-svd" and not 0 < self.k0 <= 1:
            raise ValueError("k0 must lie in (0, 1]")
        if self.family == "convection":
            if self.N % 3:
                raise ValueError("convection-diffusion needs N divisible by 3")
            if self.N // 3 > CONVECTION_MAX_M:
                raise ValueError(f"convection-diffusion is limited to M <= {CONVECTION_MAX_M}")

    def build(self):
        """Return ``(A, b)``; ``b`` is ``None`` except for convection-diffusion."""
        if self.family == "laplace":
            return gen_laplace(self.N), None
        if self.family == "circulant":
            return gen_circulant_prescribed(self.N, self.B), None
        if self.family == "random-svd":
            return gen_random_svd(self.N, self.k0, self.seed), None
        return gen_convection_diffusion(self.N // 3, self.c)


_E10 = np.array([[0.0, 0.0], [1.0, 0.0]])
_E01 = _E10.T
_I2 = np.eye(2)


def shift_operator(N):
    """Down-shift S on 2^N points, (S u)_i = u_{i-1}, as a rank-2 TT."""
    core = np.zeros((2, 2, 2, 2))
    core[0, :, :, 0] = _I2
    core[1, :, :, 0] = _E10
    core[1, :, :, 1] = _E01
    cores = [core.copy() for _ in range(N)]
    cores[0] = core[1:2]
    cores[-1] = cores[-1][..., 0:1]
    return TTMatrix(cores)


def gen_laplace(N):
    """tridiag(-1, 2, -1) of size 2^N with exact rank-3 cores.

    Bond states: 0 = the remaining sites act as identity, 1 = a carry of the
    down-shift is pending, 2 = a borrow of the up-shift is pending.
    """
    if N < 1:
        raise ValueError("N must be positive")
    mid = np.zeros((3, 2, 2, 3))
    mid[0, :, :, 0] = _I2
    mid[1, :, :, 0] = _E10
    mid[1, :, :, 1] = _E01
    mid[2, :, :, 0] = _E01
    mid[2, :, :, 2] = _E10
    first = np.zeros((1, 2, 2, 3))
    first[0, :, :, 0] = 2 * _I2 - _E10 - _E01
    first[0, :, :, 1] = -_E01
    first[0, :, :, 2] = -_E10
    if N == 1:
        return TTMatrix([first[..., 0:1]])
    cores = [first] + [mid] * (N - 2) + [mid[..., 0:1]]
    return TTMatrix(cores)


def circulant_sigma(N, B):
    J = 2**N
    j = np.arange(J)
    return np.maximum(0.0, np.abs(j / J - 0.5) + B - 0.5) / B


def gen_circulant_prescribed(N, B=0.5, delta=1e-12):
    """(1/sqrt 2) [C; C] with C circulant of prescribed singular values.

    Shape 2^{N+1} x 2^N; the stacking is the extra last site (row size 2,
    column size 1).
    """
    if N > CIRCULANT_MAX_N:
        raise ValueError(f"circulant generator is limited to N <= {CIRCULANT_MAX_N}")
    if not B > 0:
        raise ValueError("B must be positive")
    J = 2**N
    c = np.fft.ifft(circulant_sigma(N, B))
    c = c.real
    idx = (np.arange(J)[:, None] - np.arange(J)[None, :]) % J
    C = ttm.ttmatrix_from_dense(c[idx], [2] * N, [2] * N, delta)
    last = np.full((1, 2, 1, 1), 1.0 / np.sqrt(2.0))
    return TTMatrix(list(C.cores) + [last])


def _random_orthogonal(rng, n=2):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def gen_random_svd(N, k0=0.5, seed=0, return_factors=False):
    """A = U diag(sigma) V^T with sigma_j = 10^{-j/(J k0)}, all TT ranks 1.

    ``U`` and ``V`` are Kronecker products of random 2x2 orthogonal factors.
    """
    if not 0 < k0 <= 1:
        raise ValueError("k0 must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    J = 2**N
    Us, Vs, Ss = [], [], []
    for n in range(N):
        U = _random_orthogonal(rng)
        V = _random_orthogonal(rng)
        s = np.array([1.0, 10.0 ** (-(2**n) / (J * k0))])
        Us.append(U)
        Vs.append(V)
        Ss.append(s)
    A = TTMatrix([((U * s) @ V.T).reshape(1, 2, 2, 1) for U, s, V in zip(Us, Ss, Vs)])
    if return_factors:
        U = TTMatrix([u.reshape(1, 2, 2, 1) for u in Us])
        V = TTMatrix([v.reshape(1, 2, 2, 1) for v in Vs])
        S = TTMatrix([np.diag(s).reshape(1, 2, 2, 1) for s in Ss])
        return A, (U, S, V)
    return A


def convection_c(N):
    return 2.0 ** (N - 10)


def convection_grid(M):
    n = 2**M
    h = 1.0 / (n + 1)
    return h * np.arange(1, n + 1), h


def convection_exact(M):
    """u = exp(xyz) sin(pi x) sin(pi y) sin(pi z) on the interior grid (x fastest)."""
    x, _ = convection_grid(M)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    U = np.exp(X * Y * Z) * np.sin(np.pi * X) * np.sin(np.pi * Y) * np.sin(np.pi * Z)
    return U.reshape(-1, order="F")


def gen_convection_diffusion(M, c=None, delta=1e-12):
    """Scaled 3-D convection-diffusion operator and manufactured rhs.

    A = L3 - c h Dx, where L3 is the Kronecker sum of tridiag(-1, 2, -1) on
    each axis and Dx = (S^T - S)/2 is the central first difference on the x
    axis (the fastest sites). This is the discretization of
    u_xx + u_yy + u_zz + c u_x = f multiplied by -h^2. The rhs is
    b = A vec(u_exact). Returns ``(A, b)``.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if M > CONVECTION_MAX_M:
        raise ValueError(f"convection-diffusion is limited to M <= {CONVECTION_MAX_M}")
    N = 3 * M
    if c is None:
        c = convection_c(N)
    _, h = convection_grid(M)
    T = gen_laplace(M)
    E = ttm.identity([2] * M)
    S = shift_operator(M)
    Dx = ttm.tt_scale(ttm.tt_add(ttm.tt_transpose(S), ttm.tt_scale(S, -1.0)), 0.5)
    L3 = ttm.tt_add(
        ttm.tt_add(ttm.tt_kron(ttm.tt_kron(T, E), E), ttm.tt_kron(ttm.tt_kron(E, T), E)),
        ttm.tt_kron(ttm.tt_kron(E, E), T),
    )
    A = ttm.tt_add(L3, ttm.tt_scale(ttm.tt_kron(ttm.tt_kron(Dx, E), E), -c * h))
    A = ttm.tt_round(A, delta)
    u = ttm.tt_from_dense(convection_exact(M), delta, mode_sizes=[2] * N)
    b = ttm.tt_round(ttm.tt_matvec(A, u), delta)
    return A, b
