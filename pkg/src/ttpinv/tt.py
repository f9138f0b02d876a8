"""Tensor-train vectors and matrices and their basic algebra.

Conventions
-----------
* A :class:`TTVector` core has shape ``(R_{n-1}, K_n, R_n)``; a
  :class:`TTMatrix` core has shape ``(R_{n-1}, I_n, J_n, R_n)``.
* Multi-indices are little-endian: the first site varies fastest. Dense
  vectors are therefore ``order='F'`` ravels of the natural ``(K_1,..,K_N)``
  tensor, and dense matrices have row index ``i_1 + I_1 i_2 + ...``.
* Site indices in this API are 0-based. ``orthogonalize(T, n)`` and
  ``merge_cores(T, n)`` refer to the pair of sites ``(n, n+1)``.
* Values are immutable: cores are copied on construction and flagged
  read-only, and every operation returns a fresh train.
"""

import numpy as np

DENSE_LIMIT = 2**24

LEFT, RIGHT, NONE = "left", "right", "none"


def _freeze(a, copy=True):
    a = np.array(a, dtype=np.float64, copy=copy, order="C")
    a.flags.writeable = False
    return a


class _Train:
    _core_ndim = None

    def __init__(self, cores, ortho=None, *, copy=True):
        cores = [_freeze(c, copy=copy) for c in cores]
        if not cores:
            raise ValueError("a tensor train needs at least one core")
        nd = self._core_ndim
        for n, c in enumerate(cores):
            if c.ndim != nd:
                raise ValueError(f"core {n} has order {c.ndim}, expected {nd}")
            if min(c.shape) < 1:
                raise ValueError(f"core {n} has an empty dimension {c.shape}")
        if cores[0].shape[0] != 1 or cores[-1].shape[-1] != 1:
            raise ValueError("boundary ranks must be 1")
        for n in range(len(cores) - 1):
            if cores[n].shape[-1] != cores[n + 1].shape[0]:
                raise ValueError(
                    f"rank mismatch between cores {n} and {n + 1}: "
                    f"{cores[n].shape} vs {cores[n + 1].shape}"
                )
        self._cores = tuple(cores)
        if ortho is None:
            ortho = (NONE,) * len(cores)
        ortho = tuple(ortho)
        if len(ortho) != len(cores) or any(f not in (LEFT, RIGHT, NONE) for f in ortho):
            raise ValueError(f"bad orthogonality flags {ortho!r}")
        self._ortho = ortho

    @property
    def cores(self):
        return self._cores

    @property
    def ortho(self):
        return self._ortho

    @property
    def order(self):
        return len(self._cores)

    N = order

    @property
    def ranks(self):
        return (1,) + tuple(c.shape[-1] for c in self._cores)

    @property
    def max_rank(self):
        return max(self.ranks)

    def __len__(self):
        return len(self._cores)

    def __getitem__(self, n):
        return self._cores[n]

    def __repr__(self):
        return f"{type(self).__name__}(N={self.order}, modes={self._modes_repr()}, ranks={self.ranks})"

    def with_cores(self, cores, ortho=None):
        return type(self)(cores, ortho)


class TTVector(_Train):
    """Train of 3rd-order cores representing a vector of length prod(K_n)."""

    _core_ndim = 3

    @property
    def mode_sizes(self):
        return tuple(c.shape[1] for c in self._cores)

    @property
    def size(self):
        return int(np.prod(self.mode_sizes, dtype=np.int64))

    def _modes_repr(self):
        return self.mode_sizes


class TTMatrix(_Train):
    """Train of 4th-order cores representing a prod(I_n) x prod(J_n) matrix."""

    _core_ndim = 4

    @property
    def row_sizes(self):
        return tuple(c.shape[1] for c in self._cores)

    @property
    def col_sizes(self):
        return tuple(c.shape[2] for c in self._cores)

    @property
    def shape(self):
        return (
            int(np.prod(self.row_sizes, dtype=np.int64)),
            int(np.prod(self.col_sizes, dtype=np.int64)),
        )

    def _modes_repr(self):
        return tuple(zip(self.row_sizes, self.col_sizes))


# ---------------------------------------------------------------------------
# elementary tensor operations
# ---------------------------------------------------------------------------


def mode1_contract(A, B):
    """Contract the last mode of ``A`` with the first mode of ``B``."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim < 2 or B.ndim < 2:
        raise ValueError(f"mode-1 contraction needs order >= 2, got {A.shape} and {B.shape}")
    if A.shape[-1] != B.shape[0]:
        raise ValueError(f"cannot contract shapes {A.shape} and {B.shape}")
    return np.tensordot(A, B, (A.ndim - 1, 0))


def matricize(X, n, kind="canonical"):
    """Little-endian matricization of a dense tensor.

    ``kind="canonical"`` groups the first ``n`` modes as rows; ``kind="mode"``
    puts mode ``n`` (1-based) on the rows and all other modes, in order, on the
    columns.
    """
    X = np.asarray(X)
    d = X.ndim
    if not 1 <= n <= d:
        raise ValueError(f"n={n} out of range for a tensor of order {d}")
    if kind == "canonical":
        rows = int(np.prod(X.shape[:n], dtype=np.int64))
        return X.reshape(rows, -1, order="F")
    if kind == "mode":
        Y = np.moveaxis(X, n - 1, 0)
        return Y.reshape(X.shape[n - 1], -1, order="F")
    raise ValueError(f"unknown matricization kind {kind!r}")


def vectorize(X):
    """Little-endian vectorization (canonical matricization with n = order)."""
    return np.asarray(X).reshape(-1, order="F")


# ---------------------------------------------------------------------------
# dense conversion
# ---------------------------------------------------------------------------


def _chain(cores):
    out = cores[0]
    for c in cores[1:]:
        out = np.tensordot(out, c, (out.ndim - 1, 0))
    return out[0, ..., 0]


def tt_to_dense(T):
    """Dense vector (TTVector) or dense matrix (TTMatrix)."""
    if isinstance(T, TTMatrix):
        m, n = T.shape
        if m * n > DENSE_LIMIT:
            raise ValueError(f"dense size {m}x{n} exceeds the guard of {DENSE_LIMIT} entries")
        full = _chain(T.cores)  # i1, j1, i2, j2, ...
        N = T.order
        full = full.transpose(list(range(0, 2 * N, 2)) + list(range(1, 2 * N, 2)))
        return full.reshape(m, n, order="F")
    if isinstance(T, TTVector):
        if T.size > DENSE_LIMIT:
            raise ValueError(f"dense size {T.size} exceeds the guard of {DENSE_LIMIT} entries")
        return _chain(T.cores).reshape(-1, order="F")
    raise TypeError(f"expected a TTVector or TTMatrix, got {type(T).__name__}")


def truncation_rank(s, delta, rank_cap=None, noise=0.0):
    """Smallest rank whose discarded tail has norm <= delta, then capped.

    Singular values at or below ``noise`` count as numerical zeros and are
    always dropped. Equal singular values straddling the boundary are kept
    together (up to the cap), and the result is never below 1.
    """
    s = np.asarray(s, dtype=np.float64)
    k = s.size
    if k == 0:
        return 1
    # tail[r] = ||s[r:]||, tail[k] = 0
    tail = np.sqrt(np.concatenate([np.cumsum((s * s)[::-1])[::-1], [0.0]]))
    r = int(np.argmax(tail <= delta))
    r = max(min(r, int(np.count_nonzero(s > noise))), 1)
    cap = k if rank_cap is None else min(int(rank_cap), k)
    while r < cap and s[r] == s[r - 1] and s[r] > 0:
        r += 1
    return max(1, min(r, cap))


def _svd(M):
    try:
        return np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError:  # pragma: no cover - rare gesdd failure
        import scipy.linalg

        return scipy.linalg.svd(M, full_matrices=False, lapack_driver="gesvd")


def truncated_svd(M, delta=0.0, rank_cap=None):
    """Return ``U, s, Vt`` truncated by :func:`truncation_rank`."""
    if not np.all(np.isfinite(M)):
        raise ValueError("non-finite values in matrix to be split")
    U, s, Vt = _svd(M)
    noise = max(M.shape) * np.finfo(np.float64).eps * s[0] if s.size else 0.0
    r = truncation_rank(s, delta, rank_cap, noise)
    return U[:, :r], s[:r], Vt[:r]


def _tt_svd(X, delta, rank_cap):
    """TT-SVD of a natural-order dense tensor with absolute per-split delta."""
    shape = X.shape
    N = len(shape)
    caps = _expand_caps(rank_cap, N)
    cores = []
    r = 1
    C = np.asarray(X, dtype=np.float64).reshape(1, -1)
    for n in range(N - 1):
        C = C.reshape(r * shape[n], -1)
        U, s, Vt = truncated_svd(C, delta, caps[n])
        rn = s.size
        cores.append(U.reshape(r, shape[n], rn))
        C = s[:, None] * Vt
        r = rn
    cores.append(C.reshape(r, shape[-1], 1))
    return cores


def _expand_caps(rank_cap, N):
    if rank_cap is None:
        return [None] * max(N - 1, 0)
    if np.isscalar(rank_cap):
        return [int(rank_cap)] * max(N - 1, 0)
    caps = list(rank_cap)
    if len(caps) != N - 1:
        raise ValueError(f"expected {N - 1} rank caps, got {len(caps)}")
    return caps


def tt_from_dense(x, delta=0.0, rank_cap=None, mode_sizes=None):
    """Compress a dense tensor into a TTVector by sequential delta-truncated SVDs.

    ``x`` is either an N-d array indexed ``x[i_1, ..., i_N]``, or a
    little-endian vector together with ``mode_sizes``. ``delta`` bounds the
    discarded singular-value norm of each split in absolute terms.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    if mode_sizes is not None:
        x = x.reshape(tuple(mode_sizes), order="F")
    if x.ndim == 0:
        x = x.reshape(1)
    return TTVector(_tt_svd(x, delta, rank_cap))


def ttmatrix_from_dense(A, row_sizes, col_sizes, delta=0.0, rank_cap=None):
    """Compress a dense (prod I) x (prod J) matrix into a TTMatrix."""
    A = np.asarray(A, dtype=np.float64)
    row_sizes, col_sizes = tuple(row_sizes), tuple(col_sizes)
    N = len(row_sizes)
    if len(col_sizes) != N:
        raise ValueError("row and column size lists differ in length")
    if A.shape != (int(np.prod(row_sizes)), int(np.prod(col_sizes))):
        raise ValueError(f"matrix shape {A.shape} does not match sizes {row_sizes} x {col_sizes}")
    X = A.reshape(row_sizes + col_sizes, order="F")
    # interleave as (j_n, i_n) so that the C-order merge gives k = i + I j
    perm = []
    for n in range(N):
        perm += [N + n, n]
    X = X.transpose(perm).reshape([i * j for i, j in zip(row_sizes, col_sizes)])
    cores = _tt_svd(X, delta, rank_cap)
    return TTMatrix([_unflatten(c, I, J) for c, I, J in zip(cores, row_sizes, col_sizes)])


# ---------------------------------------------------------------------------
# extended vectorization
# ---------------------------------------------------------------------------


def _flatten(core):
    """(r, I, J, r') -> (r, I*J, r') with k = i + I*j."""
    r, I, J, rr = core.shape
    return core.transpose(0, 2, 1, 3).reshape(r, I * J, rr)


def _unflatten(core, I, J):
    r, K, rr = core.shape
    if K != I * J:
        raise ValueError(f"mode size {K} is not {I}*{J}")
    return core.reshape(r, J, I, rr).transpose(0, 2, 1, 3)


def extended_vectorize(A):
    """View a TTMatrix as a TTVector over K_n = I_n J_n (i_n fastest).

    The dense result is vec(A) with the row and column multi-indices
    interleaved site by site: entry ``k_1 + K_1 k_2 + ...`` with
    ``k_n = i_n + I_n j_n``.
    """
    return TTVector([_flatten(c) for c in A.cores], A.ortho)


def unvectorize(T, row_sizes, col_sizes):
    """Inverse of :func:`extended_vectorize`."""
    return TTMatrix([_unflatten(c, I, J) for c, I, J in zip(T.cores, row_sizes, col_sizes)], T.ortho)


# ---------------------------------------------------------------------------
# orthogonalization, merging, splitting
# ---------------------------------------------------------------------------


def left_orth_core(core, nxt):
    """QR-orthogonalize ``core`` from the left; push the factor into ``nxt``."""
    shp = core.shape
    Q, R = np.linalg.qr(core.reshape(-1, shp[-1]))
    return Q.reshape(shp[:-1] + (Q.shape[1],)), np.tensordot(R, nxt, (1, 0))


def right_orth_core(prev, core):
    """QR-orthogonalize ``core`` from the right; push the factor into ``prev``."""
    shp = core.shape
    Q, R = np.linalg.qr(core.reshape(shp[0], -1).T)
    return np.tensordot(prev, R.T, (prev.ndim - 1, 0)), Q.T.reshape((Q.shape[1],) + shp[1:])


def orthogonalize_cores(cores, pivot, ortho=None):
    """Orthogonalize a list of cores around the pair ``(pivot, pivot+1)``.

    Cores already carrying the right flag are left untouched, so repeated
    calls are cheap and idempotent.
    """
    N = len(cores)
    cores = list(cores)
    ortho = list(ortho) if ortho is not None else [NONE] * N
    for n in range(pivot):
        if ortho[n] != LEFT:
            cores[n], cores[n + 1] = left_orth_core(cores[n], cores[n + 1])
            ortho[n] = LEFT
            ortho[n + 1] = NONE
    for n in range(N - 1, pivot + 1, -1):
        if ortho[n] != RIGHT:
            cores[n - 1], cores[n] = right_orth_core(cores[n - 1], cores[n])
            ortho[n] = RIGHT
            ortho[n - 1] = NONE
    for n in (pivot, pivot + 1):
        if 0 <= n < N:
            ortho[n] = NONE
    return cores, ortho


def orthogonalize(T, pivot):
    """Make cores ``< pivot`` left- and cores ``> pivot+1`` right-orthogonal."""
    N = T.order
    if N == 1:
        if pivot != 0:
            raise ValueError(f"pivot {pivot} out of range for N=1")
        return T
    if not 0 <= pivot <= N - 2:
        raise ValueError(f"pivot {pivot} out of range 0..{N - 2}")
    cores, ortho = orthogonalize_cores(T.cores, pivot, T.ortho)
    return T.with_cores(cores, ortho)


def merge_cores(T, n):
    """Supercore of sites ``n`` and ``n+1``."""
    if not 0 <= n <= T.order - 2:
        raise ValueError(f"site {n} out of range 0..{T.order - 2}")
    return mode1_contract(T.cores[n], T.cores[n + 1])


def split_supercore(S, delta=0.0, rank_cap=None, direction="left"):
    """Split a supercore into two cores by a delta-truncated SVD.

    The leading half of the physical modes goes to the first core. With
    ``direction="left"`` the first core holds ``U`` (left-orthogonal) and the
    second ``S V^T``; ``"right"`` stores ``U S`` and a right-orthogonal
    ``V^T``. Returns ``(core_n, core_n1, rank)``.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim < 3 or S.ndim % 2:
        raise ValueError(f"supercore must have an even order >= 4, got shape {S.shape}")
    half = 1 + (S.ndim - 2) // 2
    lshape, rshape = S.shape[:half], S.shape[half:]
    M = S.reshape(int(np.prod(lshape)), -1)
    U, s, Vt = truncated_svd(M, delta, rank_cap)
    r = s.size
    if direction == "left":
        a, b = U, s[:, None] * Vt
    elif direction == "right":
        a, b = U * s, Vt
    else:
        raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")
    return a.reshape(lshape + (r,)), b.reshape((r,) + rshape), r


# ---------------------------------------------------------------------------
# norms and products
# ---------------------------------------------------------------------------


def _flat_cores(T):
    return [c.reshape(c.shape[0], -1, c.shape[-1]) for c in T.cores]


def tt_norm(T):
    """Frobenius norm, read off the first core after right-orthogonalization."""
    cores = _flat_cores(T)
    for n in range(len(cores) - 1, 0, -1):
        cores[n - 1], cores[n] = right_orth_core(cores[n - 1], cores[n])
    return float(np.linalg.norm(cores[0]))


def _check_same_modes(T1, T2):
    if type(T1) is not type(T2):
        raise TypeError("inner product needs two trains of the same kind")
    s1 = [c.shape[1:-1] for c in T1.cores]
    s2 = [c.shape[1:-1] for c in T2.cores]
    if s1 != s2:
        raise ValueError(f"mode sizes differ: {s1} vs {s2}")


def tt_inner(T1, T2):
    """Inner product by zipping the two trains site by site."""
    _check_same_modes(T1, T2)
    E = np.ones((1, 1))
    for a, b in zip(_flat_cores(T1), _flat_cores(T2)):
        E = np.tensordot(np.tensordot(E, a, (0, 0)), b, ([0, 1], [0, 1]))
    return float(E[0, 0])


def tt_matvec(A, x):
    """TT of ``A @ x`` with ranks R^A_n R^x_n (no rounding)."""
    if A.col_sizes != x.mode_sizes:
        raise ValueError(f"column sizes {A.col_sizes} do not match vector modes {x.mode_sizes}")
    cores = []
    for a, c in zip(A.cores, x.cores):
        ra, I, _, sa = a.shape
        rx, _, sx = c.shape
        cores.append(np.einsum("aijb,pjq->apibq", a, c).reshape(ra * rx, I, sa * sx))
    return TTVector(cores)


def tt_matmat(A, B):
    """TT of ``A @ B`` with ranks R^A_n R^B_n (no rounding)."""
    if A.col_sizes != B.row_sizes:
        raise ValueError(f"column sizes {A.col_sizes} do not match row sizes {B.row_sizes}")
    cores = []
    for a, b in zip(A.cores, B.cores):
        ra, I, _, sa = a.shape
        rb, _, L, sb = b.shape
        cores.append(np.einsum("aijb,pjlq->apilbq", a, b).reshape(ra * rb, I, L, sa * sb))
    return TTMatrix(cores)


def tt_transpose(A):
    return TTMatrix([c.transpose(0, 2, 1, 3) for c in A.cores])


def tt_scale(T, alpha):
    cores = list(T.cores)
    cores[0] = cores[0] * float(alpha)
    return T.with_cores(cores)


def tt_add(T1, T2):
    """Sum of two trains by block-diagonal stacking of cores."""
    _check_same_modes(T1, T2)
    N = T1.order
    if N == 1:
        return T1.with_cores([T1.cores[0] + T2.cores[0]])
    cores = []
    for n, (a, b) in enumerate(zip(T1.cores, T2.cores)):
        mid = a.shape[1:-1]
        if n == 0:
            c = np.concatenate([a, b], axis=-1)
        elif n == N - 1:
            c = np.concatenate([a, b], axis=0)
        else:
            c = np.zeros((a.shape[0] + b.shape[0],) + mid + (a.shape[-1] + b.shape[-1],))
            c[: a.shape[0], ..., : a.shape[-1]] = a
            c[a.shape[0]:, ..., a.shape[-1]:] = b
        cores.append(c)
    return T1.with_cores(cores)


def tt_kron(A, B):
    """Kronecker product of two trains; ``A`` occupies the faster sites.

    Densely this is ``np.kron(dense(B), dense(A))`` under little-endian
    indexing.
    """
    if type(A) is not type(B):
        raise TypeError("tt_kron needs two trains of the same kind")
    return A.with_cores(list(A.cores) + list(B.cores))


def identity(sizes):
    """Identity TTMatrix with ranks 1."""
    return TTMatrix([np.eye(k).reshape(1, k, k, 1) for k in sizes])


def tt_round(T, delta=0.0, rank_cap=None):
    """Recompress a train; ``delta`` is relative to the norm of ``T``.

    Each split discards at most ``delta * ||T||`` in Frobenius norm, so the
    total error is at most ``delta * sqrt(N-1) * ||T||``.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    N = T.order
    mids = [c.shape[1:-1] for c in T.cores]
    cores = _flat_cores(T)
    for n in range(N - 1, 0, -1):
        cores[n - 1], cores[n] = right_orth_core(cores[n - 1], cores[n])
    nrm = np.linalg.norm(cores[0])
    thr = delta * nrm
    caps = _expand_caps(rank_cap, N)
    for n in range(N - 1):
        r, K, rr = cores[n].shape
        U, s, Vt = truncated_svd(cores[n].reshape(r * K, rr), thr, caps[n])
        cores[n] = U.reshape(r, K, s.size)
        cores[n + 1] = np.tensordot(s[:, None] * Vt, cores[n + 1], (1, 0))
    out = [c.reshape((c.shape[0],) + m + (c.shape[-1],)) for c, m in zip(cores, mids)]
    ortho = [LEFT] * (N - 1) + [NONE]
    return T.with_cores(out, ortho)
