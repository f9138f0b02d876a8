"""Two-site alternating (MALS) computation of a regularized pseudoinverse.

Given a TT matrix ``A`` of size I x J with I >= J, :func:`mals_pinv` looks
for a TT matrix ``P`` of the same size minimizing

    F(P) = ||I_J - P^T A||_F^2 + lam ||P||_F^2,

whose unconstrained minimizer is ``(A A^T + lam I)^{-1} A``. Each step fixes
all cores but a neighboring pair, solves the resulting small SPD system
through the environment machinery in :mod:`ttpinv.env`, and splits the
optimized supercore back into two cores with a truncated SVD.
"""

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import tt as ttm
from .env import Environments
from .krylov import KrylovConfig, krylov_solve
from .tt import TTMatrix


class MALSError(ValueError):
    pass


@dataclass
class MALSConfig:
    lam: float = 0.0
    eps: float = 1e-2
    delta: float = None  # None -> 1e-6 / sqrt(N-1)
    rank_cap: object = 50  # int, sequence of N-1 ints, or None (uncapped)
    max_sweeps: int = 20
    solver: str = "cg"
    local_tol: float = 1e-8
    local_max_iters: int = 500
    seed: int = 0
    init_ranks: object = None  # None -> (1, 2, ..., 2, 1)
    direct_below: float = 1e-2  # switch to direct F evaluation below this r

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.delta is not None and self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.rank_cap is None:
            caps = []
        else:
            caps = [self.rank_cap] if np.isscalar(self.rank_cap) else list(self.rank_cap)
        if any(int(c) < 1 for c in caps):
            raise ValueError("rank caps must be >= 1")
        KrylovConfig(self.solver, self.local_tol, self.local_max_iters)

    def resolved_delta(self, N):
        if self.delta is not None:
            return float(self.delta)
        return default_delta(N)

    def caps(self, N):
        return ttm._expand_caps(self.rank_cap, N)

    def krylov(self):
        return KrylovConfig(self.solver, self.local_tol, self.local_max_iters)


def default_delta(N):
    return 1e-6 / math.sqrt(max(N - 1, 1))


# ---------------------------------------------------------------------------
# trace
# ---------------------------------------------------------------------------

TRACE_FIELDS = ("sweep", "iter", "site", "rel_residual", "max_rank", "local_iters", "wall_ms")


@dataclass
class ConvergenceTrace:
    """One row per local solve, plus the residual of the starting point."""

    rows: list = field(default_factory=list)
    initial: float = float("nan")
    status: str = "running"
    sweeps: int = 0
    info: dict = field(default_factory=dict)

    def append(self, **row):
        self.rows.append(tuple(row[k] for k in TRACE_FIELDS))

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        k = TRACE_FIELDS.index(name)
        return np.array([r[k] for r in self.rows])

    @property
    def residuals(self):
        return self.column("rel_residual")

    @property
    def final(self):
        return self.rows[-1][3] if self.rows else self.initial

    @property
    def converged(self):
        return self.status == "converged"

    def to_csv(self, fh=None):
        """Write CSV (to ``fh`` or return as a string), ending in a status comment."""
        out = fh if fh is not None else io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(TRACE_FIELDS)
        for s, it, site, r, mr, li, ms in self.rows:
            w.writerow([s, it, site, repr(float(r)), mr, li, f"{ms:.3f}"])
        out.write(f"# status={self.status}\n")
        if fh is None:
            return out.getvalue()
        return None

    @classmethod
    def from_csv(cls, text):
        lines = text.splitlines()
        status = "unknown"
        body = []
        for ln in lines:
            if ln.startswith("#"):
                if ln.startswith("# status="):
                    status = ln.split("=", 1)[1].strip()
            else:
                body.append(ln)
        rdr = csv.reader(body)
        header = next(rdr)
        if tuple(header) != TRACE_FIELDS:
            raise ValueError(f"unexpected trace header {header}")
        tr = cls(status=status)
        for row in rdr:
            tr.rows.append((int(row[0]), int(row[1]), int(row[2]), float(row[3]),
                            int(row[4]), int(row[5]), float(row[6])))
        if tr.rows:
            tr.sweeps = tr.rows[-1][0]
        return tr


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def init_guess(row_sizes, col_sizes, ranks=None, seed=0):
    """Random starting train with cores 2..N-1 (0-based) right-orthogonal.

    Entries are i.i.d. standard normal from ``numpy.random.default_rng(seed)``.
    Interior ranks default to 2 and are clipped to what the mode sizes allow.
    """
    N = len(row_sizes)
    K = [int(i) * int(j) for i, j in zip(row_sizes, col_sizes)]
    if ranks is None:
        ranks = [1] + [2] * (N - 1) + [1]
    ranks = [int(r) for r in ranks]
    if len(ranks) != N + 1 or ranks[0] != 1 or ranks[-1] != 1:
        raise ValueError(f"initial ranks must have length N+1 with unit ends, got {ranks}")
    for k in range(1, N):
        ranks[k] = min(ranks[k], math.prod(K[:k]), math.prod(K[k:]))
    rng = np.random.default_rng(seed)
    cores = [rng.standard_normal((ranks[n], row_sizes[n], col_sizes[n], ranks[n + 1])) for n in range(N)]
    ortho = [ttm.NONE] * N
    for n in range(N - 1, 1, -1):
        cores[n - 1], cores[n] = ttm.right_orth_core(cores[n - 1], cores[n])
        ortho[n] = ttm.RIGHT
    return TTMatrix(cores, ortho)


def f_min(sigma, lam, J):
    """Smallest attainable F for singular values ``sigma`` of an I x J matrix."""
    s = np.asarray(sigma, dtype=np.float64)
    if lam > 0:
        return float(J - np.sum(s * s / (s * s + lam)))
    tol = s.max(initial=0.0) * max(J, s.size) * np.finfo(np.float64).eps * 10
    return float(J - np.count_nonzero(s > tol))


def objective_direct(A, P, lam=0.0):
    """F(P) = ||I - P^T A||_F^2 + lam ||P||_F^2 by TT contractions."""
    M = ttm.tt_matmat(ttm.tt_transpose(P), A)
    D = ttm.tt_add(ttm.identity(A.col_sizes), ttm.tt_scale(M, -1.0))
    F = ttm.tt_norm(D) ** 2
    if lam:
        F += lam * ttm.tt_norm(P) ** 2
    return float(F)


def rel_from_F(F, J):
    return math.sqrt(max(F, 0.0) / J)


def local_solve(lp, cfg, x0=None):
    """Approximately solve ``(A_n + lam I) p = b_n``; returns a KrylovResult."""
    kcfg = cfg.krylov() if isinstance(cfg, MALSConfig) else cfg
    return krylov_solve(lp.operator(), lp.rhs, kcfg, x0=x0)


def stopping_check(residuals, eps, N):
    """Stopping rule on the squared relative residual over a window of N-2.

    ``residuals`` is the sequence of r values including the starting point.
    True when the decrease over the window is below ``eps**2`` relative.
    """
    r = np.asarray(residuals, dtype=np.float64)
    w = max(N - 2, 1)
    if r.size < w + 1:
        return False
    old, new = r[-1 - w] ** 2, r[-1] ** 2
    if old == 0.0:
        return True
    return bool(old - new < eps * eps * old)


def sweep_schedule(N):
    """Pair indices of one forward and one backward half-sweep."""
    fwd = [(n, "left") for n in range(0, max(N - 2, 1))]
    bwd = [(n, "right") for n in range(N - 2, 0, -1)]
    return fwd + bwd


# ---------------------------------------------------------------------------
# solver state
# ---------------------------------------------------------------------------


class MALSState:
    """Mutable iterate of one MALS run.

    ``cores`` holds P with cores left of ``pivot`` left-orthogonal and
    cores right of ``pivot+1`` right-orthogonal; ``env`` holds the matching
    environments.
    """

    def __init__(self, A, cfg, P0=None):
        if not isinstance(A, TTMatrix):
            raise MALSError("A must be a TTMatrix")
        N = A.order
        if N < 2:
            raise MALSError("MALS needs at least two sites")
        I, J = A.shape
        if I < J:
            raise MALSError(f"A is {I}x{J}; pass the transpose so that rows >= columns")
        if not all(np.all(np.isfinite(c)) for c in A.cores):
            raise MALSError("A has non-finite entries")
        self.A = A
        self.cfg = cfg
        self.N = N
        self.J = float(J)
        self.delta = cfg.resolved_delta(N)
        self.caps = cfg.caps(N)
        if P0 is None:
            ranks = cfg.init_ranks or [1] + [2] * (N - 1) + [1]
            ranks = [1] + [int(r) if c is None else min(int(r), c) for r, c in zip(ranks[1:-1], self.caps)] + [1]
            P0 = init_guess(A.row_sizes, A.col_sizes, ranks, cfg.seed)
        elif (P0.row_sizes, P0.col_sizes) != (A.row_sizes, A.col_sizes):
            raise MALSError("initial guess does not match the shape of A")
        cores, _ = ttm.orthogonalize_cores([np.array(c) for c in P0.cores], 0, P0.ortho)
        self.cores = cores
        self.pivot = 0
        self.env = Environments(self.cores, A.cores, pivot=0)
        self.direct = False
        self.F = None
        self.trace = ConvergenceTrace()

    def P(self):
        return TTMatrix(self.cores)

    def supercore(self, n=None):
        n = self.pivot if n is None else n
        return np.tensordot(self.cores[n], self.cores[n + 1], (3, 0))

    def local_problem(self, n=None):
        n = self.pivot if n is None else n
        return self.env.local_problem(n, self.cfg.lam)

    def objective(self, lp=None, x=None):
        """F at the current iterate, in the local frame or directly."""
        if self.direct:
            return objective_direct(self.A, self.P(), self.cfg.lam)
        lp = lp or self.local_problem()
        if x is None:
            x = lp.to_vector(self.supercore())
        return lp.objective(x, self.J)

    def step(self, n, direction):
        """One local solve and split at pair ``(n, n+1)``; returns (r, iters)."""
        if n != self.pivot:
            raise MALSError(f"step at pair {n} but the pivot is {self.pivot}")
        lp = self.local_problem(n)
        S = self.supercore(n)
        x0 = lp.to_vector(S)
        if self.direct and self.F is not None:
            F_inc = self.F
        else:
            F_inc = self.objective(lp, x0)

        res = local_solve(lp, self.cfg, x0)
        if not np.all(np.isfinite(res.x)):
            raise MALSError(f"non-finite local solution at pair {n}")
        cap = self.caps[n]
        a, b, _ = ttm.split_supercore(lp.to_tensor(res.x), self.delta, cap, direction)
        old = (self.cores[n], self.cores[n + 1])
        self.cores[n], self.cores[n + 1] = a, b
        if self.direct:
            F_cand = self.objective()
        else:
            F_cand = lp.objective(lp.to_vector(np.tensordot(a, b, (3, 0))), self.J)
        if not np.isfinite(F_cand):
            raise MALSError(f"non-finite objective at pair {n}")
        if F_cand <= F_inc:
            F = F_cand
        else:
            # keep the incumbent, re-split exactly in the sweep direction
            r = old[0].shape[3]
            self.cores[n], self.cores[n + 1], _ = ttm.split_supercore(S, 0.0, r, direction)
            F = F_inc
        self.F = F

        if direction == "left":
            self.env.update_left(n, self.cores[n])
            self.pivot = min(n + 1, self.N - 2)
        else:
            self.env.update_right(n + 1, self.cores[n + 1])
            self.pivot = n - 1
        r = rel_from_F(F, self.J)
        if not self.direct and r < self.cfg.direct_below:
            self.direct = True
            self.F = None
        return r, res.iters


def relative_residual(state):
    """r = sqrt(F / J) at the state's current iterate."""
    return rel_from_F(state.objective(), state.J)


def mals_pinv(A, cfg=None, P0=None, callback=None):
    """Approximate regularized pseudoinverse of ``A`` in TT format.

    Returns ``(P, trace)``. ``callback(state, row)`` is invoked after every
    local step when given.
    """
    cfg = cfg or MALSConfig()
    st = MALSState(A, cfg, P0)
    N = st.N
    trace = st.trace
    r0 = relative_residual(st)
    if r0 < cfg.direct_below:
        st.direct = True
        r0 = relative_residual(st)
    trace.initial = r0
    history = [r0]
    it = 0
    trace.status = "max_sweeps"
    for sweep in range(1, cfg.max_sweeps + 1):
        trace.sweeps = sweep
        stop = False
        for n, direction in sweep_schedule(N):
            t0 = time.perf_counter()
            r, iters = st.step(n, direction)
            it += 1
            ms = (time.perf_counter() - t0) * 1e3
            trace.append(sweep=sweep, iter=it, site=n, rel_residual=r,
                         max_rank=max(c.shape[3] for c in st.cores[:-1]) if N > 1 else 1,
                         local_iters=iters, wall_ms=ms)
            history.append(r)
            if callback is not None:
                callback(st, trace.rows[-1])
            if r == 0.0 or stopping_check(history, cfg.eps, N):
                stop = True
                break
        if stop:
            trace.status = "converged"
            break
    return st.P(), trace


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------


def objective_report(A, P, lam=0.0, sigma=None, need_gap=False):
    """Return a dict with ``F``, ``r``, ``F_min`` and ``G = F - F_min``.

    ``F_min`` needs the singular values of ``A``; they are taken from
    ``sigma`` or from a dense SVD when ``A`` is small enough. Otherwise the
    gap fields are ``None`` (or an error is raised if ``need_gap``).
    """
    F = objective_direct(A, P, lam)
    I, J = A.shape
    out = {"F": F, "r": rel_from_F(F, J), "F_min": None, "G": None}
    if sigma is None and I * J <= ttm.DENSE_LIMIT:
        sigma = np.linalg.svd(ttm.tt_to_dense(A), compute_uv=False)
    if sigma is None:
        if need_gap:
            raise ValueError("the gap needs the spectrum of A, which is too large to compute densely")
        return out
    out["F_min"] = f_min(sigma, lam, J)
    out["G"] = F - out["F_min"]
    return out
