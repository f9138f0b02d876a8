"""Two-site MALS solver for square TT linear systems, and preconditioning.

:func:`mals_linsolve` sweeps over neighboring pairs of the solution train.
At each pair the Galerkin projection of the system onto the current frame is
solved. In the default residual mode the global residual ``||Mx - b||`` is
tracked through environments and a step is accepted only if it does not
increase it; if the Galerkin step fails that test, the frame-restricted
least-squares step (normal equations, CG) is tried before keeping the
incumbent. In energy mode, used for SPD systems such as the baseline
pseudoinverse operator, the quantity tracked is ``x^T M x - 2 x^T b``.
"""

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator

from . import _kernels as K
from . import tt as ttm
from .env import assemble_local_rhs, env2_left, env2_right, env3_left, env3_right, env4_left, env4_right
from .krylov import KrylovConfig, krylov_solve
from .mals import ConvergenceTrace, MALSConfig, stopping_check, sweep_schedule
from .tt import TTMatrix, TTVector


class LinSolveError(ValueError):
    pass


@dataclass(frozen=True)
class LinearSystemTT:
    M: TTMatrix
    b: TTVector
    symmetric: bool = False
    info: dict = None

    def __post_init__(self):
        if self.M.row_sizes != self.M.col_sizes:
            raise LinSolveError(f"operator is not square: {self.M.row_sizes} x {self.M.col_sizes}")
        if self.M.row_sizes != self.b.mode_sizes:
            raise LinSolveError(f"rhs modes {self.b.mode_sizes} do not match operator {self.M.row_sizes}")


@dataclass
class LinSolveConfig:
    tol: float = 1e-6
    eps: float = 1e-4  # window rule: stagnation (residual mode) or convergence (energy mode)
    delta: float = None  # None -> 0.1 * tol / sqrt(N-1)
    delta_relative: bool = True  # truncation relative to the supercore norm
    rank_cap: object = 50
    max_sweeps: int = 20
    local_method: str = None  # None -> cg if symmetric else gmres
    local_tol: float = None  # None -> min(1e-8, 1e-2 * tol)
    local_max_iters: int = 500
    restart: int = 50
    seed: int = 0
    init_ranks: object = None
    energy_offset: float = None  # set to run in energy mode
    energy_scale: float = 1.0
    direct_below: float = 1e-5

    def __post_init__(self):
        if self.tol < 0 or not self.eps > 0:
            raise ValueError("tol must be >= 0 and eps > 0")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")

    def resolved_delta(self, N):
        if self.delta is not None:
            return float(self.delta)
        return 0.1 * self.tol / math.sqrt(N - 1) if self.tol > 0 else 1e-10

    def krylov(self, symmetric):
        method = self.local_method or ("cg" if symmetric else "gmres")
        tol = self.local_tol if self.local_tol is not None else min(1e-8, 1e-2 * self.tol) or 1e-8
        return KrylovConfig(method, tol, self.local_max_iters, self.restart)


def init_vector(mode_sizes, ranks=None, seed=0):
    """Random TTVector with cores 2..N-1 right-orthogonal."""
    N = len(mode_sizes)
    if ranks is None:
        ranks = [1] + [2] * (N - 1) + [1]
    ranks = [int(r) for r in ranks]
    for k in range(1, N):
        ranks[k] = min(ranks[k], math.prod(mode_sizes[:k]), math.prod(mode_sizes[k:]))
    rng = np.random.default_rng(seed)
    cores = [rng.standard_normal((ranks[n], mode_sizes[n], ranks[n + 1])) for n in range(N)]
    for n in range(N - 1, 1, -1):
        cores[n - 1], cores[n] = ttm.right_orth_core(cores[n - 1], cores[n])
    return TTVector(cores)


def residual_norm(M, x, b):
    """||Mx - b|| via TT contractions."""
    return ttm.tt_norm(ttm.tt_add(ttm.tt_matvec(M, x), ttm.tt_scale(b, -1.0)))


def _ones(nd):
    return np.ones((1,) * nd)


class _LinState:
    def __init__(self, sys, cfg, x0):
        M, b = sys.M, sys.b
        N = M.order
        if N < 2:
            raise LinSolveError("the MALS solver needs at least two sites")
        self.N = N
        self.cfg = cfg
        self.M = M
        self.b = b
        self.Mc = list(M.cores)
        self.MT = [c.transpose(0, 2, 1, 3) for c in M.cores]
        self.bc = list(b.cores)
        self.energy = cfg.energy_offset is not None
        if self.energy and not sys.symmetric:
            raise LinSolveError("energy mode needs a symmetric system")
        self.kcfg = cfg.krylov(sys.symmetric)
        self.ncfg = KrylovConfig("cg", self.kcfg.tol, self.kcfg.max_iters)
        self.bnorm = ttm.tt_norm(b)
        self.delta = cfg.resolved_delta(N)
        self.caps = ttm._expand_caps(cfg.rank_cap, N)
        if x0 is None:
            x0 = init_vector(b.mode_sizes, cfg.init_ranks, cfg.seed)
        elif x0.mode_sizes != b.mode_sizes:
            raise LinSolveError("initial guess does not match the system size")
        cores, _ = ttm.orthogonalize_cores([np.array(c) for c in x0.cores], 0)
        self.x = cores
        self.pivot = 0
        self.direct = False
        self.val = None
        B = N + 1
        self.GL, self.GR = [None] * B, [None] * B
        self.FL, self.FR = [None] * B, [None] * B
        self.HL, self.HR = [None] * B, [None] * B
        self.gL, self.gR = [None] * B, [None] * B
        self.GL[0] = self.GR[N] = _ones(3)
        self.FL[0] = self.FR[N] = _ones(2)
        self.HL[0] = self.HR[N] = _ones(4)
        self.gL[0] = self.gR[N] = _ones(3)
        for n in range(N - 1, 1, -1):
            self.update_right(n)

    # environments -------------------------------------------------------

    def update_left(self, n):
        x = self.x[n]
        self.GL[n + 1] = env3_left(self.GL[n], x, self.Mc[n], x)
        self.FL[n + 1] = env2_left(self.FL[n], x, self.bc[n])
        if not self.energy:
            self.HL[n + 1] = env4_left(self.HL[n], x[:, :, None, :], self.MT[n])
            self.gL[n + 1] = env3_left(self.gL[n], x, self.MT[n], self.bc[n])

    def update_right(self, n):
        x = self.x[n]
        self.GR[n] = env3_right(self.GR[n + 1], x, self.Mc[n], x)
        self.FR[n] = env2_right(self.FR[n + 1], x, self.bc[n])
        if not self.energy:
            self.HR[n] = env4_right(self.HR[n + 1], x[:, :, None, :], self.MT[n])
            self.gR[n] = env3_right(self.gR[n + 1], x, self.MT[n], self.bc[n])

    # local algebra ------------------------------------------------------

    def local(self, n):
        r, rr = self.x[n].shape[0], self.x[n + 1].shape[2]
        shape = (r, self.Mc[n].shape[1], self.Mc[n + 1].shape[1], rr)
        size = int(np.prod(shape))
        GL, GR, M1, M2 = self.GL[n], self.GR[n + 2], self.Mc[n], self.Mc[n + 1]

        def G(v):
            y = K.local_op(GL, M1, M2, GR, np.asarray(v).reshape(shape, order="F"))
            return y.reshape(-1, order="F")

        f = assemble_local_rhs(self.FL[n], self.FR[n + 2], self.bc[n], self.bc[n + 1]).reshape(-1, order="F")
        loc = {"shape": shape, "size": size, "G": G, "f": f}
        if not self.energy:
            HL, HR, T1, T2 = self.HL[n], self.HR[n + 2], self.MT[n], self.MT[n + 1]
            shape6 = (r, shape[1], 1, shape[2], 1, rr)
            gram = K.GramApply(HL, T1, T2, HR)

            def H(v):
                y = gram(np.asarray(v).reshape(shape6, order="F"))
                return y.reshape(-1, order="F")

            bb = np.tensordot(self.bc[n], self.bc[n + 1], (2, 0))
            g = K.local_op(self.gL[n], T1, T2, self.gR[n + 2], bb).reshape(-1, order="F")
            loc.update(H=H, g=g)
        return loc

    def value(self, loc, v):
        """Tracked quantity at local vector v (squared residual or energy)."""
        if self.energy:
            return float(v @ loc["G"](v) - 2.0 * (v @ loc["f"]))
        if self.direct:
            return residual_norm(self.M, TTVector(self.x), self.b) ** 2
        return float(v @ loc["H"](v) - 2.0 * (v @ loc["g"]) + self.bnorm ** 2)

    def rel(self, val):
        if self.energy:
            return math.sqrt(max(val + self.cfg.energy_offset, 0.0) / self.cfg.energy_scale)
        if self.bnorm == 0.0:
            return math.sqrt(max(val, 0.0))
        return math.sqrt(max(val, 0.0)) / self.bnorm

    def _split(self, v, shape, n, direction):
        S = v.reshape(shape, order="F")
        d = self.delta * np.linalg.norm(v) if self.cfg.delta_relative else self.delta
        a, c, _ = ttm.split_supercore(S, d, self.caps[n], direction)
        return a, c

    def step(self, n, direction):
        loc = self.local(n)
        shape, size = loc["shape"], loc["size"]
        S = np.tensordot(self.x[n], self.x[n + 1], (2, 0))
        v0 = S.reshape(-1, order="F")
        old = (self.x[n], self.x[n + 1])
        if self.direct and self.val is not None:
            val_inc = self.val
        else:
            val_inc = self.value(loc, v0)
        iters = 0

        def trial(v):
            a, c = self._split(v, shape, n, direction)
            self.x[n], self.x[n + 1] = a, c
            vc = np.tensordot(a, c, (2, 0)).reshape(-1, order="F")
            return self.value(loc, vc)

        op = LinearOperator((size, size), matvec=loc["G"], dtype=np.float64)
        res = krylov_solve(op, loc["f"], self.kcfg, x0=v0)
        iters += res.iters
        if not np.all(np.isfinite(res.x)):
            raise LinSolveError(f"non-finite local solution at pair {n}")
        val = trial(res.x)
        if not val <= val_inc and not self.energy:
            hop = LinearOperator((size, size), matvec=loc["H"], dtype=np.float64)
            res = krylov_solve(hop, loc["g"], self.ncfg, x0=v0)
            iters += res.iters
            val = trial(res.x)
        if not val <= val_inc:
            r = old[0].shape[2]
            self.x[n], self.x[n + 1], _ = ttm.split_supercore(S, 0.0, r, direction)
            val = val_inc
        self.val = val
        if direction == "left":
            self.update_left(n)
            self.pivot = min(n + 1, self.N - 2)
        else:
            self.update_right(n + 1)
            self.pivot = n - 1
        r = self.rel(val)
        if not self.energy and not self.direct and r < self.cfg.direct_below:
            self.direct = True
            self.val = None
        return r, iters

    def initial(self):
        loc = self.local(0)
        v0 = np.tensordot(self.x[0], self.x[1], (2, 0)).reshape(-1, order="F")
        return self.rel(self.value(loc, v0))


def mals_linsolve(sys, cfg=None, x0=None, callback=None):
    """Solve ``sys.M x = sys.b`` by two-site sweeps; returns ``(x, trace)``.

    ``trace.status`` is ``"converged"`` when the relative residual reached
    ``cfg.tol`` (residual mode) or the window rule fired (energy mode), and
    ``"stagnated"`` or ``"max_sweeps"`` otherwise. ``trace.info`` carries the
    final residual recomputed by TT contraction.
    """
    cfg = cfg or LinSolveConfig()
    st = _LinState(sys, cfg, x0)
    N = st.N
    trace = ConvergenceTrace()
    trace.initial = st.initial()
    history = [trace.initial]
    trace.status = "max_sweeps"
    it = 0
    done = False
    for sweep in range(1, cfg.max_sweeps + 1):
        trace.sweeps = sweep
        for n, direction in sweep_schedule(N):
            t0 = time.perf_counter()
            r, iters = st.step(n, direction)
            it += 1
            ms = (time.perf_counter() - t0) * 1e3
            trace.append(sweep=sweep, iter=it, site=n, rel_residual=r,
                         max_rank=max(c.shape[2] for c in st.x[:-1]),
                         local_iters=iters, wall_ms=ms)
            history.append(r)
            if callback is not None:
                callback(st, trace.rows[-1])
            if r <= cfg.tol:
                trace.status = "converged"
                done = True
            elif stopping_check(history, cfg.eps, N):
                trace.status = "converged" if st.energy else "stagnated"
                done = True
            if done:
                break
        if done:
            break
    x = TTVector(st.x)
    if not st.energy:
        res = residual_norm(sys.M, x, sys.b)
        rel = res / st.bnorm if st.bnorm else res
        trace.info["residual"] = rel
        if trace.status == "converged" and rel > cfg.tol * (1 + 1e-6) + 1e-15:
            trace.status = "stagnated"
    trace.info["local_iters"] = int(trace.column("local_iters").sum()) if len(trace) else 0
    return x, trace


# ---------------------------------------------------------------------------
# preconditioning and the baseline
# ---------------------------------------------------------------------------


def build_preconditioned_system(A, P, b, delta_round=1e-8, rank_cap=None):
    """System ``P^T A x = P^T b`` with both sides rounded (relative delta)."""
    if A.row_sizes != P.row_sizes or A.col_sizes != P.col_sizes:
        raise LinSolveError(f"preconditioner shape {P.row_sizes}x{P.col_sizes} does not match A")
    if A.row_sizes != b.mode_sizes:
        raise LinSolveError("rhs does not match the rows of A")
    PT = ttm.tt_transpose(P)
    M0 = ttm.tt_matmat(PT, A)
    c0 = ttm.tt_matvec(PT, b)
    M = ttm.tt_round(M0, delta_round, rank_cap)
    c = ttm.tt_round(c0, delta_round, rank_cap)
    info = {"M_ranks_before": M0.ranks, "M_ranks_after": M.ranks,
            "b_ranks_before": c0.ranks, "b_ranks_after": c.ranks}
    return LinearSystemTT(M, c, False, info)


def std_operator(A, lam=0.0):
    """TT operator of ``I_J (x) A A^T + lam I`` on extended-vectorized P.

    Site cores have ranks ``(R^A)^2`` (plus one when ``lam > 0``) and act on
    ``k = i + I j``.
    """
    cores = []
    for a in A.cores:
        ra, I, J, rb = a.shape
        AA = np.einsum("aicb,dkce->adikbe", a, a)  # (a,a'), i, i', (b,b')
        core = np.einsum("adikbe,jl->adijklbe", AA, np.eye(J))
        # rows k = i + I j, cols k' = i' + I j'
        core = core.transpose(0, 1, 3, 2, 5, 4, 6, 7).reshape(ra * ra, J * I, J * I, rb * rb)
        cores.append(core)
    Op = TTMatrix(cores)
    if lam > 0:
        Op = ttm.tt_add(Op, ttm.tt_scale(ttm.identity([i * j for i, j in zip(A.row_sizes, A.col_sizes)]), lam))
    return Op


def std_mals_pinv(A, cfg=None, lin_cfg=None):
    """Baseline: solve the big SPD system for vec(P) with the generic solver.

    Uses the same truncation, caps, window rule and seed as ``cfg``; the
    trace column equals the relative residual of the pseudoinverse problem.
    """
    cfg = cfg or MALSConfig()
    N = A.order
    I, J = A.shape
    if I < J:
        raise LinSolveError(f"A is {I}x{J}; pass the transpose so that rows >= columns")
    Op = std_operator(A, cfg.lam)
    rhs = ttm.extended_vectorize(A)
    sys = LinearSystemTT(Op, TTVector(rhs.cores), True)
    lc = lin_cfg or LinSolveConfig(
        tol=0.0, eps=cfg.eps, delta=cfg.resolved_delta(N), delta_relative=False,
        rank_cap=cfg.rank_cap, max_sweeps=cfg.max_sweeps, local_method=cfg.solver,
        local_tol=cfg.local_tol, local_max_iters=cfg.local_max_iters, seed=cfg.seed,
        init_ranks=cfg.init_ranks, energy_offset=float(J), energy_scale=float(J),
    )
    x, trace = mals_linsolve(sys, lc)
    P = ttm.unvectorize(x, A.row_sizes, A.col_sizes)
    return TTMatrix(P.cores), trace
