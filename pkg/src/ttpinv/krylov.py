"""Thin wrapper over scipy's Krylov solvers with iteration counting."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

METHODS = ("cg", "gmres", "bicgstab")


@dataclass(frozen=True)
class KrylovConfig:
    method: str = "cg"
    tol: float = 1e-8
    max_iters: int = 500
    restart: int = 50

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown Krylov method {self.method!r}; choose from {METHODS}")
        if not self.tol > 0:
            raise ValueError("Krylov tolerance must be positive")
        if self.max_iters < 1 or self.restart < 1:
            raise ValueError("max_iters and restart must be >= 1")


@dataclass
class KrylovResult:
    x: np.ndarray
    iters: int
    converged: bool
    residual: float


def _as_operator(op, n):
    if isinstance(op, spla.LinearOperator):
        return op
    if callable(op):
        return spla.LinearOperator((n, n), matvec=op, dtype=np.float64)
    return spla.aslinearoperator(np.asarray(op, dtype=np.float64))


def krylov_solve(op, b, cfg=None, x0=None):
    """Solve ``op x = b``; returns a :class:`KrylovResult`.

    The returned iterate is the final one unless it has a larger residual
    than the starting guess, in which case the starting guess is returned.
    Non-convergence is reported through ``converged`` rather than raised.
    """
    cfg = cfg or KrylovConfig()
    b = np.asarray(b, dtype=np.float64).ravel()
    if not np.all(np.isfinite(b)):
        raise ValueError("non-finite right-hand side")
    n = b.size
    A = _as_operator(op, n)
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=np.float64).ravel().copy()
    bnorm = np.linalg.norm(b)
    r0 = np.linalg.norm(b - A.matvec(x0))
    if bnorm == 0.0:
        return KrylovResult(np.zeros(n), 0, True, 0.0)
    if r0 <= cfg.tol * bnorm:
        return KrylovResult(x0, 0, True, r0)

    count = [0]

    def cb(_):
        count[0] += 1

    kw = dict(x0=x0, rtol=cfg.tol, atol=0.0, maxiter=cfg.max_iters, callback=cb)
    if cfg.method == "cg":
        x, _ = spla.cg(A, b, **kw)
    elif cfg.method == "bicgstab":
        x, _ = spla.bicgstab(A, b, **kw)
    else:
        restart = min(cfg.restart, cfg.max_iters)
        kw["maxiter"] = -(-cfg.max_iters // restart)
        x, _ = spla.gmres(A, b, restart=restart, callback_type="pr_norm", **kw)
    res = np.linalg.norm(b - A.matvec(x))
    if not np.all(np.isfinite(x)) or res > r0:
        x, res = x0, r0
    return KrylovResult(x, count[0], bool(res <= cfg.tol * bnorm * (1 + 1e-6)), res)
