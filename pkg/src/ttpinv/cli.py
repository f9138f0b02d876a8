"""Command-line interface: generate, pinv, solve, verify.

Exit codes: 0 success, 1 I/O error, 2 invalid input, 3 no convergence (the
result is still written and the trace ends with ``# status=...``).
"""

import argparse
import json
import os
import sys
from contextlib import contextmanager

from . import container
from . import tt as ttm
from .gallery import FAMILIES, ProblemSpec
from .linsolve import (LinearSystemTT, LinSolveConfig, LinSolveError,
                       build_preconditioned_system, mals_linsolve)
from .mals import MALSConfig, MALSError, mals_pinv, objective_direct, rel_from_F
from .oracle import ORACLE_LIMIT, bound_margins, oracle_checks

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_NOCONV = 0, 1, 2, 3
INTERLACE_LIMIT = 2**14  # the dense frame has one column per supercore entry


class CLIError(Exception):
    def __init__(self, msg, code):
        super().__init__(msg)
        self.code = code


@contextmanager
def thread_limits(threads):
    """Limit BLAS threads for the duration of a command.

    The numba kernels are serial, so BLAS is the only source of parallelism.
    """
    if threads is None:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=threads):
        yield


def _load(path, kind=None):
    try:
        T = container.load(path)
    except FileNotFoundError:
        raise CLIError(f"no such file: {path}", EXIT_IO)
    except OSError as exc:
        raise CLIError(f"cannot read {path}: {exc}", EXIT_IO)
    except container.ContainerError as exc:
        raise CLIError(f"{path}: {exc}", EXIT_INVALID)
    if kind is not None and not isinstance(T, kind):
        raise CLIError(f"{path}: expected a TT {kind.__name__[2:].lower()}", EXIT_INVALID)
    return T


def _save(path, T):
    try:
        container.save(path, T)
    except OSError as exc:
        raise CLIError(f"cannot write {path}: {exc}", EXIT_IO)


def _write_text(path, text):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise CLIError(f"cannot write {path}: {exc}", EXIT_IO)


def _check_writable(path):
    d = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(d):
        raise CLIError(f"output directory does not exist: {d}", EXIT_IO)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_generate(args):
    try:
        spec = ProblemSpec(args.family, args.N, B=args.B, k0=args.k0, c=args.c, seed=args.seed)
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_INVALID)
    _check_writable(args.output)
    A, b = spec.build()
    _save(args.output, A)
    meta = [f"family={spec.family}", f"N={spec.N}", f"seed={spec.seed}"]
    if spec.family == "circulant":
        meta.append(f"B={spec.B!r}")
    if spec.family == "random-svd":
        meta.append(f"k0={spec.k0!r}")
    if spec.family == "convection":
        meta.append(f"M={spec.N // 3}")
        meta.append(f"c={spec.c!r}" if spec.c is not None else f"c={2.0 ** (spec.N - 10)!r}")
        rhs = args.rhs_output or _sibling(args.output, ".rhs.tt")
        _save(rhs, b)
        meta.append(f"rhs={os.path.basename(rhs)}")
    meta.append(f"rows={A.shape[0]}")
    meta.append(f"cols={A.shape[1]}")
    meta.append(f"ranks={','.join(map(str, A.ranks))}")
    _write_text(args.output + ".meta", "\n".join(meta) + "\n")
    return EXIT_OK


def _sibling(path, suffix):
    root, ext = os.path.splitext(path)
    return root + suffix


def _rank_cap(value):
    if value is None:
        return 50
    return value


def cmd_pinv(args):
    A = _load(args.A, ttm.TTMatrix)
    _check_writable(args.output)
    try:
        cfg = MALSConfig(
            lam=args.lam, eps=args.eps, delta=args.delta, rank_cap=_rank_cap(args.max_rank),
            max_sweeps=args.max_sweeps, solver=args.solver, local_tol=args.local_tol,
            local_max_iters=args.local_maxit, seed=args.seed,
        )
        P, trace = mals_pinv(A, cfg)
    except (ValueError, MALSError) as exc:
        raise CLIError(str(exc), EXIT_INVALID)
    _save(args.output, P)
    if args.trace:
        _write_text(args.trace, trace.to_csv())
    print(f"status={trace.status} sweeps={trace.sweeps} iters={len(trace)} "
          f"rel_residual={trace.final:.6e} ranks={','.join(map(str, P.ranks))}")
    return EXIT_OK if trace.converged else EXIT_NOCONV


def cmd_solve(args):
    A = _load(args.A, ttm.TTMatrix)
    b = _load(args.b, ttm.TTVector)
    _check_writable(args.output)
    try:
        if args.precond:
            P = _load(args.precond, ttm.TTMatrix)
            sys_ = build_preconditioned_system(A, P, b, args.round_delta)
        else:
            if A.row_sizes != b.mode_sizes:
                raise LinSolveError("rhs does not match the rows of A")
            # same rounding as the preconditioned path, so P = I reproduces it
            sys_ = LinearSystemTT(ttm.tt_round(A, args.round_delta), ttm.tt_round(b, args.round_delta))
        cfg = LinSolveConfig(
            tol=args.tol, delta=args.delta, rank_cap=_rank_cap(args.max_rank),
            max_sweeps=args.max_sweeps, local_method=args.solver, local_tol=args.local_tol,
            local_max_iters=args.local_maxit, seed=args.seed,
        )
        x, trace = mals_linsolve(sys_, cfg)
    except (ValueError, LinSolveError) as exc:
        raise CLIError(str(exc), EXIT_INVALID)
    _save(args.output, x)
    if args.trace:
        _write_text(args.trace, trace.to_csv())
    print(f"status={trace.status} sweeps={trace.sweeps} iters={len(trace)} "
          f"residual={trace.info.get('residual', float('nan')):.6e} "
          f"local_iters={trace.info.get('local_iters', 0)}")
    return EXIT_OK if trace.converged else EXIT_NOCONV


def verify_report(A, P, lam, pivot=0):
    """Dict with the fixed report fields; oracle fields are None when too large."""
    if (A.row_sizes, A.col_sizes) != (P.row_sizes, P.col_sizes):
        raise ValueError("P and A have different shapes")
    F = objective_direct(A, P, lam)
    I, J = A.shape
    rep = {"f_lambda": F, "r_lambda": rel_from_F(F, J), "f_min": None, "g_lambda": None,
           "bounds": None}
    if I * J <= ORACLE_LIMIT:
        small = A.order >= 2 and I * J <= INTERLACE_LIMIT
        chk = oracle_checks(A, P, lam, pivot=pivot if small else None)
        rep["f_min"] = chk["F_min"]
        rep["g_lambda"] = F - chk["F_min"]
        rep["bounds"] = {k: (None if v is None else float(v)) for k, v in bound_margins(chk).items()}
    return rep


def cmd_verify(args):
    A = _load(args.A, ttm.TTMatrix)
    P = _load(args.P, ttm.TTMatrix)
    try:
        rep = verify_report(A, P, args.lam)
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_INVALID)
    text = json.dumps(rep, indent=2, sort_keys=False) + "\n"
    if args.output:
        _write_text(args.output, text)
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _nonneg(x):
    v = float(x)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {x}")
    return v


def _pos(x):
    v = float(x)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {x}")
    return v


def _posint(x):
    v = int(x)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {x}")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="ttpinv", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=_posint, default=None, help="BLAS threads")
    p.add_argument("--deterministic", action="store_true", help="single thread, reproducible output")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a gallery operator")
    g.add_argument("--family", required=True, choices=FAMILIES)
    g.add_argument("--N", type=int, required=True, help="number of binary sites (3M for convection)")
    g.add_argument("--B", type=float, default=0.5, help="circulant spectrum parameter")
    g.add_argument("--k0", type=float, default=0.5, help="random-svd decay parameter")
    g.add_argument("--c", type=float, default=None, help="convection coefficient (default 2^(N-10))")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True)
    g.add_argument("--rhs-output", default=None, help="rhs path for convection (default <out>.rhs.tt)")
    g.set_defaults(func=cmd_generate)

    def solver_flags(q, local_default):
        q.add_argument("--delta", type=_nonneg, default=None, help="truncation threshold")
        q.add_argument("--max-rank", type=_posint, default=None, help="rank cap (default 50)")
        q.add_argument("--max-sweeps", type=_posint, default=20)
        q.add_argument("--solver", choices=("cg", "gmres", "bicgstab"), default=local_default)
        q.add_argument("--local-tol", type=_pos, default=None if local_default is None else 1e-8)
        q.add_argument("--local-maxit", type=_posint, default=500)
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--trace", default=None, help="CSV trace output path")

    q = sub.add_parser("pinv", help="regularized pseudoinverse of a TT matrix")
    q.add_argument("A")
    q.add_argument("-o", "--output", required=True)
    q.add_argument("--lambda", dest="lam", type=_nonneg, default=0.0)
    q.add_argument("--eps", type=_pos, default=1e-2)
    solver_flags(q, "cg")
    q.set_defaults(func=cmd_pinv)

    s = sub.add_parser("solve", help="solve A x = b, optionally preconditioned by P")
    s.add_argument("A")
    s.add_argument("b")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--precond", default=None, help="TT matrix P; solves P^T A x = P^T b")
    s.add_argument("--tol", type=_pos, default=1e-4)
    s.add_argument("--round-delta", type=_nonneg, default=1e-8, help="relative rounding of the system")
    solver_flags(s, None)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="objective value and dense bound checks as JSON")
    v.add_argument("A")
    v.add_argument("P")
    v.add_argument("--lambda", dest="lam", type=_nonneg, default=0.0)
    v.add_argument("-o", "--output", default=None)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    threads = 1 if args.deterministic else args.threads
    try:
        with thread_limits(threads):
            return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
