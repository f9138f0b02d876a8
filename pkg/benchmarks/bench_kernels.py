"""Compare the numba and pure-numpy contraction kernels.

Times the local Gram product, the four-index environment update and the
generic local operator at several TT-ranks, then one full MALS sweep on the
Laplacian. Usage: ``python3 benchmarks/bench_kernels.py [--ranks 5 10 20]``.
"""

import argparse
import timeit

import numpy as np

from ttpinv import _kernels as K
from ttpinv.gallery import gen_laplace
from ttpinv.mals import MALSConfig, mals_pinv


def kernel_cases(R, RA, rng):
    L = rng.standard_normal((R, RA, RA, R))
    Rr = rng.standard_normal((R, RA, RA, R))
    A1 = rng.standard_normal((RA, 2, 2, RA))
    A2 = rng.standard_normal((RA, 2, 2, RA))
    x = rng.standard_normal((R, 2, 2, 2, 2, R))
    P = rng.standard_normal((R, 2, 2, R))
    L3 = rng.standard_normal((R, RA, R))
    R3 = rng.standard_normal((R, RA, R))
    v = rng.standard_normal((R, 2, 2, R))
    gram = K.GramApply(L, A1, A2, Rr)
    return {
        "local_gram": lambda: gram(x),
        "env4_left": lambda: K.env4_left(L, P, A1),
        "local_op": lambda: K.local_op(L3, A1, A2, R3, v),
    }


def best_of(fn, number, repeat):
    fn()  # compile / warm caches
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def sweep_time(N, cap):
    cfg = MALSConfig(lam=1e-2, rank_cap=cap, max_sweeps=2, eps=1e-12)
    _, tr = mals_pinv(gen_laplace(N), cfg)
    sw, ms = tr.column("sweep"), tr.column("wall_ms")
    return ms[sw == 2].sum() / 1e3


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ranks", type=int, nargs="+", default=[5, 10, 20, 40])
    ap.add_argument("--op-rank", type=int, default=3, help="operator TT-rank")
    ap.add_argument("--number", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sweep-N", type=int, default=20)
    ap.add_argument("--sweep-cap", type=int, default=20)
    args = ap.parse_args(argv)

    backends = [b for b in ("numba", "numpy") if b in K._IMPLS]
    start = K.get_backend()
    print(f"{'kernel':<12}{'R':>5}" + "".join(f"{b + ' us':>14}" for b in backends) + f"{'speedup':>10}")
    for R in args.ranks:
        rng = np.random.default_rng(R)
        times = {}
        for b in backends:
            K.set_backend(b)
            for name, fn in kernel_cases(R, args.op_rank, rng).items():
                times[name, b] = best_of(fn, args.number, args.repeat) * 1e6
        for name in ("local_gram", "env4_left", "local_op"):
            row = [times[name, b] for b in backends]
            sp = row[-1] / row[0] if len(row) > 1 else 1.0
            print(f"{name:<12}{R:>5}" + "".join(f"{t:>14.1f}" for t in row) + f"{sp:>10.2f}")
    print()
    for b in backends:
        K.set_backend(b)
        sweep_time(6, args.sweep_cap)
        t = sweep_time(args.sweep_N, args.sweep_cap)
        print(f"MALS sweep laplace N={args.sweep_N} cap={args.sweep_cap} [{b}]: {t * 1e3:.1f} ms")
    K.set_backend(start)


if __name__ == "__main__":
    main()
