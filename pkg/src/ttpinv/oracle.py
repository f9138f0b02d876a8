"""Dense brute-force reference for small problems.

Everything here works on explicit matrices obtained with ``tt_to_dense`` and
is meant for verification only.
"""

import numpy as np

from . import tt as ttm

ORACLE_LIMIT = ttm.DENSE_LIMIT


class DenseOracle:
    """SVD-based reference for ``min ||B^T - P^T A||^2 + lam ||P||^2``."""

    def __init__(self, A, lam=0.0):
        A = np.asarray(A, dtype=np.float64)
        if A.size > ORACLE_LIMIT:
            raise ValueError(f"dense oracle limited to {ORACLE_LIMIT} entries, got {A.size}")
        self.A = A
        self.lam = float(lam)
        self.U, self.s, self.Vt = np.linalg.svd(A, full_matrices=False)

    @property
    def rank(self):
        s = self.s
        if s.size == 0 or s[0] == 0:
            return 0
        return int(np.count_nonzero(s > s[0] * max(self.A.shape) * np.finfo(float).eps))

    def pstar(self, B=None):
        """Regularized solution, or the minimum-norm one when lam = 0."""
        s = self.s
        if self.lam > 0:
            w = s / (s * s + self.lam)
        else:
            w = np.zeros_like(s)
            k = self.rank
            w[:k] = 1.0 / s[:k]
        P = (self.U * w) @ self.Vt
        return P if B is None else P @ B

    def f_min(self):
        J = self.A.shape[1]
        if self.lam > 0:
            s2 = self.s**2
            return float(J - np.sum(s2 / (s2 + self.lam)))
        return float(J - self.rank)

    def objective(self, P, B=None):
        P = np.asarray(P, dtype=np.float64)
        target = np.eye(self.A.shape[1]) if B is None else np.asarray(B).T
        R = target - P.T @ self.A
        return float(np.sum(R * R) + self.lam * np.sum(P * P))

    def kappa(self):
        """Spectral condition number of A A^T + lam I."""
        ev = np.zeros(self.A.shape[0])
        ev[: self.s.size] = self.s**2
        ev += self.lam
        return float(ev.max() / ev.min()) if ev.min() > 0 else np.inf


def dense_pinv_oracle(A, lam=0.0, B=None):
    """(A A^T + lam I)^{-1} A B, or (A^+)^T B for lam = 0."""
    return DenseOracle(A, lam).pstar(B)


def frame_columns(P, n):
    """Dense images of the unit supercores at pair ``(n, n+1)``.

    Returns an array of shape ``(size, I, J)``: entry ``t`` is the matrix
    obtained by replacing the supercore of ``P`` with the ``t``-th unit
    tensor, in little-endian order over ``(p, i_n, j_n, i_{n+1}, j_{n+1}, q)``.
    The other cores are used as they are; orthogonalize first if the frame
    should be orthonormal.
    """
    cores = [np.asarray(c) for c in P.cores]
    r = cores[n].shape[0]
    I1, J1 = cores[n].shape[1:3]
    I2, J2 = cores[n + 1].shape[1:3]
    rr = cores[n + 1].shape[3]
    shape6 = (r, I1, J1, I2, J2, rr)
    size = int(np.prod(shape6))
    cols = []
    for t in range(size):
        E = np.zeros(shape6)
        E[np.unravel_index(t, shape6, order="F")] = 1.0
        # one merged site: rows i_n + I_n i_{n+1}, cols j_n + J_n j_{n+1}
        merged = E.transpose(0, 3, 1, 4, 2, 5).reshape(r, I2 * I1, J2 * J1, rr)
        T = ttm.TTMatrix(cores[:n] + [merged] + cores[n + 2:])
        cols.append(ttm.tt_to_dense(T))
    return np.array(cols)


def dense_local_problem(A, P, n):
    """Dense local Gram matrix and rhs at pair ``(n, n+1)`` of an orthogonalized P."""
    Ad = ttm.tt_to_dense(A)
    F = frame_columns(P, n)
    AtF = np.einsum("ij,tik->tjk", Ad, F)  # A^T F_t
    G = np.einsum("sjk,tjk->st", AtF, AtF)
    b = np.einsum("tij,ij->t", F, Ad)
    return G, b


def oracle_checks(A, P, lam=0.0, pivot=None):
    """Margins of the dense inequalities; nonnegative (up to roundoff) means pass.

    Keys: ``gap_identity`` (minus its absolute defect),
    ``symmetricity``, ``symmetricity_general``, ``eigenvalues``, ``singular_values``,
    ``convergence_bound`` (None if ``A A^T + lam I`` is singular) and, when
    ``pivot`` is given, ``interlacing_low`` and ``interlacing_high``.
    Also reports ``F``, ``F_min`` and ``G``.
    """
    Ad = ttm.tt_to_dense(A) if isinstance(A, ttm.TTMatrix) else np.asarray(A, dtype=np.float64)
    Pd = ttm.tt_to_dense(P) if isinstance(P, ttm.TTMatrix) else np.asarray(P, dtype=np.float64)
    orc = DenseOracle(Ad, lam)
    Ps = orc.pstar()
    F = orc.objective(Pd)
    Fmin = orc.f_min()
    G = F - Fmin
    dP = np.sum((Pd - Ps) ** 2)
    PA = Pd.T @ Ad
    PsA = Ps.T @ Ad
    out = {"F": F, "F_min": Fmin, "G": G}

    rhs = np.sum((PA - PsA) ** 2) + lam * dP
    out["gap_identity"] = -abs((F - orc.objective(Ps)) - rhs)

    asym = np.sum((PA - PA.T) ** 2)
    out["symmetricity"] = 2 * G - 2 * lam * dP - asym
    # ||E - E^T||^2 <= 4 ||E||^2 with E = (P - P*)^T A holds for every P; the
    # factor 2 above needs tr(E^2) >= 0, which is true near the optimum only
    out["symmetricity_general"] = 4 * G - 4 * lam * dP - asym

    budget = G - lam * dP
    ev = np.sort(np.linalg.eigvalsh((PA + PA.T) / 2))[::-1]
    ev_s = np.sort(np.linalg.eigvalsh((PsA + PsA.T) / 2))[::-1]
    out["eigenvalues"] = budget - np.sum((ev - ev_s) ** 2)
    sv = np.linalg.svd(PA, compute_uv=False)
    sv_s = np.linalg.svd(PsA, compute_uv=False)
    out["singular_values"] = budget - np.sum((sv - sv_s) ** 2)

    AAt = Ad @ Ad.T + lam * np.eye(Ad.shape[0])
    evA = np.linalg.eigvalsh(AAt)
    if evA.min() > evA.max() * 1e-14:
        R = Ad - AAt @ Pd
        out["convergence_bound"] = np.sum(R * R) / evA.min() ** 2 - dP
    else:
        out["convergence_bound"] = None

    if pivot is not None and isinstance(P, ttm.TTMatrix):
        Po = ttm.orthogonalize(P, pivot)
        Gloc, _ = dense_local_problem(A, Po, pivot)
        ev_loc = np.linalg.eigvalsh(Gloc)
        ev_AA = np.linalg.eigvalsh(Ad @ Ad.T)
        out["interlacing_low"] = ev_loc.min() - ev_AA.min()
        out["interlacing_high"] = ev_AA.max() - ev_loc.max()
    return {k: (None if v is None else float(v)) for k, v in out.items()}


def bound_margins(report):
    """Only the inequality margins of an :func:`oracle_checks` report."""
    return {k: v for k, v in report.items() if k not in ("F", "F_min", "G")}


def all_pass(report, slack=1e-8):
    return all(v is None or v >= -slack for v in bound_margins(report).values())
