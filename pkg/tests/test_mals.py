import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_ttmatrix
from ttpinv import tt as ttm
from ttpinv.gallery import gen_random_svd
from ttpinv.krylov import KrylovConfig, krylov_solve
from ttpinv.mals import (ConvergenceTrace, MALSConfig, MALSError, MALSState, default_delta, f_min,
                         init_guess, local_solve, mals_pinv, objective_direct, objective_report,
                         relative_residual, stopping_check, sweep_schedule)
from ttpinv.oracle import DenseOracle


def assert_monotone(trace, slack=1e-12):
    r = np.concatenate([[trace.initial], trace.residuals])
    assert np.all(np.diff(r) <= slack), r


# ---------------------------------------------------------------------------
# configuration and helpers
# ---------------------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        MALSConfig(lam=-1.0)
    with pytest.raises(ValueError):
        MALSConfig(eps=0.0)
    with pytest.raises(ValueError):
        MALSConfig(rank_cap=0)
    with pytest.raises(ValueError):
        MALSConfig(delta=-1e-3)
    with pytest.raises(ValueError):
        MALSConfig(solver="qmr")


def test_default_delta():
    assert default_delta(5) == 1e-6 / 2.0
    assert MALSConfig().resolved_delta(10) == 1e-6 / 3.0
    assert MALSConfig(delta=0.0).resolved_delta(10) == 0.0


def test_init_guess():
    P1 = init_guess([2] * 5, [2] * 5, seed=3)
    P2 = init_guess([2] * 5, [2] * 5, seed=3)
    assert all(a.tobytes() == b.tobytes() for a, b in zip(P1.cores, P2.cores))
    assert P1.ranks == (1, 2, 2, 2, 2, 1)
    for n in range(2, 5):
        c = P1.cores[n].reshape(P1.cores[n].shape[0], -1)
        np.testing.assert_allclose(c @ c.T, np.eye(c.shape[0]), atol=1e-12)
    assert P1.ortho[2:] == ("right",) * 3
    P3 = init_guess([2, 2, 2], [1, 1, 1], ranks=[1, 5, 5, 1])
    assert P3.ranks == (1, 2, 2, 1)  # clipped to what the mode sizes allow
    with pytest.raises(ValueError):
        init_guess([2, 2], [2, 2], ranks=[2, 2, 1])


class _Stub:
    def __init__(self, G, b, lam):
        self.G, self.rhs, self.lam = np.asarray(G, float), np.asarray(b, float), lam

    def operator(self):
        return self.G + self.lam * np.eye(len(self.rhs))


@pytest.mark.parametrize("lam,b,expect", [
    (0.0, [4.0, 2.0], [2.0, 1.0]),
    (2.0, [4.0, 2.0], [1.0, 0.5]),
    (0.0, [0.0, 0.0], [0.0, 0.0]),
])
def test_local_solve_examples(lam, b, expect):
    res = local_solve(_Stub(2 * np.eye(2), b, lam), MALSConfig(local_tol=1e-12))
    np.testing.assert_allclose(res.x, expect, atol=1e-12)


def test_local_solve_singular_from_zero_is_min_norm():
    # Krylov from zero stays in the range of a singular SPD operator
    G = np.diag([1.0, 0.0])
    res = krylov_solve(G, np.array([3.0, 0.0]), KrylovConfig("cg", tol=1e-12))
    np.testing.assert_allclose(res.x, [3.0, 0.0])


def test_stopping_check_examples():
    # window N-2 = 2, squares 0.25 -> 0.249 with eps 0.1: 0.001 < 0.0025
    assert stopping_check([0.5, 0.5, math.sqrt(0.249)], 0.1, 4)
    assert stopping_check([0.3, 0.3, 0.3], 1e-8, 4)
    # squares halve every window: 0.5 > 0.01
    assert not stopping_check([1.0, 0.9, math.sqrt(0.5)], 0.1, 4)
    # not enough history
    assert not stopping_check([1.0, 1.0], 0.1, 4)
    # N=2 and N=3 use a window of one step
    assert stopping_check([1.0, 1.0], 0.1, 3)


def test_sweep_schedule():
    assert sweep_schedule(4) == [(0, "left"), (1, "left"), (2, "right"), (1, "right")]
    assert sweep_schedule(2) == [(0, "left")]
    assert sweep_schedule(3) == [(0, "left"), (1, "right")]


def test_f_min_examples():
    assert f_min([1, 1, 1, 1], 1.0, 4) == 2.0
    assert f_min([3, 2, 1, 0.5], 0.0, 4) == 0.0
    # J=4, rank 2 -> min r^2 = 1 - 2/4
    assert f_min([1, 1, 0, 0], 0.0, 4) / 4 == 0.5


def test_objective_report_identity():
    A = ttm.identity([2, 2])
    rep = objective_report(A, ttm.tt_scale(A, 0.5), lam=1.0, need_gap=True)
    assert rep["F"] == pytest.approx(2.0, rel=1e-14)
    assert rep["F_min"] == pytest.approx(2.0, rel=1e-14)
    assert rep["G"] == pytest.approx(0.0, abs=1e-14)
    assert rep["r"] == pytest.approx(math.sqrt(0.5), rel=1e-14)


def test_objective_direct_matches_dense(rng):
    A = random_ttmatrix(rng, [2, 2, 2], [2, 2, 1], [1, 2, 2, 1])
    P = random_ttmatrix(rng, [2, 2, 2], [2, 2, 1], [1, 3, 2, 1])
    orc = DenseOracle(ttm.tt_to_dense(A), 0.3)
    np.testing.assert_allclose(objective_direct(A, P, 0.3), orc.objective(ttm.tt_to_dense(P)), rtol=1e-12)


# ---------------------------------------------------------------------------
# relative residual
# ---------------------------------------------------------------------------


def _state(A, P, lam=0.0):
    return MALSState(A, MALSConfig(lam=lam), P)


def test_relative_residual_examples():
    A = ttm.identity([2, 2])
    zero = ttm.TTMatrix([np.zeros((1, 2, 2, 1))] * 2)
    assert relative_residual(_state(A, zero)) == pytest.approx(1.0, rel=1e-15)
    assert relative_residual(_state(A, A)) == pytest.approx(0.0, abs=1e-14)
    st_ = _state(A, ttm.tt_scale(A, 0.5), lam=1.0)
    assert st_.objective() == pytest.approx(2.0, rel=1e-14)
    assert relative_residual(st_) == pytest.approx(0.70711, abs=1e-5)


def test_relative_residual_direct_mode_agrees(rng):
    A = random_ttmatrix(rng, [2, 2, 2], [2, 2, 2], [1, 2, 2, 1])
    P = random_ttmatrix(rng, [2, 2, 2], [2, 2, 2], [1, 2, 2, 1])
    st_ = _state(A, P, 0.1)
    r_env = relative_residual(st_)
    st_.direct = True
    np.testing.assert_allclose(relative_residual(st_), r_env, rtol=1e-10)


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------


def test_rejects_bad_input(rng):
    with pytest.raises(MALSError, match="transpose"):
        mals_pinv(random_ttmatrix(rng, [1, 2], [2, 2], [1, 1, 1]))
    with pytest.raises(MALSError, match="two sites"):
        mals_pinv(ttm.identity([4]))
    bad = np.ones((1, 2, 2, 1))
    bad[0, 0, 0, 0] = np.inf
    with pytest.raises(MALSError, match="non-finite"):
        mals_pinv(ttm.TTMatrix([bad, bad]))
    with pytest.raises(MALSError, match="initial guess"):
        mals_pinv(ttm.identity([2, 2]), P0=ttm.identity([2, 2, 2]))


def test_identity_lambda_zero():
    A = ttm.identity([2] * 4)
    P, tr = mals_pinv(A, MALSConfig(lam=0.0))
    assert tr.sweeps == 1
    assert tr.final <= 1e-8
    np.testing.assert_allclose(ttm.tt_to_dense(P), np.eye(16), atol=1e-8)
    assert_monotone(tr)


def test_identity_lambda_one():
    A = ttm.identity([2] * 4)
    P, tr = mals_pinv(A, MALSConfig(lam=1.0))
    np.testing.assert_allclose(ttm.tt_to_dense(P), np.eye(16) / 2, atol=1e-8)
    assert tr.final ** 2 == pytest.approx(0.5, abs=1e-10)
    assert tr.converged
    assert_monotone(tr)


def test_random_svd_rank_one():
    A = gen_random_svd(8, 0.5, seed=0)
    P, tr = mals_pinv(A, MALSConfig(lam=0.0, max_sweeps=3))
    assert P.ranks == (1,) * 9
    assert tr.final <= 1e-4
    assert_monotone(tr)


def test_rank_caps_respected(rng):
    A = random_ttmatrix(rng, [2] * 5, [2] * 5, [1, 3, 3, 3, 3, 1])
    P, tr = mals_pinv(A, MALSConfig(lam=1e-2, rank_cap=[2, 3, 3, 2], max_sweeps=3))
    assert all(r <= c for r, c in zip(P.ranks[1:-1], [2, 3, 3, 2]))
    assert tr.column("max_rank").max() <= 3
    assert_monotone(tr)


@settings(max_examples=12, deadline=None)
@given(seed=st.integers(0, 10**6), N=st.sampled_from([3, 4]), lam=st.sampled_from([1e-2, 1e-1]))
def test_oracle_optimality(seed, N, lam):
    rng = np.random.default_rng(seed)
    A = random_ttmatrix(rng, [2] * N, [2] * N, [1] + [2] * (N - 1) + [1])
    P, tr = mals_pinv(A, MALSConfig(lam=lam, rank_cap=None, seed=seed))
    rep = objective_report(A, P, lam, need_gap=True)
    assert rep["F"] <= rep["F_min"] * (1 + 1e-6) + 1e-9
    assert_monotone(tr)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10**6), lam=st.sampled_from([0.0, 1e-2]))
def test_invariants_during_run(seed, lam):
    rng = np.random.default_rng(seed)
    N = 4
    # rank-deficient A so that the residual floor is nontrivial
    A = random_ttmatrix(rng, [2] * N, [2, 2, 1, 2] if rng.random() < 0.5 else [2] * N, [1, 2, 1, 2, 1])
    Ad = ttm.tt_to_dense(A)
    J = Ad.shape[1]
    s = np.linalg.svd(Ad, compute_uv=False)
    floor = f_min(s, lam, J) / J
    seen = []

    def check(state, row):
        r = row[3]
        assert r * r >= floor - 1e-10
        p = state.pivot
        for n in range(p):
            c = state.cores[n].reshape(-1, state.cores[n].shape[-1])
            np.testing.assert_allclose(c.T @ c, np.eye(c.shape[1]), atol=1e-10)
        for n in range(p + 2, N):
            c = state.cores[n].reshape(state.cores[n].shape[0], -1)
            np.testing.assert_allclose(c @ c.T, np.eye(c.shape[0]), atol=1e-10)
        seen.append(row)

    P, tr = mals_pinv(A, MALSConfig(lam=lam, max_sweeps=4, seed=seed), callback=check)
    assert len(seen) == len(tr)
    assert_monotone(tr)


def test_trace_rows_and_csv(tmp_path):
    A = gen_random_svd(4, 0.5, seed=1)
    P, tr = mals_pinv(A, MALSConfig(lam=1e-3, max_sweeps=2))
    assert [r[1] for r in tr.rows] == list(range(1, len(tr) + 1))
    text = tr.to_csv()
    assert text.splitlines()[0] == "sweep,iter,site,rel_residual,max_rank,local_iters,wall_ms"
    assert text.rstrip().splitlines()[-1] == f"# status={tr.status}"
    back = ConvergenceTrace.from_csv(text)
    assert back.status == tr.status
    np.testing.assert_array_equal(back.residuals, tr.residuals)
    assert back.sweeps == tr.sweeps
    with pytest.raises(ValueError):
        ConvergenceTrace.from_csv("a,b\n1,2\n")


def test_deterministic_given_seed():
    A = gen_random_svd(5, 0.3, seed=2)
    cfg = MALSConfig(lam=1e-2, seed=9, max_sweeps=2)
    P1, t1 = mals_pinv(A, cfg)
    P2, t2 = mals_pinv(A, cfg)
    assert all(a.tobytes() == b.tobytes() for a, b in zip(P1.cores, P2.cores))
    np.testing.assert_array_equal(t1.residuals, t2.residuals)


def test_state_step_pivot_check():
    st_ = MALSState(ttm.identity([2, 2, 2]), MALSConfig())
    with pytest.raises(MALSError, match="pivot"):
        st_.step(1, "left")
