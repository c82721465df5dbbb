import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import linprog

from minoverlap.conic import ConeLayout, ConicProgram, ProgramBuilder, SolverOptions, Status, solve, solve_many
from minoverlap.conic.cones import ConeGeometry
from minoverlap.errors import InvalidProgramError
from minoverlap.matcore import smat, svec

TIGHT = SolverOptions(feas_tol=1e-10, gap_tol=1e-10, rel_gap_tol=1e-10)


def lp(c, A_ub, b_ub):
    # A_ub x <= b_ub  ->  G x + s = h with G = A_ub, h = b_ub
    return ConicProgram(c, np.asarray(A_ub, float), np.asarray(b_ub, float), ConeLayout(nonneg_count=len(b_ub)))


def test_lp_matches_scipy(rng):
    for _ in range(5):
        A = rng.standard_normal((8, 3))
        b = rng.uniform(1, 2, 8)
        A = np.vstack([A, np.eye(3), -np.eye(3)])
        b = np.r_[b, np.full(6, 3.0)]
        c = rng.standard_normal(3)
        ref = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * 3)
        sol = solve(lp(c, A, b), TIGHT)
        assert sol.status == Status.OPTIMAL
        assert sol.objective_value == pytest.approx(ref.fun, abs=1e-7)
        # dual sign convention: G'z - A'y + c = 0
        np.testing.assert_allclose(A.T @ sol.dual_slack + c, 0, atol=1e-7)


def test_lp_infeasible_and_unbounded():
    inf = lp([1.0], [[1.0], [-1.0]], [-1.0, -1.0])  # x <= -1 and x >= 1
    assert solve(inf).status == Status.PRIMAL_INFEASIBLE
    unb = lp([1.0], [[1.0]], [0.0])  # min x with x <= 0
    assert solve(unb).status == Status.DUAL_INFEASIBLE


def test_socp_distance_to_point():
    # min t  s.t. |x - p| <= t, x1 + x2 >= 2  -> distance from p=(0,0) to the half-plane
    b = ProgramBuilder()
    t = b.var("t", 1)[0]
    x = b.var("x", 2)
    b.minimize([t], [1.0])
    b.soc([0.0, 0.0, 0.0], [(t, [1, 0, 0]), (x[0], [0, 1, 0]), (x[1], [0, 0, 1])])
    b.nonneg([-2.0], [[x[0], x[1]]], [[1.0, 1.0]])
    sol = solve(b.build(), TIGHT)
    assert sol.optimal
    assert sol.objective_value == pytest.approx(np.sqrt(2), abs=1e-8)
    np.testing.assert_allclose(sol.primal[x], [1, 1], atol=1e-7)


def test_sdp_max_eigenvalue(rng):
    # min t s.t. t I - M >= 0  ->  largest eigenvalue of M
    a = rng.standard_normal((4, 4))
    M = a + a.T
    b = ProgramBuilder()
    t = b.var("t", 1)[0]
    b.minimize([t], [1.0])
    b.psd(-M, [(t, np.eye(4))])
    sol = solve(b.build(), TIGHT)
    assert sol.objective_value == pytest.approx(np.linalg.eigvalsh(M)[-1], abs=1e-7)
    Z = smat(sol.dual_slack, 4)
    assert np.trace(Z) == pytest.approx(1.0, abs=1e-7)


def test_max_sense_and_equalities():
    # max x1 + x2 s.t. x1 + 2 x2 = 2, x >= 0
    b = ProgramBuilder()
    x = b.var("x", 2)
    b.minimize(x, [1.0, 1.0])
    b.nonneg([0.0, 0.0], [[x[0]], [x[1]]], [[1.0], [1.0]])
    b.eq(x, [1.0, 2.0], 2.0)
    sol = solve(b.build(sense="max"), TIGHT)
    assert sol.objective_value == pytest.approx(2.0, abs=1e-8)
    np.testing.assert_allclose(sol.primal, [2, 0], atol=1e-7)


def test_sparse_path_agrees_with_dense(rng):
    n = 150
    A = rng.standard_normal((n + 20, n))
    bvec = rng.uniform(1, 2, n + 20)
    c = A.T @ rng.uniform(0.1, 1, n + 20)
    dense = solve(lp(-c, A, bvec), TIGHT)
    prog = ConicProgram(-c, sp.csr_matrix(A), bvec, ConeLayout(nonneg_count=n + 20))
    sparse = solve(prog, SolverOptions(1e-10, 1e-10, 1e-10, dense_limit=10))
    assert dense.optimal and sparse.optimal
    assert sparse.objective_value == pytest.approx(dense.objective_value, rel=1e-7)


def test_solve_many_matches_individual(rng):
    base = lp([1.0, 1.0], [[-1.0, 0.0], [0.0, -1.0], [-1.0, -1.0]], [0.0, 0.0, -1.0])
    hs = np.array([[0.0, 0.0, -1.0], [0.0, 0.0, -3.0], [-1.0, -1.0, -1.0]])
    batch = solve_many(base, hs, TIGHT)
    for h, s in zip(hs, batch):
        single = solve(ConicProgram(base.c, base.G, h, base.cones), TIGHT)
        assert s.objective_value == pytest.approx(single.objective_value, abs=1e-7)
    assert [round(s.objective_value, 6) for s in batch] == [1.0, 3.0, 2.0]


def test_program_validation():
    with pytest.raises(InvalidProgramError):
        ConicProgram([1.0], np.ones((2, 1)), [1.0], ConeLayout(nonneg_count=2))
    with pytest.raises(InvalidProgramError):
        ConicProgram([np.nan], np.ones((1, 1)), [1.0], ConeLayout(nonneg_count=1))


def test_dump_load_roundtrip(tmp_path):
    prog = lp([1.0, -1.0], [[1.0, 0.0], [0.0, 1.0]], [1.0, 2.0])
    prog.dump(tmp_path / "p.json")
    back = ConicProgram.load(tmp_path / "p.json")
    assert solve(back).objective_value == pytest.approx(solve(prog).objective_value)


def test_cone_max_step_and_jordan_identity(rng):
    geom = ConeGeometry(ConeLayout((3,), (4,), 2))
    e = geom.identity
    u = rng.standard_normal(geom.m)
    np.testing.assert_allclose(geom.jordan_prod(e, u), u, atol=1e-12)
    a = geom.max_step(e[None], -e[None])[0]
    assert a == pytest.approx(1.0)
    assert geom.min_eig(e[None])[0] == pytest.approx(1.0)


def test_nt_scaling_maps_pair_to_same_point(rng):
    geom = ConeGeometry(ConeLayout((3,), (3, 4), 2))

    def interior():
        v = geom.identity.copy()
        w = rng.standard_normal(geom.m) * 0.3
        return v + w if geom.min_eig((v + w)[None])[0] > 0.1 else v

    s, z = interior()[None], interior()[None]
    W = geom.nt_scaling(s, z)
    np.testing.assert_allclose(W.apply(z, "W"), W.apply(s, "Winvt"), atol=1e-10)
    np.testing.assert_allclose(W.apply(z, "W"), W.lam, atol=1e-10)
