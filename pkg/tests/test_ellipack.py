import numpy as np
import pytest

from minoverlap.chromosim import generate_trial, scenario
from minoverlap.conic import solve
from minoverlap.ellipack import (
    HomologConfig, PackingProblem, PackingState, TrustRegionConfig, build_master, constraint_residuals,
    evaluate, homolog_overlap, init_state, pack_ellipsoids, predicted_decrease_at, project_axes,
    select_active_set, tr_iterate, with_evaluation,
)
from minoverlap.errors import InvalidInputError
from minoverlap.geometry import AxisSpec, Container


def test_config_validation():
    with pytest.raises(InvalidInputError):
        TrustRegionConfig(eta1=0.95, eta2=0.9)
    with pytest.raises(InvalidInputError):
        TrustRegionConfig(c1=0.8)
    with pytest.raises(InvalidInputError):
        TrustRegionConfig(phi2=0.9)
    rho0, rho_max = TrustRegionConfig().radii(Container.sphere(4.0))
    assert (rho0, rho_max) == pytest.approx((0.4, 4.0))


def test_active_set_rules():
    v = [1.0, 0.95, 0.6, 0.3]
    assert list(select_active_set(v)) == [0, 1, 2]
    assert list(select_active_set([0.0, 0.4, 0.0])) == [1]
    assert list(select_active_set([0.2, 0.2, 0.2])) == [0, 1, 2]
    assert select_active_set([0.0, 0.0]).size == 0


def test_problem_validation():
    with pytest.raises(InvalidInputError):
        PackingProblem([AxisSpec((1.0, 1.0, 1.0))], Container.sphere(3.0))
    with pytest.raises(InvalidInputError):
        PackingProblem([AxisSpec((1.0, 1.0))] * 2, Container.sphere(3.0))
    with pytest.raises(InvalidInputError):
        PackingProblem([AxisSpec((1.0, 1.0, 1.0))] * 2, Container.sphere(3.0), HomologConfig(((0, 5),)))


def test_init_state_spheres_exact_and_deterministic():
    specs = [AxisSpec((0.5, 0.5, 0.5)), AxisSpec((1.0, 0.6, 0.4))]
    cont = Container.from_axes([3.0, 2.0, 1.5])
    a = init_state(specs, cont, seed=4)
    b = init_state(specs, cont, seed=4)
    assert np.array_equal(a.S[0], 0.5 * np.eye(3))
    assert np.array_equal(a.centers, b.centers) and np.array_equal(a.lam, b.lam)
    prob = PackingProblem(specs, cont)
    assert max(constraint_residuals(a, prob).values()) <= 1e-8


def test_init_state_medium_nucleus_feasible():
    scn = scenario("medium-ellipsoidal")
    setup = generate_trial(scn, 0)
    st = init_state(setup.specs, setup.container, rng=setup.rng)
    prob = PackingProblem(setup.specs, setup.container)
    assert max(constraint_residuals(st, prob).values()) <= 1e-8


def test_two_far_ellipsoids_stop_at_zero():
    specs = [AxisSpec((1.0, 0.5, 0.5))] * 2
    cont = Container.sphere(20.0)
    S = np.diag([1.0, 0.5, 0.5])
    st = PackingState(np.array([0.5, 0.5]), np.array([[-5.0, 0, 0], [5.0, 0, 0]]), np.stack([S, S]),
                      np.stack([S @ S, S @ S]))
    res = pack_ellipsoids(PackingProblem(specs, cont), st)
    assert res.reason == "no_overlap" and res.final_overlap == 0.0


def tight_pair():
    specs = [AxisSpec((1.0, 0.6, 0.5))] * 2
    cont = Container.sphere(1.6)
    return PackingProblem(specs, cont), init_state(specs, cont, seed=1)


def test_tight_pair_history_monotone():
    prob, init = tight_pair()
    res = pack_ellipsoids(prob, init, TrustRegionConfig(max_iter=25))
    acc = [h["candidate_merit"] for h in res.history if h["accepted"]]
    merits = [res.history[0]["merit"]] + acc
    assert all(b <= a + 1e-12 for a, b in zip(merits, merits[1:]))
    assert all(h["Lambda"] >= 0 for h in res.history)
    assert res.reason in ("stationary", "max_iter", "no_overlap", "small_overlap")
    assert max(constraint_residuals(res.state, prob).values()) <= 1e-6


def test_tr_iterate_branches():
    prob, init = tight_pair()
    cfg = TrustRegionConfig()
    st = with_evaluation(init, prob)
    nxt, rho, acc, info = tr_iterate(st, 0.5, prob, cfg)
    if acc:
        assert info.candidate_merit <= info.merit - cfg.c1 * info.Lambda
        assert rho in (0.5, min(cfg.phi2 * 0.5, 1.6))
    else:
        assert nxt is st and rho == pytest.approx(cfg.phi1 * 0.5)


def test_lambda_grows_with_radius():
    prob, init = tight_pair()
    lam1 = predicted_decrease_at(init, 0.1, prob)
    lam2 = predicted_decrease_at(init, 0.2, prob)
    assert lam2 >= lam1 - 1e-7
    assert lam2 / 0.2 <= lam1 / 0.1 + 1e-6


def test_tiny_radius_master_matches_current_value():
    prob, init = tight_pair()
    st = with_evaluation(init, prob)
    act = select_active_set(st.evaluation.values)
    sol = solve(build_master(st, prob, act, 1e-9))
    assert sol.objective_value == pytest.approx(st.evaluation.t_star, abs=1e-6)


def test_sphere_specs_have_no_shape_variables():
    specs = [AxisSpec((0.6, 0.6, 0.6))] * 2
    cont = Container.sphere(1.2)
    prob = PackingProblem(specs, cont)
    st = with_evaluation(init_state(specs, cont, seed=0), prob)
    prog = build_master(st, prob, np.arange(1), 0.1)
    cols = prog.names["cols"]
    assert cols.s == [None, None] and cols.g == [None, None]


def test_homolog_term():
    specs = [AxisSpec((0.5, 0.5, 0.5))] * 2
    S = 0.5 * np.eye(3)
    st = PackingState(np.array([0.5, 0.5]), np.array([[0.0, 0, 0], [1.0, 0, 0]]), np.stack([S, S]),
                      np.stack([S @ S, S @ S]))
    prob = PackingProblem(specs, Container.sphere(5.0), HomologConfig(((0, 1),), 100.0, 1.25))
    assert homolog_overlap(st, prob) == pytest.approx(1.25 - 1.0)
    ev = evaluate(st, prob)
    assert ev.merit == pytest.approx(ev.t_star + 100.0 * 0.25)


def test_project_axes_identity_on_exact_shapes():
    specs = [AxisSpec((1.0, 0.5, 0.5)), AxisSpec((0.4, 0.4, 0.4))]
    S0 = np.diag([1.0, 0.5, 0.5])
    S1 = 0.4 * np.eye(3)
    st = PackingState(np.array([0.5, 0.5]), np.array([[-1.0, 0, 0], [1.0, 0, 0]]), np.stack([S0, S1]),
                      np.stack([S0 @ S0, S1 @ S1]))
    rep = project_axes(st, PackingProblem(specs, Container.sphere(3.0)))
    assert np.allclose(rep.distortion, 0.0)
    assert np.allclose(rep.projected.S, st.S)
    assert rep.fraction_distorted() == 0.0
