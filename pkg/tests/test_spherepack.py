import numpy as np
import pytest

from minoverlap.errors import InvalidInputError
from minoverlap.geometry import BoxContainer, Container
from minoverlap.rng import stream
from minoverlap.spherepack import (
    Coincident, Norm, SpherePackProblem, SpherePackState, build_subproblem, directions, h_value, hexagonal_number,
    multistart, neighbor_counts, neighbor_histogram, pack, random_centers, shrink_to_touching, step,
)


def disc(R=1.0):
    return Container.sphere(R, (0.0, 0.0))


def test_h_value_norms():
    xi = np.array([3.0, 4.0])
    assert h_value(xi, Norm.L1) == 7.0
    assert h_value(xi, Norm.L2) == 5.0
    assert h_value(xi, Norm.LINF) == 4.0
    assert h_value(np.zeros(0), Norm.L2) == 0.0


def test_problem_validation():
    with pytest.raises(InvalidInputError):
        SpherePackProblem(np.array([1.0]), disc())
    with pytest.raises(InvalidInputError):
        SpherePackProblem(np.array([1.0, -1.0]), disc(3))
    with pytest.raises(InvalidInputError):
        SpherePackProblem(np.array([0.5, 0.5]), disc(), step_bound=0.0)


def test_overlaps_consistent():
    prob = SpherePackProblem(np.array([0.5, 0.5, 0.3]), disc(2))
    c = np.array([[0.0, 0.0], [0.6, 0.0], [0.0, 1.5]])
    xi = prob.overlaps(c)
    assert xi == pytest.approx([0.4, 0.0, 0.0], abs=1e-12)


def test_directions_policies():
    prob = SpherePackProblem(np.array([0.5, 0.5]), disc(3))
    z = directions(np.array([[1.0, 0.0], [0.0, 0.0]]), prob)
    assert z[0] == pytest.approx([1.0, 0.0])
    same = np.zeros((2, 2))
    assert np.all(directions(same, prob) == 0)
    prob_r = SpherePackProblem(np.array([0.5, 0.5]), disc(3), coincident_policy=Coincident.RANDOM)
    assert np.linalg.norm(directions(same, prob_r, np.random.default_rng(1))[0]) == pytest.approx(1.0)


def test_coincident_zero_direction_constraint():
    # with z = 0 the linearized overlap is the radius sum whatever the step
    prob = SpherePackProblem(np.array([0.5, 0.5]), disc(3), objective=Norm.LINF)
    st = SpherePackState.initial(prob, np.zeros((2, 2)))
    new, h_lin, rec = step(st, prob)
    assert not rec.accepted
    assert h_lin == pytest.approx(1.0)


def test_two_circles_separate_in_one_step():
    prob = SpherePackProblem(np.array([0.5, 0.5]), disc(10), objective=Norm.LINF, step_bound=1.0)
    st = SpherePackState.initial(prob, np.array([[0.2, 0.0], [-0.2, 0.0]]))
    new, h_lin, rec = step(st, prob)
    assert rec.accepted and rec.sandwich_ok()
    assert new.objective_value == pytest.approx(0.0, abs=1e-7)


def test_pair_pruning():
    prob = SpherePackProblem(np.array([0.1, 0.1, 0.1]), disc(10), step_bound=0.1)
    st = SpherePackState.initial(prob, np.array([[0.0, 0.0], [0.15, 0.0], [5.0, 5.0]]))
    prog = build_subproblem(st, prob)
    assert list(prog.names["pairs"]) == [0]


@pytest.mark.parametrize("norm", list(Norm))
def test_sandwich_along_run(norm):
    prob = SpherePackProblem(np.full(6, 0.4), disc(1.0), objective=norm)
    init = random_centers(prob, stream(5, 0))
    res = pack(prob, init, max_iter=30)
    assert all(r.sandwich_ok() for r in res.records if r.accepted)
    assert all(a >= b - 1e-10 for a, b in zip(res.trace, res.trace[1:]))
    assert prob.feasible(res.state.centers, 1e-7)


def test_two_spheres_huge_container():
    prob = SpherePackProblem(np.array([1.0, 1.0]), Container.sphere(20.0), objective=Norm.L2)
    res = pack(prob, np.array([[0.1, 0.0, 0.0], [0.0, 0.2, 0.0]]))
    assert res.state.objective_value < 1e-8
    assert res.reason == "no_overlap"


def test_five_circle_local_solution_is_stationary():
    ang = 2 * np.pi * np.arange(4) / 4
    c = np.vstack([[0.0, 0.0], np.c_[np.cos(ang), np.sin(ang)] * 0.5])
    prob = SpherePackProblem(np.full(5, 0.5), disc(1.0), objective=Norm.LINF)
    res = pack(prob, c, max_iter=5)
    assert res.state.objective_value == pytest.approx(0.5, abs=1e-7)
    assert np.abs(res.state.centers - c).max() < 1e-6


def test_square_lattice_box_does_not_move():
    g = (np.arange(4) + 0.5) * 1.0
    c = np.array([[x, y] for x in g for y in g])
    prob = SpherePackProblem(np.full(16, 0.55), BoxContainer([-0.05, -0.05], [4.05, 4.05]), objective=Norm.LINF)
    res = pack(prob, c, max_iter=3)
    assert np.abs(res.state.centers - c).max() <= 1e-8


def test_shrink_to_touching():
    prob = SpherePackProblem(np.array([0.5, 0.5]), disc(3))
    st = SpherePackState.initial(prob, np.array([[0.3, 0.0], [-0.3, 0.0]]))
    r = shrink_to_touching(st, prob)
    assert r == pytest.approx([0.3, 0.3])
    far = SpherePackState.initial(prob, np.array([[1.0, 0.0], [-1.0, 0.0]]))
    assert np.array_equal(shrink_to_touching(far, prob), prob.radii)


def test_neighbor_counts_triangle():
    h = np.sqrt(3) / 2
    prob = SpherePackProblem(np.full(3, 0.5), disc(5))
    st = SpherePackState.initial(prob, np.array([[0.0, 0.0], [1.0, 0.0], [0.5, h]]))
    assert list(neighbor_counts(st, prob)) == [2, 2, 2]
    assert neighbor_histogram(st, prob) == {2: 3}


def test_hex_patch_interior_has_six():
    c = [[0.0, 0.0]] + [[np.cos(a), np.sin(a)] for a in np.arange(6) * np.pi / 3]
    prob = SpherePackProblem(np.full(7, 0.5), disc(1.5 + 1e-9))
    st = SpherePackState.initial(prob, np.array(c))
    assert neighbor_counts(st, prob)[0] == 6
    assert neighbor_histogram(st, prob, boundary_filter=True) == {6: 1}


@pytest.mark.parametrize("k, h", [(1, 7), (3, 37), (4, 61), (5, 91)])
def test_hexagonal_number(k, h):
    assert hexagonal_number(k) == h


def test_hexagonal_number_rejects():
    with pytest.raises(InvalidInputError):
        hexagonal_number(0)
    with pytest.raises(InvalidInputError):
        hexagonal_number(2.5)


def test_multistart_deterministic():
    prob = SpherePackProblem(np.full(4, 0.45), disc(1.0))
    a = multistart(prob, 2, seed=3, max_iter=10)
    b = multistart(prob, 2, seed=3, max_iter=10)
    for x, y in zip(a, b):
        assert np.array_equal(x.state.centers, y.state.centers)
        assert x.trace == y.trace


def test_random_centers_feasible():
    prob = SpherePackProblem(np.array([0.3, 0.6, 0.2]), Container.from_axes([2.0, 1.0]))
    c = random_centers(prob, stream(0, 1))
    assert prob.feasible(c, 0.0)
