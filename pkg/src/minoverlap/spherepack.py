"""Minimum-overlap packing of spheres by successive linearization.

Each step linearizes the pairwise distance constraints around the current
centers along the unit directions ``z_ij`` and solves the resulting convex
program for new centers.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .conic import ProgramBuilder, SolverOptions, solve
from .errors import DegenerateError, InvalidInputError, IterationError
from .geometry import BoxContainer, Container, ContainmentSet, center_set
from .rng import stream

SANDWICH_SLACK = 1e-10
STEP_RETRIES = 3


class Norm(str, Enum):
    L1 = "L1"
    L2 = "L2"
    LINF = "LInf"


class Coincident(str, Enum):
    ZERO = "ZeroVector"
    RANDOM = "RandomUnit"


def h_value(xi: np.ndarray, norm: Norm) -> float:
    xi = np.asarray(xi, dtype=float)
    if xi.size == 0:
        return 0.0
    if norm is Norm.L1:
        return float(np.sum(np.abs(xi)))
    if norm is Norm.L2:
        return float(np.sqrt(np.sum(xi * xi)))
    return float(np.max(np.abs(xi)))


@dataclass(frozen=True, eq=False)
class SpherePackProblem:
    radii: np.ndarray
    container: Container | BoxContainer
    objective: Norm = Norm.LINF
    step_bound: float | None = None
    coincident_policy: Coincident = Coincident.ZERO
    sets: tuple = field(init=False, repr=False)

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float).ravel()
        if r.size < 2 or np.any(~np.isfinite(r)) or np.any(r <= 0):
            raise InvalidInputError("need at least two spheres with positive radii")
        if self.container.dim < 2:
            raise InvalidInputError("dimension must be at least 2")
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "objective", Norm(self.objective))
        object.__setattr__(self, "coincident_policy", Coincident(self.coincident_policy))
        if self.step_bound is None:
            # moves longer than a radius per step rarely survive relinearization
            object.__setattr__(self, "step_bound", min(0.5 * float(self.container.semi_axes[0]), float(r.max())))
        elif not self.step_bound > 0:
            raise InvalidInputError("step_bound must be positive")
        cache: dict[float, ContainmentSet] = {}
        sets = []
        for ri in r:
            if ri not in cache:
                cache[ri] = center_set(float(ri), self.container)
            sets.append(cache[ri])
        object.__setattr__(self, "sets", tuple(sets))

    @property
    def n(self) -> int:
        return self.radii.size

    @property
    def dim(self) -> int:
        return self.container.dim

    @property
    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        return np.triu_indices(self.n, 1)

    def overlaps(self, centers: np.ndarray) -> np.ndarray:
        i, j = self.pairs
        d = np.linalg.norm(centers[i] - centers[j], axis=1)
        return np.maximum(0.0, self.radii[i] + self.radii[j] - d)

    def project(self, centers: np.ndarray) -> np.ndarray:
        return np.array([s.project(c) for s, c in zip(self.sets, np.asarray(centers, dtype=float))])

    def feasible(self, centers: np.ndarray, tol: float = 1e-8) -> bool:
        return all(s.contains(c, tol) for s, c in zip(self.sets, centers))


@dataclass(frozen=True, eq=False)
class SpherePackState:
    centers: np.ndarray
    xi: np.ndarray
    objective_value: float
    iteration: int = 0

    @classmethod
    def initial(cls, prob: SpherePackProblem, centers) -> "SpherePackState":
        c = np.asarray(centers, dtype=float)
        if c.shape != (prob.n, prob.dim):
            raise InvalidInputError(f"centers must have shape {(prob.n, prob.dim)}")
        if not prob.feasible(c, 0.0):
            c = prob.project(c)
        xi = prob.overlaps(c)
        return cls(c, xi, h_value(xi, prob.objective), 0)

    @property
    def max_overlap(self) -> float:
        return float(np.max(self.xi)) if self.xi.size else 0.0


def directions(centers: np.ndarray, prob: SpherePackProblem, rng=None) -> np.ndarray:
    """Unit vectors ``z_ij`` from ``c_j`` to ``c_i`` for all pairs ``i < j``."""
    i, j = prob.pairs
    d = centers[i] - centers[j]
    nd = np.linalg.norm(d, axis=1)
    z = np.zeros_like(d)
    ok = nd > 0
    z[ok] = d[ok] / nd[ok, None]
    if prob.coincident_policy is Coincident.RANDOM and not ok.all():
        rng = rng if rng is not None else np.random.default_rng(0)
        v = rng.standard_normal((int((~ok).sum()), prob.dim))
        z[~ok] = v / np.linalg.norm(v, axis=1, keepdims=True)
    return z


def linearized_overlaps(centers: np.ndarray, z: np.ndarray, prob: SpherePackProblem) -> np.ndarray:
    i, j = prob.pairs
    return np.maximum(0.0, prob.radii[i] + prob.radii[j] - np.einsum("pk,pk->p", z, centers[i] - centers[j]))


def build_subproblem(state: SpherePackState, prob: SpherePackProblem, z: np.ndarray | None = None, rng=None,
                     step_bound: float | None = None):
    """Convex program in the new centers with the pair constraints linearized at ``state``.

    Pairs that cannot come into contact within one bounded step are omitted;
    their linearized overlap is zero for every admissible step. The program's
    ``names`` hold the center columns, the retained pairs and the directions.
    """
    c0 = state.centers
    n, dim = c0.shape
    radius = prob.step_bound if step_bound is None else step_bound
    if z is None:
        z = directions(c0, prob, rng)
    ii, jj = prob.pairs
    rsum = prob.radii[ii] + prob.radii[jj]
    dist = np.linalg.norm(c0[ii] - c0[jj], axis=1)
    keep = np.nonzero(dist - 2 * radius < rsum)[0]
    pi, pj, pz, pr = ii[keep], jj[keep], z[keep], rsum[keep]
    P = keep.size

    b = ProgramBuilder()
    x = b.var("c", n * dim).reshape(n, dim)
    cols_i, cols_j = x[pi], x[pj]
    pair_cols = np.hstack([cols_i, cols_j])
    pair_coefs = np.hstack([pz, -pz])
    norm = prob.objective
    if norm is Norm.LINF:
        t = b.var("t", 1)[0]
        b.minimize([t], [1.0])
        b.nonneg([0.0], [[t]], [[1.0]])
        if P:
            b.nonneg(-pr, np.hstack([np.full((P, 1), t), pair_cols]), np.hstack([np.ones((P, 1)), pair_coefs]))
    elif P:
        e = b.var("xi", P)
        b.nonneg(np.zeros(P), e[:, None], np.ones((P, 1)))
        b.nonneg(-pr, np.hstack([e[:, None], pair_cols]), np.hstack([np.ones((P, 1)), pair_coefs]))
        if norm is Norm.L1:
            b.minimize(e, np.ones(P))
        else:
            # (u + 1)/2 >= |((u - 1)/2, xi)|  <=>  u >= xi^2
            u = b.var("u", P)
            b.minimize(u, np.ones(P))
            coefs = np.zeros((P, 2, 3))
            coefs[:, 0, 0], coefs[:, 0, 1], coefs[:, 1, 2] = 0.5, 0.5, 1.0
            b.soc_batch(np.tile([0.5, -0.5, 0.0], (P, 1)), np.stack([u, e], axis=1), coefs)
    else:
        t = b.var("t", 1)[0]
        b.minimize([t], [1.0])
        b.nonneg([0.0], [[t]], [[1.0]])

    for k, s in enumerate(prob.sets):
        s.emit(b, x[k])
    # trust region on each center
    coefs = np.broadcast_to(np.eye(dim + 1)[1:], (n, dim, dim + 1))
    b.soc_batch(np.hstack([np.full((n, 1), radius), -c0]), x, coefs)

    prog = b.build()
    prog.names.update(c=x, pairs=keep, z=z)
    return prog


DEFAULT_OPTS = SolverOptions(feas_tol=1e-9, gap_tol=1e-10, rel_gap_tol=1e-10)


@dataclass(frozen=True)
class StepRecord:
    h_prev: float
    h_lin: float
    h_new: float
    accepted: bool

    def sandwich_ok(self, slack: float = SANDWICH_SLACK) -> bool:
        return self.h_new <= self.h_lin + slack and self.h_lin <= self.h_prev + slack


def step(state: SpherePackState, prob: SpherePackProblem, opts: SolverOptions | None = None, rng=None):
    """One linearize-and-solve step. Returns ``(new_state, H(xi_bar), record)``.

    A step whose linearized objective does not improve on the current value is
    rejected, leaving the state unchanged; that is the stationarity signal.
    """
    z = directions(state.centers, prob, rng)
    radius = prob.step_bound
    for _ in range(STEP_RETRIES + 1):
        # a smaller step region is still a valid subproblem; retry there on breakdown
        prog = build_subproblem(state, prob, z, step_bound=radius)
        sol = solve(prog, opts or DEFAULT_OPTS)
        if sol.optimal:
            break
        radius *= 0.5
    if not sol.optimal:
        raise IterationError(f"subproblem solve failed: {sol.status.value} ({sol.message})",
                             {"iteration": state.iteration, "status": sol.status.value,
                              "primal_residual": sol.primal_residual, "dual_residual": sol.dual_residual})
    c_new = prob.project(sol.primal[prog.names["c"]])
    h_lin = h_value(linearized_overlaps(c_new, z, prob), prob.objective)
    if not h_lin < state.objective_value:
        rec = StepRecord(state.objective_value, state.objective_value, state.objective_value, False)
        return replace(state, iteration=state.iteration + 1), state.objective_value, rec
    xi = prob.overlaps(c_new)
    new = SpherePackState(c_new, xi, h_value(xi, prob.objective), state.iteration + 1)
    rec = StepRecord(state.objective_value, h_lin, new.objective_value, True)
    if not rec.sandwich_ok():
        raise IterationError("objective sandwich violated", {"record": rec, "iteration": new.iteration})
    return new, h_lin, rec


@dataclass
class PackResult:
    state: SpherePackState
    trace: list[float]
    records: list[StepRecord]
    reason: str

    @property
    def iterations(self) -> int:
        return len(self.records)


def pack(prob: SpherePackProblem, init_centers, max_iter: int = 500, h_decrease_tol: float = 1e-8,
         zero_tol: float = 1e-10, opts: SolverOptions | None = None, rng=None) -> PackResult:
    state = SpherePackState.initial(prob, init_centers)
    trace = [state.objective_value]
    records: list[StepRecord] = []
    reason = "max_iter"
    for _ in range(max_iter):
        if state.objective_value < zero_tol:
            reason = "no_overlap"
            break
        new, _, rec = step(state, prob, opts, rng)
        records.append(rec)
        if not rec.accepted:
            reason = "stationary"
            break
        dec = state.objective_value - new.objective_value
        state = new
        trace.append(state.objective_value)
        if dec < h_decrease_tol * trace[-2]:
            reason = "small_decrease"
            break
    else:
        if state.objective_value < zero_tol:
            reason = "no_overlap"
    return PackResult(state, trace, records, reason)


def random_centers(prob: SpherePackProblem, rng: np.random.Generator) -> np.ndarray:
    """Independent uniform draws from each sphere's feasible center set."""
    cont = prob.container
    out = np.empty((prob.n, prob.dim))
    for k, s in enumerate(prob.sets):
        if isinstance(cont, BoxContainer):
            out[k] = rng.uniform(s.lo, s.hi)
            continue
        E = cont.ellipsoid
        while True:
            u = rng.standard_normal(prob.dim)
            u *= rng.uniform() ** (1.0 / prob.dim) / np.linalg.norm(u)
            p = E.center + E.S @ u
            if s.contains(p, 0.0):
                out[k] = p
                break
    return out


def _run_start(args):
    prob, seed, index, kw = args
    rng = stream(seed, index)
    init = random_centers(prob, rng)
    return pack(prob, init, rng=rng, **kw)


def multistart(prob: SpherePackProblem, starts: int, seed: int, workers: int = 1, **kw) -> list[PackResult]:
    """Independent runs from random starts; run ``k`` uses stream ``(seed, k)``."""
    jobs = [(prob, seed, k, kw) for k in range(starts)]
    if workers <= 1:
        return [_run_start(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_start, jobs))


def best_run(results: list[PackResult]) -> int:
    """Index of the run with the smallest final objective (first on ties)."""
    return int(np.argmin([r.state.objective_value for r in results]))


def shrink_to_touching(state: SpherePackState, prob: SpherePackProblem) -> np.ndarray:
    m = state.max_overlap
    r = prob.radii - m / 2
    if np.any(r <= 0):
        raise DegenerateError("shrinking by half the largest overlap leaves a non-positive radius")
    return r


def neighbor_counts(state: SpherePackState, prob: SpherePackProblem, touch_tol: float = 1e-4) -> np.ndarray:
    c = state.centers
    d = np.linalg.norm(c[:, None] - c[None], axis=2)
    touch = d <= prob.radii[:, None] + prob.radii[None] + touch_tol
    np.fill_diagonal(touch, False)
    return touch.sum(axis=1)


def boundary_spheres(state: SpherePackState, prob: SpherePackProblem, touch_tol: float = 1e-4) -> np.ndarray:
    return np.array([s.slack(c) <= touch_tol for s, c in zip(prob.sets, state.centers)], dtype=bool)


def neighbor_histogram(state: SpherePackState, prob: SpherePackProblem, touch_tol: float = 1e-4,
                       boundary_filter: bool = False) -> dict[int, int]:
    """Number of spheres having each neighbor count.

    With ``boundary_filter`` the spheres touching the container are left out
    of the tally (their neighbors still count toward other spheres).
    """
    counts = neighbor_counts(state, prob, touch_tol)
    if boundary_filter:
        counts = counts[~boundary_spheres(state, prob, touch_tol)]
    return dict(sorted(Counter(counts.tolist()).items()))


def hexagonal_number(k: int) -> int:
    if int(k) != k or k < 1:
        raise InvalidInputError("k must be a positive integer")
    k = int(k)
    return 3 * k * (k + 1) + 1
