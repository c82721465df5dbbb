"""Min-max-overlap packing of ellipsoids by a trust-region method.

Each ellipsoid carries a containment multiplier ``lam``, a center ``c``, a
shape ``S`` (eigenvalues are the semi-axes) and a relaxed second-moment
matrix ``Sigma >= S^2``. A master conic program minimizes the largest
linearized pairwise overlap inside a trust region of radius ``rho``; the
overlaps and their linearizations come from the pairwise SDP duals.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .conic import ConicProgram, ProgramBuilder, SolverOptions, solve
from .errors import InfeasibleContainmentError, InvalidInputError, IterationError, MeasurementError
from .geometry import AxisSpec, BallSet, Container, LMISet, best_containment_multiplier, containment_matrix, emit_containment
from .matcore import smat, svec, svec_dim
from .overlap import OverlapReport, measure_overlaps
from .rng import stream


@dataclass(frozen=True)
class TrustRegionConfig:
    eta1: float = 0.5
    eta2: float = 0.9
    c1: float = 0.01
    c2: float = 0.7
    phi1: float = 0.5
    phi2: float = 2.0
    rho0: float | None = None  # default 0.1 * container max semi-axis
    rho_max: float | None = None  # default container max semi-axis
    radius_ratios: tuple = (1.0, 1.0, 0.1)
    tol1: float = 0.005
    tol2: float = 0.0001
    max_iter: int = 100
    sigma_cap: bool = True

    def __post_init__(self):
        if not 0 < self.eta1 < self.eta2 < 1:
            raise InvalidInputError("need 0 < eta1 < eta2 < 1")
        if not 0 < self.c1 < self.c2 < 1:
            raise InvalidInputError("need 0 < c1 < c2 < 1")
        if not (0 < self.phi1 < 1 < self.phi2):
            raise InvalidInputError("need 0 < phi1 < 1 < phi2")
        if len(self.radius_ratios) != 3 or min(self.radius_ratios) <= 0:
            raise InvalidInputError("radius_ratios needs three positive entries")
        if self.max_iter < 0:
            raise InvalidInputError("max_iter must be nonnegative")

    def radii(self, container: Container) -> tuple[float, float]:
        a = float(container.semi_axes[0])
        rho_max = a if self.rho_max is None else float(self.rho_max)
        rho0 = 0.1 * a if self.rho0 is None else float(self.rho0)
        if not 0 < rho0 <= rho_max:
            raise InvalidInputError("need 0 < rho0 <= rho_max")
        return rho0, rho_max


@dataclass(frozen=True)
class HomologConfig:
    """Pairs whose enclosing spheres (radius ``lambda_factor`` times the
    largest semi-axis) are pushed apart with weight ``penalty``."""

    pairs: tuple
    penalty: float = 100.0
    lambda_factor: float = 1.25

    def __post_init__(self):
        pairs = tuple(tuple(int(v) for v in p) for p in self.pairs)
        for p in pairs:
            if len(p) != 2 or p[0] == p[1]:
                raise InvalidInputError(f"bad homolog pair {p}")
        object.__setattr__(self, "pairs", pairs)
        if self.penalty < 0 or self.lambda_factor < 1:
            raise InvalidInputError("penalty must be >= 0 and lambda_factor >= 1")


@dataclass(frozen=True, eq=False)
class PackingProblem:
    specs: tuple
    container: Container
    homolog: HomologConfig | None = None

    def __post_init__(self):
        specs = tuple(s if isinstance(s, AxisSpec) else AxisSpec(tuple(s)) for s in self.specs)
        if len(specs) < 2:
            raise InvalidInputError("need at least two ellipsoids")
        if any(s.dim != self.container.dim for s in specs):
            raise InvalidInputError("spec dimension differs from the container")
        object.__setattr__(self, "specs", specs)
        if self.homolog is not None:
            for i, j in self.homolog.pairs:
                if not (0 <= i < len(specs) and 0 <= j < len(specs)):
                    raise InvalidInputError(f"homolog pair {(i, j)} out of range")

    @property
    def n(self) -> int:
        return len(self.specs)

    @property
    def dim(self) -> int:
        return self.container.dim

    @property
    def pairs(self) -> np.ndarray:
        i, j = np.triu_indices(self.n, 1)
        return np.stack([i, j], axis=1)


@dataclass(frozen=True)
class Evaluation:
    values: np.ndarray  # overlap per pair (problem.pairs order)
    reports: list
    t_star: float
    eta: float
    merit: float


@dataclass(frozen=True, eq=False)
class PackingState:
    lam: np.ndarray
    centers: np.ndarray
    S: np.ndarray
    Sigma: np.ndarray
    evaluation: Evaluation | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.centers.shape[0]

    def assembled(self) -> np.ndarray:
        """Block-diagonal matrix with blocks ``[[Sigma_i, c_i], [c_i', 1]]``."""
        n, d = self.centers.shape
        out = np.zeros((n * (d + 1), n * (d + 1)))
        for i in range(n):
            o = i * (d + 1)
            out[o:o + d, o:o + d] = self.Sigma[i]
            out[o:o + d, o + d] = self.centers[i]
            out[o + d, o:o + d] = self.centers[i]
            out[o + d, o + d] = 1.0
        return out


# ----------------------------------------------------------------------
def homolog_overlap(state: PackingState, problem: PackingProblem) -> float:
    h = problem.homolog
    if h is None or not h.pairs:
        return 0.0
    vals = []
    for i, j in h.pairs:
        r = h.lambda_factor * (problem.specs[i].radii[0] + problem.specs[j].radii[0])
        vals.append(r - float(np.linalg.norm(state.centers[i] - state.centers[j])))
    return max(0.0, max(vals))


def evaluate(state: PackingState, problem: PackingProblem, opts: SolverOptions | None = None) -> Evaluation:
    """Overlaps of all pairs plus the penalized objective."""
    pairs = problem.pairs
    reports = measure_overlaps(state.centers, state.Sigma, pairs, opts)
    values = np.array([r.value for r in reports])
    t_star = float(values.max()) if values.size else 0.0
    eta = homolog_overlap(state, problem)
    pen = problem.homolog.penalty if problem.homolog is not None else 0.0
    return Evaluation(values, reports, t_star, eta, t_star + pen * eta)


def with_evaluation(state: PackingState, problem: PackingProblem, opts=None) -> PackingState:
    if state.evaluation is not None:
        return state
    return replace(state, evaluation=evaluate(state, problem, opts))


def select_active_set(values, eta1: float = 0.5, eta2: float = 0.9) -> np.ndarray:
    """Indices with overlap at least ``eta1`` times the largest (all of the
    wider set, which contains the ``eta2`` set). Empty when nothing overlaps."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return np.zeros(0, dtype=int)
    top = float(v.max())
    if top <= 0:
        return np.zeros(0, dtype=int)
    return np.nonzero(v >= eta1 * top)[0]


# ----------------------------------------------------------------------
@dataclass
class _Cols:
    lam: np.ndarray
    c: np.ndarray
    s: list
    g: list


def build_master(state: PackingState, problem: PackingProblem, active, rho: float,
                 cfg: TrustRegionConfig = TrustRegionConfig()) -> ConicProgram:
    """Linearized master program over all ellipsoid parameters.

    The program's ``names`` hold the column map under ``"cols"``.
    """
    state = with_evaluation(state, problem)
    ev = state.evaluation
    active = np.asarray(active, dtype=int)
    hom = problem.homolog
    use_hom = hom is not None and len(hom.pairs) > 0 and hom.penalty > 0
    if active.size == 0 and not use_hom:
        raise InvalidInputError("the master program needs at least one overlapping pair")
    n, d = state.centers.shape
    t = svec_dim(d)
    basis = smat(np.eye(t), d)
    eye_vec = svec(np.eye(d))
    dc, ds, dl = (float(r) * rho for r in cfg.radius_ratios)

    b = ProgramBuilder()
    xi = b.var("xi", 1)[0]
    lam = b.var("lam", n)
    cc = b.var("c", n * d).reshape(n, d)
    s_cols, g_cols = [], []
    for i, spec in enumerate(problem.specs):
        if spec.is_sphere:
            s_cols.append(None)
            g_cols.append(None)
        else:
            s_cols.append(b.var(f"S{i}", t))
            g_cols.append(b.var(f"Sigma{i}", t))
    b.minimize([xi], [1.0])

    # linearized overlaps
    pairs = problem.pairs
    for l in active:
        i, j = pairs[l]
        rep: OverlapReport = ev.reports[l]
        if rep.duals is None:
            raise InvalidInputError(f"pair {(i, j)} has no dual information")
        _, _, _, _, q1, Q1 = rep.duals.parts(1)
        _, _, _, _, q2, Q2 = rep.duals.parts(2)
        const = -rep.value + 2 * q1 @ state.centers[i] + 2 * q2 @ state.centers[j]
        cols = [xi, *cc[i], *cc[j]]
        coefs = [1.0, *(-2 * q1), *(-2 * q2)]
        for k, Q, gc in ((i, Q1, g_cols[i]), (j, Q2, g_cols[j])):
            if gc is not None:
                qv = svec(Q)
                const += qv @ svec(state.Sigma[k])
                cols += list(gc)
                coefs += list(-qv)
        b.nonneg([const], [cols], [coefs])
    if active.size == 0:
        b.nonneg([0.0], [[xi]], [[1.0]])

    for i, spec in enumerate(problem.specs):
        r1, r3 = spec.radii[0], spec.radii[-1]
        shape = s_cols[i] if s_cols[i] is not None else spec.radii[0] * np.eye(d)
        emit_containment(b, problem.container, int(lam[i]), cc[i], shape)
        if s_cols[i] is not None:
            sc, gc = s_cols[i], g_cols[i]
            # [[Sigma, S], [S, I]] >= 0
            const = np.zeros((2 * d, 2 * d))
            const[d:, d:] = np.eye(d)
            terms = []
            for k in range(t):
                M = np.zeros((2 * d, 2 * d))
                M[:d, :d] = basis[k]
                terms.append((int(gc[k]), M))
                M = np.zeros((2 * d, 2 * d))
                M[:d, d:] = basis[k]
                M[d:, :d] = basis[k]
                terms.append((int(sc[k]), M))
            b.psd(const, terms)
            b.psd(r1 * np.eye(d), [(int(sc[k]), -basis[k]) for k in range(t)])
            b.psd(-r3 * np.eye(d), [(int(sc[k]), basis[k]) for k in range(t)])
            if cfg.sigma_cap:
                b.psd(r1 * r1 * np.eye(d), [(int(gc[k]), -basis[k]) for k in range(t)])
            b.eq(sc, eye_vec, spec.trace)
            sv = svec(state.S[i])
            b.soc(np.r_[ds, -sv], [(int(sc[k]), np.eye(t + 1)[k + 1]) for k in range(t)])
        b.soc(np.r_[dc, -state.centers[i]], [(int(cc[i, k]), np.eye(d + 1)[k + 1]) for k in range(d)])
        b.nonneg([dl + state.lam[i], dl - state.lam[i]], [[lam[i]], [lam[i]]], [[-1.0], [1.0]])

    if use_hom:
        eta = b.var("eta", 1)[0]
        b.minimize([eta], [hom.penalty])
        b.nonneg([0.0], [[eta]], [[1.0]])
        for i, j in hom.pairs:
            diff = state.centers[i] - state.centers[j]
            nd = float(np.linalg.norm(diff))
            z = diff / nd if nd > 0 else np.zeros(d)
            r = hom.lambda_factor * (problem.specs[i].radii[0] + problem.specs[j].radii[0])
            b.nonneg([-r], [[eta, *cc[i], *cc[j]]], [[1.0, *z, *(-z)]])

    prog = b.build()
    prog.names["cols"] = _Cols(lam, cc, s_cols, g_cols)
    return prog


def predicted_decrease(reference: float, master_value: float) -> float:
    """``reference - master_value`` floored at zero (the current point is
    feasible for the master, so a negative value is solver noise)."""
    return max(0.0, float(reference) - float(master_value))


def _candidate(state: PackingState, problem: PackingProblem, x: np.ndarray, cols: _Cols) -> PackingState:
    n, d = state.centers.shape
    lam = np.clip(x[cols.lam], 0.0, 1.0)
    centers = x[cols.c]
    S = state.S.copy()
    for i, spec in enumerate(problem.specs):
        if cols.s[i] is None:
            continue
        Si = smat(x[cols.s[i]], d)
        w, v = np.linalg.eigh(Si)
        w = np.clip(w, spec.radii[-1], spec.radii[0])
        w += (spec.trace - w.sum()) / d
        S[i] = (v * w) @ v.T
    Sigma = S @ S
    return PackingState(lam, centers, S, Sigma)


def predicted_decrease_at(state: PackingState, rho: float, problem: PackingProblem,
                          cfg: TrustRegionConfig = TrustRegionConfig(), opts: SolverOptions | None = None) -> float:
    """Lambda for radius ``rho`` with the active set chosen at ``state``."""
    state = with_evaluation(state, problem, opts)
    ev = state.evaluation
    prog = build_master(state, problem, select_active_set(ev.values, cfg.eta1, cfg.eta2), rho, cfg)
    sol = solve(prog, opts)
    if not sol.optimal:
        raise IterationError(f"master solve ended with {sol.status.value} ({sol.message})", {"rho": rho})
    return predicted_decrease(ev.merit, sol.objective_value)


@dataclass(frozen=True)
class IterationInfo:
    t_star: float
    merit: float
    Lambda: float
    rho: float
    n_active: int
    accepted: bool
    candidate_merit: float
    master_value: float
    solver_iterations: int
    step_norm: float


def tr_iterate(state: PackingState, rho: float, problem: PackingProblem,
               cfg: TrustRegionConfig = TrustRegionConfig(), opts: SolverOptions | None = None):
    """One trust-region iteration. Returns ``(next_state, next_rho, accepted, info)``."""
    state = with_evaluation(state, problem)
    ev = state.evaluation
    _, rho_max = cfg.radii(problem.container)
    active = select_active_set(ev.values, cfg.eta1, cfg.eta2)
    prog = build_master(state, problem, active, rho, cfg)
    sol = solve(prog, opts)
    if not sol.optimal:
        raise IterationError(f"master solve ended with {sol.status.value} ({sol.message})",
                             {"rho": rho, "n_active": int(active.size), "status": sol.status.value})
    cols = prog.names["cols"]
    Lam = predicted_decrease(ev.merit, sol.objective_value)
    cand = _candidate(state, problem, sol.primal, cols)
    step = float(np.sqrt(np.sum((cand.centers - state.centers) ** 2) + np.sum((cand.S - state.S) ** 2)
                         + np.sum((cand.lam - state.lam) ** 2)))
    try:
        cand = replace(cand, evaluation=evaluate(cand, problem, opts))
    except MeasurementError as exc:
        raise IterationError(f"overlap measurement failed at the candidate: {exc}", {"rho": rho}) from exc
    cm = cand.evaluation.merit
    accepted = cm <= ev.merit - cfg.c1 * Lam
    if accepted:
        nxt = cand
        new_rho = min(cfg.phi2 * rho, rho_max) if cm <= ev.merit - cfg.c2 * Lam else rho
    else:
        nxt = state
        new_rho = cfg.phi1 * rho
    info = IterationInfo(ev.t_star, ev.merit, Lam, rho, int(active.size), bool(accepted), cm,
                         sol.objective_value, sol.iterations, step)
    return nxt, new_rho, bool(accepted), info


@dataclass
class PackingResult:
    state: PackingState
    history: list
    reason: str

    @property
    def final_overlap(self) -> float:
        return self.state.evaluation.t_star


def pack_ellipsoids(problem: PackingProblem, init: PackingState, cfg: TrustRegionConfig = TrustRegionConfig(),
                    opts: SolverOptions | None = None, callback=None) -> PackingResult:
    """Run the trust-region loop from ``init``.

    Stops when nothing overlaps (and the homolog term is zero), when the
    largest overlap is at most ``tol2`` times the container volume, when the
    predicted decrease per unit radius drops to ``tol1``, or at ``max_iter``.
    """
    rho, _ = cfg.radii(problem.container)
    state = with_evaluation(init, problem, opts)
    history: list[dict] = []
    reason = "max_iter"
    vol = problem.container.volume
    for k in range(cfg.max_iter):
        ev = state.evaluation
        if ev.merit <= 0.0:
            reason = "no_overlap"
            break
        if ev.t_star <= cfg.tol2 * vol and ev.eta <= 0.0:
            reason = "small_overlap"
            break
        nxt, new_rho, acc, info = tr_iterate(state, rho, problem, cfg, opts)
        row = {"iteration": k, "t_star": ev.t_star, "merit": ev.merit, "Lambda": info.Lambda, "rho": rho,
               "n_active": info.n_active, "accepted": acc, "candidate_merit": info.candidate_merit,
               "solver_iterations": info.solver_iterations}
        history.append(row)
        if callback is not None:
            callback(row)
        # at a plateau of the linear model (nested bodies give a zero
        # supergradient) the step can still pay off, so keep going while it does
        improved = acc and info.candidate_merit < ev.merit - cfg.tol1 * rho
        if (info.Lambda <= cfg.tol1 * rho or info.step_norm == 0.0) and not improved:
            if acc:
                state = nxt
            reason = "stationary"
            break
        state, rho = nxt, new_rho
        if acc and state.evaluation.merit <= 0.0:
            reason = "no_overlap"
            break
    return PackingResult(state, history, reason)


# ----------------------------------------------------------------------
def init_state(specs, container: Container, seed: int | None = None, rng=None, max_tries: int = 10000) -> PackingState:
    """Random feasible start: spherical shapes ``S = (trace/dim) I`` at
    centers drawn uniformly from one shrunken container, with multipliers
    from a one-dimensional search.

    The shrunken container is the set of centers at which the largest start
    ball fits, shared by all bodies so that where a body lands does not
    depend on its size.
    """
    specs = [s if isinstance(s, AxisSpec) else AxisSpec(tuple(s)) for s in specs]
    rng = rng if rng is not None else stream(0 if seed is None else seed, 0)
    d = container.dim
    E = container.ellipsoid
    n = len(specs)
    radii = np.array([spec.trace / d for spec in specs])
    r_max = float(radii.max())
    if container.is_spherical:
        region = BallSet(container.center, float(container.semi_axes[0]) - r_max)
        if region.radius <= 0:
            raise InfeasibleContainmentError("the largest body cannot fit in the container")
    else:
        region = LMISet(r_max, container)
    lam = np.zeros(n)
    centers = np.zeros((n, d))
    S = np.zeros((n, d, d))
    for i, r in enumerate(radii):
        Si = r * np.eye(d)
        for _ in range(max_tries):
            u = rng.standard_normal(d)
            u *= rng.uniform() ** (1.0 / d) / np.linalg.norm(u)
            p = E.center + E.S @ u
            if region.contains(p, 0.0):
                break
        else:
            raise InfeasibleContainmentError(f"no feasible center found for ellipsoid {i}")
        lam_i, worst = best_containment_multiplier(p, Si, container)
        if worst > 1e-9:
            raise InfeasibleContainmentError(f"ellipsoid {i} does not fit at its sampled center")
        lam[i], centers[i], S[i] = lam_i, p, Si
    return PackingState(lam, centers, S, S @ S)


def constraint_residuals(state: PackingState, problem: PackingProblem) -> dict:
    """Largest violation of each family of feasibility constraints."""
    d = problem.dim
    out = dict(containment=0.0, coupling=0.0, spectrum=0.0, trace=0.0, multiplier=0.0, relaxation=0.0)
    for i, spec in enumerate(problem.specs):
        S, Sig = state.S[i], state.Sigma[i]
        F = containment_matrix(state.centers[i], S, state.lam[i], problem.container)
        out["containment"] = max(out["containment"], float(np.linalg.eigvalsh(F)[-1]))
        K = np.block([[Sig, S], [S, np.eye(d)]])
        out["coupling"] = max(out["coupling"], -float(np.linalg.eigvalsh(K)[0]))
        w = np.linalg.eigvalsh(S)
        out["spectrum"] = max(out["spectrum"], float(w[-1] - spec.radii[0]), float(spec.radii[-1] - w[0]))
        out["trace"] = max(out["trace"], abs(float(np.trace(S)) - spec.trace))
        out["multiplier"] = max(out["multiplier"], -float(state.lam[i]), float(state.lam[i]) - 1.0)
        out["relaxation"] = max(out["relaxation"], -float(np.linalg.eigvalsh(Sig - S @ S)[0]))
    return {k: max(0.0, v) for k, v in out.items()}


@dataclass(frozen=True)
class AxisReport:
    distortion: np.ndarray  # per ellipsoid, relative l2 error of the semi-axes
    projected: PackingState
    max_overlap_relaxed: float
    max_overlap_projected: float

    def fraction_distorted(self, threshold: float = 0.1) -> float:
        return float(np.mean(self.distortion > threshold))


def project_axes(state: PackingState, problem: PackingProblem, opts: SolverOptions | None = None) -> AxisReport:
    """Replace each shape's eigenvalues by the prescribed semi-axes (same
    eigenvectors) and report overlaps for both versions."""
    state = with_evaluation(state, problem, opts)
    S = state.S.copy()
    dist = np.zeros(problem.n)
    for i, spec in enumerate(problem.specs):
        w, v = np.linalg.eigh(state.S[i])
        order = np.argsort(w)[::-1]
        want = np.array(spec.radii)
        dist[i] = np.linalg.norm(w[order] - want) / np.linalg.norm(want)
        S[i] = (v[:, order] * want) @ v[:, order].T
    proj = PackingState(state.lam.copy(), state.centers.copy(), S, S @ S)
    proj = replace(proj, evaluation=evaluate(proj, problem, opts))
    return AxisReport(dist, proj, state.evaluation.t_star, proj.evaluation.t_star)
