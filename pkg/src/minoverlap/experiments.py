"""Desk-scale experiments with pass/fail verdicts.

Each function runs one scenario, compares what it measured with the target
and returns a :class:`Check`. The command-line ``repro`` subcommand and the
acceptance tests call the same functions.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import formats
from .chromosim import run_batch, scenario, with_penalty
from .conic import lipschitz_probe, solution_continuity_probe, value_and_solution
from .ellipack import (PackingProblem, TrustRegionConfig, init_state, predicted_decrease_at, select_active_set,
                       tr_iterate, with_evaluation)
from .geometry import AxisSpec, BoxContainer, Container, Ellipsoid
from .overlap import measure_overlap, overlap_family, overlap_objective
from .rng import stream
from .spherepack import (Norm, SpherePackProblem, SpherePackState, best_run, multistart, neighbor_histogram, pack,
                         shrink_to_touching, step)

FIVE_CIRCLE_OPTIMUM = 0.4122147478
CURVED_HEX_37_RATIO = 6.758770483143


@dataclass
class Check:
    name: str
    passed: bool
    measured: dict
    target: dict
    elapsed: float
    documents: dict = field(default_factory=dict)
    sandwich: tuple = (0, 0)  # (violations, steps checked)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: " + ", ".join(
            f"{k}={_short(v)}" for k, v in self.measured.items())

    def report(self) -> dict:
        return {"name": self.name, "passed": self.passed, "measured": self.measured, "target": self.target,
                "elapsed": self.elapsed, "sandwich_violations": self.sandwich[0], "sandwich_steps": self.sandwich[1]}


def _short(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_short(x)}" for k, x in v.items()) + "}"
    return str(v)


def _sandwich(results) -> tuple[int, int]:
    recs = [r for res in results for r in res.records]
    return sum(not r.sandwich_ok() for r in recs), len(recs)


# ----------------------------------------------------------------------
# result documents

def sphere_result(instance: dict, results: list, prob: SpherePackProblem, seed: int | None,
                  wall_clock: float | None) -> dict:
    k = best_run(results)
    best = results[k]
    st = best.state
    d = prob.dim
    labels = formats.labels_from(instance) if instance.get("bodies") else None
    bodies = []
    for i in range(prob.n):
        b = {"center": st.centers[i], "shape": prob.radii[i] * np.eye(d), "radius": float(prob.radii[i])}
        if labels and labels[i] is not None:
            b["label"] = labels[i]
        bodies.append(b)
    doc = {
        "instance_digest": formats.digest(instance),
        "kind": "spheres",
        "objective": st.objective_value,
        "max_overlap": st.max_overlap,
        "termination": best.reason,
        "starts": [{"index": j, "objective": r.state.objective_value, "termination": r.reason,
                    "iterations": r.iterations} for j, r in enumerate(results)],
        "best_start": k,
        "bodies": bodies,
        "overlaps": st.xi,
        "history": [{"iteration": j, "objective": h} for j, h in enumerate(best.trace)],
        "wall_clock": wall_clock,
    }
    if seed is not None:
        doc["seed"] = seed
    return formats.validate(formats._plain(doc), "result")


def ellipsoid_result(instance: dict, result, seed: int | None, wall_clock: float | None) -> dict:
    st = result.state
    ev = st.evaluation
    labels = formats.labels_from(instance) if instance.get("bodies") else None
    bodies = []
    for i in range(st.n):
        b = {"center": st.centers[i], "shape": st.S[i], "multiplier": float(st.lam[i])}
        if labels and labels[i] is not None:
            b["label"] = labels[i]
        bodies.append(b)
    doc = {
        "instance_digest": formats.digest(instance),
        "kind": "ellipsoids",
        "objective": ev.merit,
        "max_overlap": ev.t_star,
        "termination": result.reason,
        "bodies": bodies,
        "overlaps": ev.values,
        "history": result.history,
        "wall_clock": wall_clock,
    }
    if seed is not None:
        doc["seed"] = seed
    return formats.validate(formats._plain(doc), "result")


def sphere_instance(radii, container, objective: str = "LInf", seed: int | None = None, **options) -> dict:
    if isinstance(container, BoxContainer):
        cdoc = {"shape": "box", "center": container.center.tolist(),
                "semi_axes": (0.5 * (container.hi - container.lo)).tolist()}
    elif container.is_spherical:
        cdoc = {"shape": "sphere", "center": container.center.tolist(),
                "semi_axes": [float(container.semi_axes[0])]}
    else:
        w, v = np.linalg.eigh(container.ellipsoid.S)
        cdoc = {"shape": "ellipsoid", "center": container.center.tolist(), "semi_axes": w.tolist(),
                "orientation": v.T.tolist()}
    doc = {"kind": "spheres", "dimension": container.dim, "container": cdoc,
           "bodies": [{"radius": float(r)} for r in radii], "objective": objective}
    if options:
        doc["options"] = options
    if seed is not None:
        doc["seed"] = seed
    return formats.validate(formats._plain(doc), "instance")


# ----------------------------------------------------------------------
# sphere packing scenarios

def five_circles(starts: int = 50, seed: int = 0, timing: bool = True) -> Check:
    t0 = time.perf_counter()
    container = Container.sphere(1.0, (0.0, 0.0))
    prob = SpherePackProblem(np.full(5, 0.5), container, Norm.LINF)
    results = multistart(prob, starts, seed)
    elapsed = time.perf_counter() - t0
    best = min(r.state.objective_value for r in results)
    local = [k for k, r in enumerate(results)
             if np.min(np.linalg.norm(r.state.centers, axis=1)) <= 1e-3 and abs(r.state.objective_value - 0.5) <= 1e-3]
    inst = sphere_instance(prob.radii, container, "LInf", seed, starts=starts)
    doc = sphere_result(inst, results, prob, seed, elapsed if timing else None)
    ok = abs(best - FIVE_CIRCLE_OPTIMUM) <= 1e-3 and len(local) > 0 and elapsed <= 120
    return Check("five-circles", ok,
                 {"best": best, "local_family_runs": len(local), "starts": starts, "seconds": elapsed},
                 {"best": FIVE_CIRCLE_OPTIMUM, "tolerance": 1e-3, "local_family": 0.5, "seconds": 120},
                 elapsed, {"fig1.json": formats.dumps(doc)}, _sandwich(results))


def lattice_centers(count_per_side: int, radius: float, box: BoxContainer) -> np.ndarray:
    g = radius + np.arange(count_per_side) * (box.hi[0] - box.lo[0] - 2 * radius) / (count_per_side - 1)
    xx, yy = np.meshgrid(box.lo[0] + g, box.lo[1] + g, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel()], axis=1)


def square_lattice(radius: float = 0.55, side: float = 10.0, iterations: int = 5) -> Check:
    t0 = time.perf_counter()
    box = BoxContainer.cube(side, 2, (side / 2, side / 2))
    prob = SpherePackProblem(np.full(100, radius), box, Norm.LINF)
    state = SpherePackState.initial(prob, lattice_centers(10, radius, box))
    start = state.objective_value
    moves, recs = [], []
    for _ in range(iterations):
        new, _, rec = step(state, prob)
        moves.append(float(np.max(np.linalg.norm(new.centers - state.centers, axis=1))))
        recs.append(rec)
        state = new
    elapsed = time.perf_counter() - t0
    ok = max(moves) <= 1e-8
    return Check("square-lattice", ok, {"max_move": max(moves), "overlap": start, "iterations": iterations},
                 {"max_move": 1e-8}, elapsed, sandwich=(sum(not r.sandwich_ok() for r in recs), len(recs)))


def disc_container_for_density(n: int, radius: float, density: float, dim: int = 2) -> Container:
    """Ball container whose volume makes ``n`` equal balls fill ``density`` of it."""
    R = radius * (n / density) ** (1.0 / dim)
    return Container.sphere(R, (0.0,) * dim)


def hex_emergence(seed: int = 0, starts: int = 1, objective: str = "L2", step_bound: float = 1.0,
                  budget: float = 600.0, timing: bool = True) -> Check:
    """150 unit circles at hexagonal density; interior neighbor counts."""
    t0 = time.perf_counter()
    container = disc_container_for_density(150, 1.0, math.pi / math.sqrt(12))
    prob = SpherePackProblem(np.ones(150), container, objective, step_bound=step_bound)
    results = multistart(prob, starts, seed, max_iter=400)
    elapsed = time.perf_counter() - t0
    k = best_run(results)
    hist = neighbor_histogram(results[k].state, prob, 1e-4, boundary_filter=True)
    frac = hist.get(6, 0) / sum(hist.values())
    inst = sphere_instance(prob.radii, container, objective, seed, starts=starts, step_bound=step_bound)
    doc = sphere_result(inst, results, prob, seed, elapsed if timing else None)
    ok = frac >= 0.6 and elapsed <= budget
    return Check("hexagonal-emergence", ok,
                 {"six_neighbor_fraction": frac, "histogram": hist, "seconds": elapsed},
                 {"six_neighbor_fraction": 0.6, "seconds": budget}, elapsed,
                 {"fig2.json": formats.dumps(doc), "fig2_histogram.csv": formats.histogram_csv(hist)},
                 _sandwich(results))


def fcc_trend(n: int = 60, seed: int = 0, objective: str = "L2", step_bound: float | None = None,
              budget: float = 900.0) -> Check:
    """Equal spheres of volume pi at FCC density in a ball; interior neighbor mode."""
    t0 = time.perf_counter()
    r = (3.0 / 4.0) ** (1.0 / 3.0)
    container = disc_container_for_density(n, r, math.pi / math.sqrt(18), 3)
    prob = SpherePackProblem(np.full(n, r), container, objective, step_bound=step_bound)
    results = multistart(prob, 1, seed, max_iter=400)
    elapsed = time.perf_counter() - t0
    st = results[0].state
    full = neighbor_histogram(st, prob, 1e-4)
    hist = neighbor_histogram(st, prob, 1e-4, boundary_filter=True)
    mode = max(sorted(hist), key=lambda c: hist[c]) if hist else -1
    ok = mode == 12 and elapsed <= budget
    return Check("fcc-trend", ok, {"interior_mode": mode, "interior_histogram": hist, "histogram": full,
                                   "seconds": elapsed},
                 {"interior_mode": 12, "seconds": budget}, elapsed,
                 {"fig4_all.csv": formats.histogram_csv(full), "fig4_interior.csv": formats.histogram_csv(hist)},
                 _sandwich(results))


def hex_pattern(rings: int, spacing: float = 2.0) -> np.ndarray:
    """Centers of a hexagonal patch with ``rings`` rings around one center."""
    pts = []
    for q in range(-rings, rings + 1):
        for r in range(max(-rings, -q - rings), min(rings, -q + rings) + 1):
            pts.append((spacing * (q + 0.5 * r), spacing * (math.sqrt(3) / 2) * r))
    return np.array(pts)


def curved_hex_starts(rings: int, R: float, radius: float, count: int, seed: int) -> list[np.ndarray]:
    """Hexagonal patches shrunk into the container, rotated and jittered."""
    base = hex_pattern(rings, 2 * radius)
    scale = (R - radius) / (2 * radius * rings)
    out = []
    for k in range(count):
        rng = stream(seed, k)
        a = rng.uniform(0, 2 * math.pi)
        rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
        jitter = 0.05 * radius * (1 + k) / count
        out.append(scale * base @ rot.T + rng.normal(0, jitter, base.shape))
    return out


def curved_hex(starts: int = 20, seed: int = 0, oversize: float = 1.02, max_iter: int = 400) -> Check:
    t0 = time.perf_counter()
    R = CURVED_HEX_37_RATIO
    container = Container.sphere(R, (0.0, 0.0))
    prob = SpherePackProblem(np.ones(37), container, Norm.LINF)
    inits = curved_hex_starts(3, R, 1.0, starts, seed)
    results = [pack(prob, c, max_iter=max_iter, h_decrease_tol=0.0) for c in inits]
    overlaps = [r.state.max_overlap for r in results]
    big = SpherePackProblem(np.full(37, oversize), container, Norm.LINF)
    k = int(np.argmin(overlaps))
    shrunk_res = pack(big, results[k].state.centers, max_iter=max_iter, h_decrease_tol=0.0)
    r_small = shrink_to_touching(shrunk_res.state, big)
    small = SpherePackProblem(r_small, container, Norm.LINF)
    after = SpherePackState.initial(small, shrunk_res.state.centers).max_overlap
    elapsed = time.perf_counter() - t0
    best = float(min(overlaps))
    ok = best <= 1e-6 and after <= 1e-8
    from .formats import render_svg
    svg = render_svg(results[k].state.centers, 1.0, container,
                     [p for p, v in zip(zip(*prob.pairs), results[k].state.xi) if v > 1e-6])
    return Check("curved-hexagonal", ok,
                 {"best_max_overlap": best, "runs_below_1e-6": int(sum(o <= 1e-6 for o in overlaps)),
                  "oversized_overlap": shrunk_res.state.max_overlap, "after_shrink": after, "seconds": elapsed},
                 {"best_max_overlap": 1e-6, "after_shrink": 1e-8}, elapsed, {"fig5_37.svg": svg},
                 _sandwich(results + [shrunk_res]))


# ----------------------------------------------------------------------
# overlap measure

def _spheroid_b(x0: float, a: float, balls) -> float:
    """Largest equatorial semi-axis b of a spheroid centered at ``x0`` on the
    axis with axial semi-axis ``a`` inside every ``(center, radius)`` ball."""
    best = math.inf
    for c, R in balls:
        e = abs(x0 - c)
        if a + e > R:
            return -1.0
        # with b > a the farthest point solves B^2 + (e^2 - a^2 - R^2) B + R^2 a^2 = 0 for B = b^2
        p = e * e - a * a - R * R
        disc = p * p - 4 * R * R * a * a
        B = 0.5 * (-p + math.sqrt(max(disc, 0.0)))
        best = min(best, B)
    return math.sqrt(best)


def lens_oracle(r1: float, r2: float, d: float) -> float:
    """Largest sum of semi-axes of a spheroid inside two balls whose centers
    are ``d`` apart, searched over spheroids aligned with the center line.

    Inscribed spheroids form a convex set, so both nested one-dimensional
    searches maximize concave functions.
    """
    from scipy.optimize import minimize_scalar

    if d >= r1 + r2:
        return 0.0
    balls = ((0.0, r1), (d, r2))

    def inner(x0):
        amax = min(r1 - abs(x0), r2 - abs(x0 - d))
        if amax <= 0:
            return 0.0
        res = minimize_scalar(lambda a: -(a + 2 * max(_spheroid_b(x0, a, balls), 0.0)), bounds=(0.0, amax),
                              method="bounded", options={"xatol": 1e-12})
        return -float(res.fun)

    res = minimize_scalar(lambda x: -inner(x), bounds=(max(-r1, d - r2), min(r1, d + r2)), method="bounded",
                          options={"xatol": 1e-12})
    return -float(res.fun)


def overlap_vs_oracle(samples: int = 20, seed: int = 0) -> Check:
    t0 = time.perf_counter()
    rng = stream(seed, 0)
    errs, gaps = [], []
    for _ in range(samples):
        r1, r2 = rng.uniform(0.5, 1.5, 2)
        d = rng.uniform(abs(r1 - r2) + 0.05, r1 + r2 - 0.05)
        u = rng.standard_normal(3)
        u /= np.linalg.norm(u)
        c0 = rng.uniform(-1, 1, 3)
        rep = measure_overlap(Ellipsoid.ball(c0, r1), Ellipsoid.ball(c0 + d * u, r2))
        errs.append(abs(rep.value - lens_oracle(r1, r2, d)))
        gaps.append(rep.gap)
    same = measure_overlap(Ellipsoid.ball(np.zeros(3), 1.0), Ellipsoid.ball(np.zeros(3), 1.0))
    gaps.append(same.gap)
    elapsed = time.perf_counter() - t0
    ok = max(errs) <= 1e-3 and abs(same.value - 3.0) <= 1e-6 and max(gaps) <= 1e-6
    return Check("overlap-oracle", ok, {"max_error": max(errs), "identical_balls": same.value, "max_gap": max(gaps)},
                 {"max_error": 1e-3, "identical_balls": 3.0, "max_gap": 1e-6}, elapsed)


# ----------------------------------------------------------------------
# trust region

def tight_six(dim: int = 3) -> PackingProblem:
    specs = [AxisSpec((1.0, 0.7, 0.5))] * 6
    return PackingProblem(specs, Container.sphere(1.3, (0.0, 0.0, 0.0)))


def trust_region_contracts(seed: int = 0, max_iter: int = 60, samples: int = 10) -> Check:
    t0 = time.perf_counter()
    problem = tight_six()
    cfg = TrustRegionConfig(max_iter=max_iter)
    state = with_evaluation(init_state(problem.specs, problem.container, seed=seed), problem)
    rho, _ = cfg.radii(problem.container)
    lam_neg = bad_accept = 0
    run = longest = 0
    visited = [(state, rho)]
    for _ in range(max_iter):
        if state.evaluation.merit <= 0:
            break
        nxt, new_rho, acc, info = tr_iterate(state, rho, problem, cfg)
        lam_neg += info.Lambda < 0
        if acc:
            bad_accept += nxt.evaluation.merit > state.evaluation.merit - cfg.c1 * info.Lambda
            run = 0
            visited.append((nxt, new_rho))
        else:
            run += 1
            longest = max(longest, run)
        if info.Lambda <= cfg.tol1 * rho:
            break
        state, rho = nxt, new_rho
    pick = np.linspace(0, len(visited) - 1, samples).round().astype(int)
    mono = ratio = 0
    for k in pick:
        st, r = visited[k]
        if select_active_set(st.evaluation.values).size == 0:
            continue
        l1 = predicted_decrease_at(st, r, problem, cfg)
        l2 = predicted_decrease_at(st, 2 * r, problem, cfg)
        tol = 1e-7 * max(1.0, st.evaluation.merit)
        mono += l2 < l1 - tol
        ratio += l2 / (2 * r) > l1 / r + tol
    elapsed = time.perf_counter() - t0
    ok = lam_neg == 0 and bad_accept == 0 and longest <= 60 and mono == 0 and ratio == 0
    return Check("trust-region-contracts", ok,
                 {"negative_Lambda": lam_neg, "bad_accepts": bad_accept, "longest_rejection_run": longest,
                  "monotone_violations": mono, "ratio_violations": ratio, "sampled_states": len(pick),
                  "accepted_states": len(visited) - 1},
                 {"negative_Lambda": 0, "bad_accepts": 0, "longest_rejection_run": 60}, elapsed)


# ----------------------------------------------------------------------
# chromosome batches

def chromo_trends(trials: int = 20, seed: int = 0, workers: int = 1, shapes=("spherical", "ellipsoidal"),
                  variants=("plain", "penalty"),
                  cfg: TrustRegionConfig = TrustRegionConfig(), budget: float = 4 * 3600.0,
                  on_result=None) -> Check:
    t0 = time.perf_counter()
    measured, docs, ok = {}, {}, True
    for shape in shapes:
        base = scenario(f"medium-{shape}", trials=trials, seed=seed)
        runs = {"plain": (base, -1), "penalty": (with_penalty(base), 1)}
        for scn, want in (runs[v] for v in variants):
            stats, results = run_batch(scn, cfg, workers, on_result)
            key = f"{shape}{'-penalty' if scn.penalty else ''}"
            measured[f"{key}_slope"] = stats.slope
            ok &= math.copysign(1.0, stats.slope) == want and stats.slope != 0
            docs[f"{key}_stats.json"] = formats.dumps(stats.to_dict())
            docs[f"{key}_trials.json"] = formats.dumps([r.to_dict() for r in results])
    elapsed = time.perf_counter() - t0
    measured["seconds"] = elapsed
    ok &= elapsed <= budget
    return Check("chromosome-trends", bool(ok), measured,
                 {"no_penalty_slope": "< 0", "penalty_slope": "> 0", "seconds": budget}, elapsed, docs)


# ----------------------------------------------------------------------
# value function of the overlap program

def appendix_properties(samples: int = 50, seed: int = 0, radius: float = 0.05) -> Check:
    t0 = time.perf_counter()
    prog = overlap_family(3)
    ball = Ellipsoid.ball(np.zeros(3), 1.0)
    C0 = overlap_objective(ball, ball)
    probe = lipschitz_probe(prog, C0, radius, samples, seed)
    rng = stream(seed, 1)

    def near(scale):
        v = rng.standard_normal(C0.shape)
        return C0 + scale * radius * v / np.linalg.norm(v)

    seq = [C0 + (0.5 ** k) * (near(1.0) - C0) for k in range(12)]
    cont = solution_continuity_probe(prog, seq, C0)
    concave_bad = sub_bad = 0
    for _ in range(samples):
        C1, C2 = near(1.0), near(1.0)
        t1, X1 = value_and_solution(prog, C1)
        t2, _ = value_and_solution(prog, C2)
        tm, _ = value_and_solution(prog, 0.5 * (C1 + C2))
        concave_bad += tm < 0.5 * (t1 + t2) - 1e-7
        # the value is a minimum of linear functions, so X1 is a supergradient
        sub_bad += t2 > t1 + float(X1 @ (C2 - C1)) + 1e-7
    elapsed = time.perf_counter() - t0
    ok = probe.max_ratio <= probe.bound_beta and cont.final_residual <= 1e-6 and concave_bad == 0 and sub_bad == 0
    return Check("value-function-properties", ok,
                 {"max_ratio": probe.max_ratio, "bound_beta": probe.bound_beta,
                  "continuity_residual": cont.final_residual, "concavity_failures": concave_bad,
                  "supergradient_failures": sub_bad},
                 {"continuity_residual": 1e-6}, elapsed)
