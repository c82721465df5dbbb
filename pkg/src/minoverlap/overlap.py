"""Pairwise overlap of ellipsoids.

The overlap of two ellipsoids is the largest trace (sum of semi-axes) of an
ellipsoid inscribed in their intersection. It is computed by a small SDP
whose dual multipliers give an affine upper model of the overlap as a
function of the two centers and shape matrices.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .conic import ConeLayout, ConicProgram, SolverOptions, Status, solve_many
from .errors import InvalidInputError, MeasurementError, NumericalError
from .geometry import Ellipsoid
from .matcore import smat, svec, svec_dim

TOUCH_TOL = 1e-9


class Contact(str, Enum):
    DISJOINT = "Disjoint"
    TOUCHING = "Touching"
    OVERLAPPING = "Overlapping"


@dataclass(frozen=True)
class IntersectResult:
    contact: Contact
    value: float  # min over x of the larger of the two normalized quadratic forms
    witness: np.ndarray


def sphere_overlap(r_a: float, r_b: float, c_a, c_b) -> float:
    """Diameter of the largest ball inside the intersection of two balls."""
    if r_a <= 0 or r_b <= 0:
        raise InvalidInputError("radii must be positive")
    return max(0.0, r_a + r_b - float(np.linalg.norm(np.asarray(c_a, float) - np.asarray(c_b, float))))


def _contact_values(ca, Sa, cb, Sb, max_iter: int = 100):
    """Vectorized ``min_x max(q_a(x), q_b(x))`` for stacks of ellipsoid pairs.

    Uses the concave one-dimensional dual
    ``F(t) = t (1-t) d' [(1-t) Sa + t Sb]^{-1} d`` maximized over t in [0, 1]
    by safeguarded Newton steps. Returns values, maximizers and witnesses.
    """
    B = ca.shape[0]
    d = cb - ca
    D = Sb - Sa
    lo = np.zeros(B)
    hi = np.ones(B)
    t = np.full(B, 0.5)
    conv = np.linalg.norm(d, axis=1) == 0
    for _ in range(max_iter):
        M = (1 - t)[:, None, None] * Sa + t[:, None, None] * Sb
        u = np.linalg.solve(M, d[..., None])[..., 0]
        h0 = np.sum(d * u, 1)
        Du = np.einsum("bij,bj->bi", D, u)
        h1 = -np.sum(u * Du, 1)
        h2 = 2.0 * np.sum(Du * np.linalg.solve(M, Du[..., None])[..., 0], 1)
        f1 = (1 - 2 * t) * h0 + t * (1 - t) * h1
        f2 = -2 * h0 + 2 * (1 - 2 * t) * h1 + t * (1 - t) * h2
        lo = np.where(f1 > 0, t, lo)
        hi = np.where(f1 <= 0, t, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            tn = t - f1 / f2
        bad = ~np.isfinite(tn) | (tn <= lo) | (tn >= hi) | (f2 >= 0)
        tn = np.where(bad, 0.5 * (lo + hi), tn)
        step = np.abs(tn - t)
        conv |= (np.abs(f1) <= 1e-15 * np.maximum(1.0, h0)) | (step <= 1e-15) | (hi - lo <= 1e-15)
        t = np.where(conv, t, tn)
        if np.all(conv):
            break
    else:
        raise NumericalError("contact-function iteration did not converge")
    M = (1 - t)[:, None, None] * Sa + t[:, None, None] * Sb
    u = np.linalg.solve(M, d[..., None])[..., 0]
    val = t * (1 - t) * np.sum(d * u, 1)
    wit = ca + (1 - t)[:, None] * np.einsum("bij,bj->bi", Sa, u)
    return val, t, wit


def _classify(v: float) -> Contact:
    if v < 1.0 - TOUCH_TOL:
        return Contact.OVERLAPPING
    if v > 1.0 + TOUCH_TOL:
        return Contact.DISJOINT
    return Contact.TOUCHING


def intersect_test(a: Ellipsoid, b: Ellipsoid, max_iter: int = 100) -> IntersectResult:
    """Decide whether two ellipsoids are disjoint, touching or overlapping."""
    if a.dim != b.dim:
        raise InvalidInputError("dimension mismatch")
    val, _, wit = _contact_values(a.center[None], a.Sigma[None], b.center[None], b.Sigma[None], max_iter)
    return IntersectResult(_classify(float(val[0])), float(val[0]), wit[0])


def contact_many(centers: np.ndarray, sigmas: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    """Contact values for index pairs; values below one mean overlap.

    Pairs whose bounding balls are apart get ``inf`` without iteration.
    """
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    out = np.full(len(pairs), np.inf)
    if len(pairs) == 0:
        return out
    rmax = np.sqrt(np.linalg.eigvalsh(sigmas)[:, -1])
    i, j = pairs[:, 0], pairs[:, 1]
    dist = np.linalg.norm(centers[i] - centers[j], axis=1)
    near = dist <= (rmax[i] + rmax[j]) * (1 + 1e-12)
    if np.any(near):
        k = np.nonzero(near)[0]
        out[k] = _contact_values(centers[i[k]], sigmas[i[k]], centers[j[k]], sigmas[j[k]])[0]
    return out


# ----------------------------------------------------------------------
@dataclass(frozen=True)
class DualBlocks:
    """Blocks of the two dual matrices ``M_k = [[R, r, P], [r', p, q'], [P', q, Q]]`` and ``T``."""

    M1: np.ndarray
    M2: np.ndarray
    T: np.ndarray

    @property
    def dim(self) -> int:
        return self.T.shape[0]

    def parts(self, k: int):
        """``(R, r, P, p, q, Q)`` of side ``k`` (1 or 2)."""
        M = self.M1 if k == 1 else self.M2
        n = self.dim
        return (M[:n, :n], M[:n, n], M[:n, n + 1:], M[n, n], M[n, n + 1:], M[n + 1:, n + 1:])

    def residuals(self) -> dict:
        """Violations of the dual feasibility conditions."""
        R1, _, P1, p1, q1, _ = self.parts(1)
        R2, _, P2, p2, q2, _ = self.parts(2)
        n = self.dim
        sym = lambda X: 0.5 * (X + X.T)
        return {
            "stationarity_S": float(np.abs(np.eye(n) + self.T - 2 * sym(P1) - 2 * sym(P2)).max()),
            "trace_1": float(abs(np.trace(R1) - p1)),
            "trace_2": float(abs(np.trace(R2) - p2)),
            "center": float(np.abs(q1 + q2).max()),
            "psd_1": float(-min(0.0, np.linalg.eigvalsh(self.M1)[0])),
            "psd_2": float(-min(0.0, np.linalg.eigvalsh(self.M2)[0])),
            "psd_T": float(-min(0.0, np.linalg.eigvalsh(self.T)[0])),
        }


def linearized_overlap(duals: DualBlocks, c_i, c_j, Sigma_i, Sigma_j) -> float:
    """Affine upper model of the overlap, evaluated at new pair parameters."""
    _, _, _, p1, q1, Q1 = duals.parts(1)
    _, _, _, p2, q2, Q2 = duals.parts(2)
    return float(p1 + p2 + 2 * q1 @ np.asarray(c_i) + 2 * q2 @ np.asarray(c_j)
                 + np.sum(Q1 * Sigma_i) + np.sum(Q2 * Sigma_j))


@dataclass(frozen=True)
class OverlapReport:
    value: float
    overlapping: bool
    duals: DualBlocks | None = None
    inscribed: Ellipsoid | None = None
    gap: float = 0.0
    status: str = "NoOverlap"
    contact: float = np.inf

    @property
    def no_overlap(self) -> bool:
        return not self.overlapping


@lru_cache(maxsize=None)
def overlap_program(dim: int) -> ConicProgram:
    """Max-trace inscribed ellipsoid program with placeholder pair data.

    Variables are ``(svec S, c, lam1, lam2)``; slack blocks are the two
    containment LMIs followed by ``S >= 0``. Only ``h`` depends on the pair.
    """
    n = dim
    t = svec_dim(n)
    N = 2 * n + 1
    tN = svec_dim(N)
    nv = t + n + 2
    cols = []
    basis = smat(np.eye(t), n)
    for k in range(t):
        M = np.zeros((N, N))
        M[:n, n + 1:] = -basis[k]
        M[n + 1:, :n] = -basis[k]
        cols.append((M, M, basis[k]))
    for k in range(n):
        M = np.zeros((N, N))
        M[n, n + 1 + k] = M[n + 1 + k, n] = -1.0
        cols.append((M, M, np.zeros((n, n))))
    L = np.zeros((N, N))
    L[:n, :n] = np.eye(n)
    L[n, n] = -1.0
    Z = np.zeros((N, N))
    cols.append((L, Z, np.zeros((n, n))))
    cols.append((Z, L, np.zeros((n, n))))
    G = np.zeros((2 * tN + t, nv))
    for j, (m1, m2, m3) in enumerate(cols):
        G[:, j] = -np.r_[svec(m1), svec(m2), svec(m3)]
    c = np.r_[svec(np.eye(n)), np.zeros(n + 2)]
    lay = ConeLayout((N, N, n))
    return ConicProgram(c, G, np.zeros(2 * tN + t), lay, sense="max")


def _side_const(center: np.ndarray, Sigma: np.ndarray) -> np.ndarray:
    """svec of [[0, 0, 0], [0, 1, c'], [0, c, Sigma]] for stacked inputs."""
    B, n = center.shape
    N = 2 * n + 1
    K = np.zeros((B, N, N))
    K[:, n, n] = 1.0
    K[:, n, n + 1:] = center
    K[:, n + 1:, n] = center
    K[:, n + 1:, n + 1:] = Sigma
    return svec(K)


def overlap_h(ca, Sa, cb, Sb) -> np.ndarray:
    B, n = ca.shape
    return np.concatenate([_side_const(ca, Sa), _side_const(cb, Sb), np.zeros((B, svec_dim(n)))], axis=1)


def _solve_pairs(ca, Sa, cb, Sb, opts: SolverOptions):
    n = ca.shape[1]
    prog = overlap_program(n)
    sols = solve_many(prog, overlap_h(ca, Sa, cb, Sb), opts)
    t = svec_dim(n)
    tN = svec_dim(2 * n + 1)
    out = []
    for k, sol in enumerate(sols):
        if sol.status != Status.OPTIMAL:
            out.append((sol, None, None))
            continue
        z = sol.dual_slack
        duals = DualBlocks(smat(z[:tN], 2 * n + 1), smat(z[tN:2 * tN], 2 * n + 1), smat(z[2 * tN:], n))
        x = sol.primal
        S = smat(x[:t], n)
        w, q = np.linalg.eigh(S)
        S_pd = (q * np.maximum(w, 1e-300)) @ q.T
        try:
            insc = Ellipsoid(x[t:t + n], S_pd)
        except InvalidInputError:
            insc = None
        out.append((sol, duals, insc))
    return out


DEFAULT_OPTS = SolverOptions(feas_tol=1e-9, gap_tol=1e-10, rel_gap_tol=1e-10)


def measure_overlap(a: Ellipsoid, b: Ellipsoid, opts: SolverOptions | None = None) -> OverlapReport:
    """Overlap value, dual blocks and inscribed ellipsoid for one pair."""
    return measure_overlaps(np.array([a.center, b.center]), np.array([a.Sigma, b.Sigma]),
                            np.array([[0, 1]]), opts, strict=True)[0]


def measure_overlaps(centers, sigmas, pairs, opts: SolverOptions | None = None,
                     contact: np.ndarray | None = None, strict: bool = True) -> list[OverlapReport]:
    """Overlap reports for many index pairs, solving all SDPs as one batch."""
    centers = np.asarray(centers, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    if centers.shape[1] != sigmas.shape[1]:
        raise InvalidInputError("dimension mismatch")
    opts = opts or DEFAULT_OPTS
    if contact is None:
        contact = contact_many(centers, sigmas, pairs)
    reports: list = [None] * len(pairs)
    hit = np.nonzero(contact < 1.0 - TOUCH_TOL)[0]
    for k in np.setdiff1d(np.arange(len(pairs)), hit):
        reports[k] = OverlapReport(0.0, False, contact=float(contact[k]))
    if hit.size:
        i, j = pairs[hit, 0], pairs[hit, 1]
        res = _solve_pairs(centers[i], sigmas[i], centers[j], sigmas[j], opts)
        for k, (sol, duals, insc) in zip(hit, res):
            if duals is None:
                rep = OverlapReport(max(0.0, sol.objective_value) if np.isfinite(sol.objective_value) else 0.0,
                                    True, None, None, np.inf, sol.status.value, float(contact[k]))
                if strict:
                    raise MeasurementError(f"overlap SDP for pair {tuple(pairs[k])} ended with {sol.status.value}", rep)
                reports[k] = rep
                continue
            val = max(0.0, sol.objective_value)
            gap = abs(sol.objective_value - sol.dual_value)
            reports[k] = OverlapReport(val, True, duals, insc, gap, "Optimal", float(contact[k]))
    return reports


def overlap_family(dim: int) -> ConicProgram:
    """Standard-form dual of the overlap program: ``min <C, Z>`` over the three
    PSD blocks with ``G' Z = trace weights``. Its objective ``C`` is
    ``overlap_objective`` of a pair, and its value equals the overlap."""
    prog = overlap_program(dim)
    G = np.asarray(prog.G)
    return ConicProgram.standard(prog.cones, np.zeros(G.shape[0]), list(zip(G.T, prog.c)))


def overlap_objective(a: Ellipsoid, b: Ellipsoid) -> np.ndarray:
    return overlap_h(a.center[None], a.Sigma[None], b.center[None], b.Sigma[None])[0]
