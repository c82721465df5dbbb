"""Value function ``t(C) = min <C, X>`` of a standard-form program viewed as a
function of its objective, with sampled Lipschitz and continuity checks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import IndeterminateValueError, InvalidInputError
from .cones import ConeGeometry, ConeLayout
from .ipm import solve
from .program import ConicProgram, SolverOptions, Status

NEG_INF = -np.inf


def _check_standard(prog: ConicProgram) -> None:
    G = sp.csr_matrix(prog.G)
    m, n = G.shape
    if prog.sense != "min" or m != n or np.any(prog.h != 0) or (G + sp.identity(n)).count_nonzero():
        raise InvalidInputError("expected a standard-form minimization family (x in K, A x = b)")


def with_objective(prog: ConicProgram, C) -> ConicProgram:
    C = np.asarray(C, dtype=float).ravel()
    if C.size != prog.n:
        raise InvalidInputError(f"objective has length {C.size}, program has {prog.n} variables")
    return ConicProgram(C, prog.G, prog.h, prog.cones, prog.A, prog.b, prog.sense, prog.offset)


def value_and_solution(prog: ConicProgram, C, opts: SolverOptions | None = None):
    """``(t(C), X(C))``; ``X`` is None when the value is infinite.

    An unbounded program gives ``-inf``; an infeasible one ``+inf``.
    """
    sol = solve(with_objective(prog, C), opts)
    if sol.status == Status.OPTIMAL:
        return sol.objective_value, sol.primal
    if sol.status == Status.DUAL_INFEASIBLE:
        return NEG_INF, None
    if sol.status == Status.PRIMAL_INFEASIBLE:
        return np.inf, None
    raise IndeterminateValueError(f"solver stopped after {sol.iterations} iterations: {sol.message}", sol)


def value_function(prog: ConicProgram, C, opts: SolverOptions | None = None) -> float:
    return value_and_solution(prog, C, opts)[0]


def dual_interior_margin(prog: ConicProgram, C, cap: float = 1.0, opts: SolverOptions | None = None):
    """Largest ``s <= cap`` with ``C - A'y - s e`` in the cone, where ``e`` is the
    cone identity. Returns ``(s, y, S)``; ``s > 0`` means a strictly feasible dual."""
    _check_standard(prog)
    C = np.asarray(C, dtype=float).ravel()
    lay = prog.cones
    geom = ConeGeometry(lay)
    A = sp.csr_matrix(prog.A)
    p = A.shape[0]
    e = geom.identity
    G = sp.vstack([
        sp.hstack([A.T, sp.csr_matrix(e[:, None])]),
        sp.hstack([sp.csr_matrix((1, p)), sp.csr_matrix([[1.0]])]),
    ]).tocsr()
    h = np.r_[C, cap]
    cones = ConeLayout(lay.psd_block_dims, lay.soc_dims, lay.nonneg_count + 1)
    q = ConicProgram(np.r_[np.zeros(p), -1.0], G, h, cones)
    sol = solve(q, opts)
    if sol.status != Status.OPTIMAL:
        raise IndeterminateValueError(f"interior check ended with {sol.status.value}", sol)
    y, s = sol.primal[:p], sol.primal[p]
    return float(s), y, C - A.T @ y


@dataclass(frozen=True)
class LipschitzProbe:
    max_ratio: float
    bound_beta: float
    sigma: float
    norm_bound: float
    delta: float

    def __iter__(self):
        yield self.max_ratio
        yield self.bound_beta


def _ball_sample(rng, n: int, radius: float) -> np.ndarray:
    u = rng.standard_normal(n)
    return radius * rng.uniform() ** (1.0 / n) * u / np.linalg.norm(u)


def lipschitz_probe(prog: ConicProgram, C0, radius: float, samples: int, seed: int,
                    opts: SolverOptions | None = None) -> LipschitzProbe:
    """Sampled Lipschitz ratio of ``t`` on a ball around ``C0``.

    ``bound_beta`` is the largest ``|X(C)|_F`` seen over the samples and
    ``norm_bound`` the a-priori bound ``(2/sigma)(<X0, S0> + delta |X0|_F)``
    built from the strictly feasible dual slack ``S0`` (smallest eigenvalue
    ``sigma``) and ``X0 = X(C0)``; it applies for ``delta <= sigma / 2``.
    """
    from ..rng import stream

    C0 = np.asarray(C0, dtype=float).ravel()
    sigma, _, S0 = dual_interior_margin(prog, C0, opts=opts)
    if not sigma > 0:
        raise InvalidInputError("no strictly feasible dual point at C0")
    t0, X0 = value_and_solution(prog, C0, opts)
    if X0 is None:
        raise InvalidInputError("the program has no finite value at C0")
    delta = max(float(radius), 0.0)
    norm_bound = 2.0 / sigma * (float(S0 @ X0) + delta * float(np.linalg.norm(X0)))
    beta = float(np.linalg.norm(X0))
    if radius <= 0:
        return LipschitzProbe(0.0, beta, sigma, norm_bound, 0.0)
    rng = stream(seed, 0)
    ratio = 0.0
    for _ in range(int(samples)):
        C1 = C0 + _ball_sample(rng, C0.size, radius)
        C2 = C0 + _ball_sample(rng, C0.size, radius)
        t1, X1 = value_and_solution(prog, C1, opts)
        t2, X2 = value_and_solution(prog, C2, opts)
        if X1 is None or X2 is None:
            raise InvalidInputError("value became infinite inside the probe ball; shrink the radius")
        beta = max(beta, float(np.linalg.norm(X1)), float(np.linalg.norm(X2)))
        dist = float(np.linalg.norm(C1 - C2))
        if dist > 0:
            ratio = max(ratio, abs(t1 - t2) / dist)
    return LipschitzProbe(ratio, beta, sigma, norm_bound, delta)


@dataclass(frozen=True)
class ContinuityReport:
    values: np.ndarray
    norms: np.ndarray
    residuals: np.ndarray
    limit_value: float

    @property
    def final_residual(self) -> float:
        return float(self.residuals[-1])


def optimality_residual(prog: ConicProgram, C, X, t_C: float) -> float:
    """How far ``X`` is from solving the program with objective ``C``."""
    geom = ConeGeometry(prog.cones)
    feas = float(np.linalg.norm(sp.csr_matrix(prog.A) @ X - prog.b)) if prog.b.size else 0.0
    cone = max(0.0, -float(geom.min_eig(X[None])[0]))
    obj = abs(float(np.asarray(C) @ X) - t_C)
    return max(feas, cone, obj)


def solution_continuity_probe(prog: ConicProgram, C_sequence, C_limit=None,
                              opts: SolverOptions | None = None) -> ContinuityReport:
    """Solve along ``C_sequence`` and measure each solution against the limit
    program (objective ``C_limit``, by default the last element)."""
    _check_standard(prog)
    seq = [np.asarray(C, dtype=float).ravel() for C in C_sequence]
    if not seq:
        raise InvalidInputError("empty objective sequence")
    Cbar = seq[-1] if C_limit is None else np.asarray(C_limit, dtype=float).ravel()
    tbar, _ = value_and_solution(prog, Cbar, opts)
    vals, norms, res = [], [], []
    for C in seq:
        t, X = value_and_solution(prog, C, opts)
        vals.append(t)
        if X is None:
            norms.append(np.nan)
            res.append(np.inf)
            continue
        norms.append(float(np.linalg.norm(X)))
        res.append(optimality_residual(prog, Cbar, X, tbar))
    return ContinuityReport(np.array(vals), np.array(norms), np.array(res), float(tbar))
