"""Homogeneous self-dual interior-point method with Nesterov-Todd scaling.

The iteration is the Mehrotra predictor-corrector scheme applied to the
self-dual embedding of ``min c'x, Gx + s = h, Ax = b, s in K``. The Newton
systems are reduced to ``[[H, A'], [A, 0]]`` with ``H = (W^{-T}G)'(W^{-T}G)``
and solved either for a batch of small dense programs at once or for one
program with sparse ``G``.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import InvalidProgramError
from .cones import ConeGeometry
from .program import ConicProgram, ConicSolution, SolverOptions, Status


class _DenseKKT:
    """Reduced KKT systems for a batch of programs with dense data."""

    def __init__(self, G: np.ndarray, A: np.ndarray):
        self.Gc = np.swapaxes(G, -1, -2)  # columns of G as cone vectors, (B|1, n, m)
        self.A = A  # (B|1, p, n)
        self.n = G.shape[-1]
        self.p = A.shape[-2]

    def subset(self, act: np.ndarray) -> "_DenseKKT":
        out = object.__new__(_DenseKKT)
        out.Gc = self.Gc if self.Gc.shape[0] == 1 else self.Gc[act]
        out.A = self.A if self.A.shape[0] == 1 else self.A[act]
        out.n, out.p = self.n, self.p
        return out

    def factor(self, W) -> None:
        B = W.lam.shape[0]
        gc = np.broadcast_to(self.Gc, (B,) + self.Gc.shape[1:])
        self.Gt = W.apply(np.ascontiguousarray(gc), "Winvt")  # (B, n, m)
        H = self.Gt @ np.swapaxes(self.Gt, -1, -2)
        n, p = self.n, self.p
        K = np.zeros((B, n + p, n + p))
        K[:, :n, :n] = H
        if p:
            a = np.broadcast_to(self.A, (B, p, n))
            K[:, :n, n:] = np.swapaxes(a, -1, -2)
            K[:, n:, :n] = a
        scale = np.maximum(1.0, np.max(np.abs(np.diagonal(H, axis1=1, axis2=2)), axis=1))
        self.K = K
        self.reg = 1e-14 * scale
        self.W = W

    def solve(self, bx, by, bz):
        """Solve [[0, A', G'], [A, 0, 0], [G, 0, -W'W]] (x, y, z) = (bx, by, bz)."""
        W, n = self.W, self.n
        bzt = W.apply(bz, "Winvt")
        rhs = np.concatenate([bx + np.einsum("bnm,bm->bn", self.Gt, bzt), by], axis=1)
        try:
            sol = np.linalg.solve(self.K, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            K = self.K.copy()
            idx = np.arange(n)
            K[:, idx, idx] += self.reg[:, None] * 1e4
            if self.p:
                j = np.arange(n, n + self.p)
                K[:, j, j] -= self.reg[:, None] * 1e4
            sol = np.linalg.solve(K, rhs[..., None])[..., 0]
        x, y = sol[:, :n], sol[:, n:]
        zt = np.einsum("bnm,bn->bm", self.Gt, x) - bzt
        return x, y, W.apply(zt, "Winv")


class _SparseKKT:
    """Reduced KKT system for a single program with sparse data."""

    def __init__(self, G, A, dense_limit: int):
        self.G = sp.csr_matrix(G)
        self.A = sp.csr_matrix(A)
        self.n = G.shape[1]
        self.p = A.shape[0]
        self.m = G.shape[0]
        self.dense_limit = dense_limit

    def subset(self, act):
        return self

    def factor(self, W) -> None:
        r, c, v = W.winvt_blocks()
        Wm = sp.csr_matrix((v, (r, c)), shape=(self.m, self.m))
        self.Gt = (Wm @ self.G).tocsr()
        H = (self.Gt.T @ self.Gt).tocsr()
        K = sp.bmat([[H, self.A.T], [self.A, None]], format="csc")
        N = self.n + self.p
        self.W = W
        if N <= self.dense_limit:
            Kd = K.toarray()
            try:
                self.lu = ("dense", sla.lu_factor(Kd, check_finite=False))
            except (ValueError, np.linalg.LinAlgError):
                Kd[np.arange(self.n), np.arange(self.n)] += 1e-10
                self.lu = ("dense", sla.lu_factor(Kd, check_finite=False))
        else:
            # the matrix is symmetric; a symmetric fill-reducing order keeps the factors sparse
            kw = dict(permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.01, options=dict(SymmetricMode=True))
            try:
                self.lu = ("sparse", spla.splu(K, **kw))
            except RuntimeError:
                reg = sp.diags(np.r_[np.full(self.n, 1e-10), np.full(self.p, -1e-10)])
                self.lu = ("sparse", spla.splu((K + reg).tocsc(), **kw))

    def solve(self, bx, by, bz):
        W, n = self.W, self.n
        bzt = W.apply(bz, "Winvt")
        rhs = np.concatenate([bx[0] + self.Gt.T @ bzt[0], by[0]])
        kind, f = self.lu
        sol = sla.lu_solve(f, rhs, check_finite=False) if kind == "dense" else f.solve(rhs)
        x, y = sol[None, :n], sol[None, n:]
        zt = (self.Gt @ x[0])[None] - bzt
        return x, y, W.apply(zt, "Winv")


def _prune_equalities(A: np.ndarray, b: np.ndarray, tol: float = 1e-10):
    """Drop linearly dependent rows of A; report inconsistency per batch element.

    ``b`` has shape (B, p). Returns kept row indices and a boolean mask of
    batch elements whose dropped rows are inconsistent.
    """
    p = A.shape[0]
    if p == 0:
        return np.arange(0), np.zeros(b.shape[0], dtype=bool)
    q, r, piv = sla.qr(A.T, mode="economic", pivoting=True)
    dr = np.abs(np.diag(r))
    rank = int(np.sum(dr > tol * max(1.0, dr[0] if dr.size else 1.0)))
    keep = np.sort(piv[:rank])
    drop = np.setdiff1d(np.arange(p), keep)
    bad = np.zeros(b.shape[0], dtype=bool)
    if drop.size:
        coef, *_ = np.linalg.lstsq(A[keep].T, A[drop].T, rcond=None)
        resid = b[:, drop] - b[:, keep] @ coef
        bad = np.max(np.abs(resid), axis=1) > 1e-8 * np.maximum(1.0, np.max(np.abs(b), axis=1))
    return keep, bad


def hsd_solve(c, G, h, A, b, geom: ConeGeometry, opts: SolverOptions, sparse: bool):
    """Run the interior-point method on a batch of programs sharing G, A and cones.

    ``c`` (B, n), ``h`` (B, m), ``b`` (B, p). ``G`` is (m, n) sparse when
    ``sparse`` (then B must be 1) or dense (B|1, m, n); ``A`` likewise.
    Returns a list of raw result dicts in cvxopt sign convention
    (``G'z + A'y + c = 0``).
    """
    B, n = c.shape
    m = h.shape[1]
    deg = geom.degree
    e = geom.identity
    if sparse:
        Ad = A.toarray() if sp.issparse(A) else np.asarray(A)
    else:
        Ad = A[0] if A.ndim == 3 else A
    keep, bad = _prune_equalities(Ad, b)
    if sparse:
        A = sp.csr_matrix(A)[keep]
    else:
        A = (A if A.ndim == 3 else A[None])[:, keep]
    b = b[:, keep]
    p = b.shape[1]
    kkt = _SparseKKT(G, A, opts.dense_limit) if sparse else _DenseKKT(G if G.ndim == 3 else G[None], A)

    results: list = [None] * B
    for i in np.nonzero(bad)[0]:
        results[i] = dict(status=Status.PRIMAL_INFEASIBLE, x=np.zeros(n), y=np.zeros(p), z=np.zeros(m),
                          s=np.zeros(m), it=0, message="inconsistent equality constraints", keep=keep)

    act = np.nonzero(~bad)[0]
    if act.size == 0:
        return results
    def gmul(x, idx):
        if sparse:
            return (G @ x.T).T
        Gb = G if G.ndim == 2 else (G[0] if G.shape[0] == 1 else G[idx])
        if Gb.ndim == 2:
            return x @ Gb.T
        return np.einsum("bmn,bn->bm", Gb, x)

    def gtmul(z, idx):
        if sparse:
            return (G.T @ z.T).T
        Gb = G if G.ndim == 2 else (G[0] if G.shape[0] == 1 else G[idx])
        if Gb.ndim == 2:
            return z @ Gb
        return np.einsum("bmn,bm->bn", Gb, z)

    def amul(x, idx):
        if p == 0:
            return np.zeros((x.shape[0], 0))
        if sparse:
            return (A @ x.T).T
        Ab = A[0] if A.shape[0] == 1 else A[idx]
        return x @ Ab.T if Ab.ndim == 2 else np.einsum("bpn,bn->bp", Ab, x)

    def atmul(y, idx):
        if p == 0:
            return np.zeros((y.shape[0], n))
        if sparse:
            return (A.T @ y.T).T
        Ab = A[0] if A.shape[0] == 1 else A[idx]
        return y @ Ab if Ab.ndim == 2 else np.einsum("bpn,bp->bn", Ab, y)

    # ---- starting point
    cA, hA, bA = c[act], h[act], b[act]
    Bk = act.size
    k0 = kkt.subset(act)
    k0.factor(geom.identity_scaling(Bk))
    x, y, zz = k0.solve(np.zeros((Bk, n)), bA, hA)
    s = -zz
    _, _, z = k0.solve(-cA, np.zeros((Bk, p)), np.zeros((Bk, m)))

    def shift(v):
        t = -geom.min_eig(v)
        nv = np.linalg.norm(v, axis=1)
        need = t >= -1e-8 * np.maximum(nv, 1.0)
        return v + np.where(need, 1.0 + t, 0.0)[:, None] * e

    s = shift(s)
    z = shift(z)
    X = np.zeros((B, n)); Y = np.zeros((B, p)); Z = np.zeros((B, m)); S = np.zeros((B, m))
    TAU = np.ones(B); KAP = np.ones(B)
    X[act], Y[act], Z[act], S[act] = x, y, z, s

    nb = np.maximum(1.0, np.linalg.norm(b, axis=1))
    nc = np.maximum(1.0, np.linalg.norm(c, axis=1))
    nh = np.maximum(1.0, np.linalg.norm(h, axis=1))

    for it in range(opts.max_iter + 1):
        if act.size == 0:
            break
        x, y, z, s = X[act], Y[act], Z[act], S[act]
        tau, kap = TAU[act], KAP[act]
        cA, hA, bA = c[act], h[act], b[act]
        Gxv = gmul(x, act)
        Axv = amul(x, act)
        Aty = atmul(y, act)
        Gtz = gtmul(z, act)
        rx = Aty + Gtz + cA * tau[:, None]
        ry = -Axv + bA * tau[:, None]
        rz = s + Gxv - hA * tau[:, None]
        cx = np.sum(cA * x, 1)
        by_ = np.sum(bA * y, 1)
        hz = np.sum(hA * z, 1)
        rt = kap + cx + by_ + hz
        sz = np.sum(s * z, 1)
        mu = (sz + tau * kap) / (deg + 1)

        pres = np.maximum(np.linalg.norm(ry, axis=1) / nb[act], np.linalg.norm(rz, axis=1) / nh[act]) / tau
        dres = np.linalg.norm(rx, axis=1) / nc[act] / tau
        pcost = cx / tau
        dcost = -(by_ + hz) / tau
        gap = sz / tau ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            relgap = np.where(pcost < 0, gap / -pcost, np.where(dcost > 0, gap / dcost, np.inf))
        done_opt = (pres <= opts.feas_tol) & (dres <= opts.feas_tol) & (
            (gap <= opts.gap_tol) | (relgap <= opts.rel_gap_tol))
        with np.errstate(divide="ignore", invalid="ignore"):
            pinf_res = np.linalg.norm(Aty + Gtz, axis=1) / nc[act] / np.maximum(-(hz + by_), 1e-300)
            dinf_res = np.maximum(np.linalg.norm(Axv, axis=1) / nb[act],
                                  np.linalg.norm(Gxv + s, axis=1) / nh[act]) / np.maximum(-cx, 1e-300)
        done_pinf = ~done_opt & (hz + by_ < 0) & (pinf_res <= opts.feas_tol)
        done_dinf = ~done_opt & ~done_pinf & (cx < 0) & (dinf_res <= opts.feas_tol)
        bad_num = ~np.all(np.isfinite(np.c_[x, z, s, tau, kap]), axis=1)
        last = it == opts.max_iter
        finish = done_opt | done_pinf | done_dinf | bad_num | last
        for j in np.nonzero(finish)[0]:
            i = act[j]
            if done_opt[j]:
                st, msg = Status.OPTIMAL, ""
            elif done_pinf[j]:
                st, msg = Status.PRIMAL_INFEASIBLE, ""
            elif done_dinf[j]:
                st, msg = Status.DUAL_INFEASIBLE, ""
            else:
                st = Status.MAX_ITERATIONS
                msg = "numerical breakdown" if bad_num[j] else "iteration limit reached"
            results[i] = dict(status=st, x=x[j], y=y[j], z=z[j], s=s[j], tau=tau[j], kap=kap[j],
                              it=it, pres=pres[j], dres=dres[j], gap=gap[j], pcost=pcost[j],
                              dcost=dcost[j], hz_by=hz[j] + by_[j], cx=cx[j], message=msg, keep=keep)
        keepmask = ~finish
        if not np.any(keepmask):
            break
        sel = np.nonzero(keepmask)[0]
        act = act[sel]
        x, y, z, s, tau, kap = x[sel], y[sel], z[sel], s[sel], tau[sel], kap[sel]
        rx, ry, rz, rt, mu = rx[sel], ry[sel], rz[sel], rt[sel], mu[sel]
        cA, hA, bA = cA[sel], hA[sel], bA[sel]

        # ---- Newton step
        failed = np.zeros(act.size, dtype=bool)
        try:
            W = geom.nt_scaling(s, z)
            k1 = kkt.subset(act)
            k1.factor(W)
        except np.linalg.LinAlgError:
            failed[:] = True
        if failed.any():
            for j, i in enumerate(act):
                results[i] = dict(status=Status.MAX_ITERATIONS, x=x[j], y=y[j], z=z[j], s=s[j],
                                  tau=tau[j], kap=kap[j], it=it, pres=np.inf, dres=np.inf, gap=np.inf,
                                  pcost=np.nan, dcost=np.nan, hz_by=np.nan, cx=np.nan,
                                  message="scaling breakdown", keep=keep)
            break
        lam = W.lam

        def ksolve(bx, by, bz):
            # one round of iterative refinement on the unreduced system
            sx, sy, sz_ = k1.solve(bx, by, bz)
            r1 = bx - atmul(sy, act) - gtmul(sz_, act)
            r2 = by - amul(sx, act)
            r3 = bz - gmul(sx, act) + W.apply(W.apply(sz_, "W"), "Wt")
            ex_, ey_, ez_ = k1.solve(r1, r2, r3)
            return sx + ex_, sy + ey_, sz_ + ez_

        x1, y1, z1 = ksolve(-cA, bA, hA)
        den = -kap / tau + np.sum(cA * x1, 1) + np.sum(bA * y1, 1) + np.sum(hA * z1, 1)

        def direction(rs, rk, sig):
            u = W.lam_div(rs)
            wtu = W.apply(u, "Wt")
            x0, y0, z0 = ksolve(-(1 - sig)[:, None] * rx, (1 - sig)[:, None] * ry,
                                  -(1 - sig)[:, None] * rz - wtu)
            dtau = (-(1 - sig) * rt - rk / tau - np.sum(cA * x0, 1) - np.sum(bA * y0, 1)
                    - np.sum(hA * z0, 1)) / den
            dx = x0 + dtau[:, None] * x1
            dy = y0 + dtau[:, None] * y1
            dz = z0 + dtau[:, None] * z1
            dkap = (rk - kap * dtau) / tau
            dzt = W.apply(dz, "W")
            # slack step from the linearized primal equation keeps rz exact
            ds = -(1 - sig)[:, None] * rz - gmul(dx, act) + dtau[:, None] * hA
            dst = W.apply(ds, "Winvt")
            return dx, dy, dz, ds, dst, dzt, dtau, dkap

        def steplen(dst, dzt, dtau, dkap):
            a = np.minimum(geom.max_step(lam, dst), geom.max_step(lam, dzt))
            with np.errstate(divide="ignore", invalid="ignore"):
                a = np.minimum(a, np.where(dtau < 0, -tau / dtau, np.inf))
                a = np.minimum(a, np.where(dkap < 0, -kap / dkap, np.inf))
            return a

        zero = np.zeros(act.size)
        ll = geom.jordan_prod(lam, lam)
        dxa, dya, dza, dsa, dsta, dzta, dtaua, dkapa = direction(-ll, -tau * kap, zero)
        aa = np.minimum(1.0, steplen(dsta, dzta, dtaua, dkapa))
        sig = (1.0 - aa) ** 3
        rs = -ll - geom.jordan_prod(dsta, dzta) + (sig * mu)[:, None] * e
        rk = -tau * kap - dtaua * dkapa + sig * mu
        dx, dy, dz, ds, dst, dzt, dtau, dkap = direction(rs, rk, sig)
        a = np.minimum(1.0, opts.step_fraction * steplen(dst, dzt, dtau, dkap))
        X[act] = x + a[:, None] * dx
        Y[act] = y + a[:, None] * dy
        Z[act] = z + a[:, None] * dz
        S[act] = s + a[:, None] * ds
        TAU[act] = tau + a * dtau
        KAP[act] = kap + a * dkap
    return results


def _finish(prog: ConicProgram, raw: dict, flip: float) -> ConicSolution:
    n, p, m = prog.n, prog.b.size, prog.h.size
    keep = raw["keep"]
    st = raw["status"]
    yfull = np.zeros(p)
    if st == Status.OPTIMAL or st == Status.MAX_ITERATIONS:
        tau = raw.get("tau", 1.0)
        x, z, s = raw["x"] / tau, raw["z"] / tau, raw["s"] / tau
        yfull[keep] = -raw["y"] / tau
        pval = flip * raw.get("pcost", np.nan) + prog.offset
        dval = flip * raw.get("dcost", np.nan) + prog.offset
        gap = raw.get("gap", np.inf)
    elif st == Status.PRIMAL_INFEASIBLE:
        scale = -raw.get("hz_by", -1.0)
        scale = scale if scale > 0 else 1.0
        x, s = np.full(n, np.nan), np.full(m, np.nan)
        z = raw["z"] / scale
        yfull[keep] = -raw["y"] / scale
        pval = flip * np.inf
        dval = pval
        gap = np.nan
    else:
        scale = -raw.get("cx", -1.0)
        scale = scale if scale > 0 else 1.0
        x, s = raw["x"] / scale, raw["s"] / scale
        z = np.full(m, np.nan)
        yfull[:] = np.nan
        pval = -flip * np.inf
        dval = pval
        gap = np.nan
    return ConicSolution(st, x, yfull, z, s, float(pval), float(dval), float(gap),
                         float(raw.get("pres", np.nan)), float(raw.get("dres", np.nan)),
                         int(raw["it"]), raw.get("message", ""))


def solve(prog: ConicProgram, opts: SolverOptions | None = None) -> ConicSolution:
    """Solve one conic program."""
    opts = opts or SolverOptions()
    geom = ConeGeometry(prog.cones)
    flip = -1.0 if prog.sense == "max" else 1.0
    c = flip * prog.c
    if prog.n * prog.h.size <= 20000:
        G = prog.G.toarray() if sp.issparse(prog.G) else np.asarray(prog.G, dtype=float)
        A = prog.A.toarray() if sp.issparse(prog.A) else np.asarray(prog.A, dtype=float)
        raw = hsd_solve(c[None], G, prog.h[None], A, prog.b[None], geom, opts, sparse=False)[0]
    else:
        raw = hsd_solve(c[None], sp.csr_matrix(prog.G), prog.h[None], sp.csr_matrix(prog.A),
                        prog.b[None], geom, opts, sparse=True)[0]
    return _finish(prog, raw, flip)


def solve_many(prog: ConicProgram, h_batch: np.ndarray, opts: SolverOptions | None = None) -> list[ConicSolution]:
    """Solve copies of ``prog`` that differ only in ``h`` (one row per copy)."""
    opts = opts or SolverOptions()
    h_batch = np.atleast_2d(np.asarray(h_batch, dtype=float))
    if h_batch.shape[1] != prog.h.size:
        raise InvalidProgramError("h_batch has the wrong width")
    geom = ConeGeometry(prog.cones)
    flip = -1.0 if prog.sense == "max" else 1.0
    B = h_batch.shape[0]
    if B == 0:
        return []
    G = prog.G.toarray() if sp.issparse(prog.G) else np.asarray(prog.G, dtype=float)
    A = prog.A.toarray() if sp.issparse(prog.A) else np.asarray(prog.A, dtype=float)
    c = np.broadcast_to(flip * prog.c, (B, prog.n)).copy()
    b = np.broadcast_to(prog.b, (B, prog.b.size)).copy()
    raws = hsd_solve(c, G, h_batch, A, b, geom, opts, sparse=False)
    out = []
    for i, raw in enumerate(raws):
        pr = ConicProgram(prog.c, prog.G, h_batch[i], prog.cones, prog.A, prog.b, prog.sense, prog.offset)
        out.append(_finish(pr, raw, flip))
    return out
