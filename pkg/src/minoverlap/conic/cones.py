"""Cone algebra for the interior-point solver.

A cone vector is laid out as ``[psd blocks (svec) | soc blocks | nonneg]``.
All routines work on arrays of shape ``(B, ..., m)`` so that a batch of
same-structure programs can be advanced together; blocks of equal size are
grouped and processed with stacked numpy calls.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..matcore import smat, svec, svec_dim, svec_index


@dataclass(frozen=True)
class ConeLayout:
    """Block structure of a cone program's variables or slacks.

    ``free_count`` is only used by standard-form programs, where it counts
    unconstrained variables appended after the cone part.
    """

    psd_block_dims: tuple[int, ...] = ()
    soc_dims: tuple[int, ...] = ()
    nonneg_count: int = 0
    free_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "psd_block_dims", tuple(int(d) for d in self.psd_block_dims))
        object.__setattr__(self, "soc_dims", tuple(int(k) for k in self.soc_dims))
        if any(d < 1 for d in self.psd_block_dims) or any(k < 1 for k in self.soc_dims):
            raise ValueError("block dimensions must be positive")
        if self.nonneg_count < 0 or self.free_count < 0:
            raise ValueError("counts must be nonnegative")

    @property
    def cone_dim(self) -> int:
        return sum(svec_dim(d) for d in self.psd_block_dims) + sum(self.soc_dims) + self.nonneg_count

    @property
    def total_dim(self) -> int:
        return self.cone_dim + self.free_count

    @property
    def degree(self) -> int:
        return sum(self.psd_block_dims) + len(self.soc_dims) + self.nonneg_count

    def cone_only(self) -> "ConeLayout":
        return ConeLayout(self.psd_block_dims, self.soc_dims, self.nonneg_count, 0)


class ConeGeometry:
    """Index bookkeeping for a layout, with blocks grouped by size."""

    def __init__(self, layout: ConeLayout):
        self.layout = layout
        self.m = layout.cone_dim
        self.degree = layout.degree
        off = 0
        psd_starts: dict[int, list[int]] = {}
        for d in layout.psd_block_dims:
            psd_starts.setdefault(d, []).append(off)
            off += svec_dim(d)
        soc_starts: dict[int, list[int]] = {}
        for k in layout.soc_dims:
            soc_starts.setdefault(k, []).append(off)
            off += k
        self.nn = np.arange(off, off + layout.nonneg_count)
        self.psd_groups = [
            (d, np.array(st)[:, None] + np.arange(svec_dim(d))) for d, st in sorted(psd_starts.items())
        ]
        self.soc_groups = [(k, np.array(st)[:, None] + np.arange(k)) for k, st in sorted(soc_starts.items())]
        e = np.zeros(self.m)
        e[self.nn] = 1.0
        for k, idx in self.soc_groups:
            e[idx[:, 0]] = 1.0
        for d, idx in self.psd_groups:
            e[idx] = svec(np.eye(d))
        self.identity = e

    # ------------------------------------------------------------------
    def jordan_prod(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.empty(np.broadcast_shapes(u.shape, v.shape))
        out[..., self.nn] = u[..., self.nn] * v[..., self.nn]
        for k, idx in self.soc_groups:
            a, b = u[..., idx], v[..., idx]
            r = np.empty(np.broadcast_shapes(a.shape, b.shape))
            r[..., 0] = np.sum(a * b, axis=-1)
            r[..., 1:] = a[..., :1] * b[..., 1:] + b[..., :1] * a[..., 1:]
            out[..., idx] = r
        for d, idx in self.psd_groups:
            a, b = smat(u[..., idx], d), smat(v[..., idx], d)
            ab = a @ b
            out[..., idx] = svec(0.5 * (ab + np.swapaxes(ab, -1, -2)))
        return out

    def min_eig(self, v: np.ndarray) -> np.ndarray:
        """Smallest Jordan eigenvalue over all blocks, per leading index."""
        vals = [np.full(v.shape[:-1], np.inf)]
        if len(self.nn):
            vals.append(np.min(v[..., self.nn], axis=-1))
        for k, idx in self.soc_groups:
            b = v[..., idx]
            vals.append(np.min(b[..., 0] - np.linalg.norm(b[..., 1:], axis=-1), axis=-1))
        for d, idx in self.psd_groups:
            vals.append(np.min(np.linalg.eigvalsh(smat(v[..., idx], d))[..., 0], axis=-1))
        return np.min(np.stack(vals), axis=0)

    def max_step(self, v: np.ndarray, dv: np.ndarray) -> np.ndarray:
        """Largest ``a >= 0`` with ``v + a*dv`` in the cone, for interior ``v``."""
        shape = v.shape[:-1]
        best = np.full(shape, np.inf)
        if len(self.nn):
            a, da = v[..., self.nn], dv[..., self.nn]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(da < 0, -a / np.where(da < 0, da, -1.0), np.inf)
            best = np.minimum(best, np.min(ratio, axis=-1))
        for k, idx in self.soc_groups:
            best = np.minimum(best, np.min(_soc_max_step(v[..., idx], dv[..., idx]), axis=-1))
        for d, idx in self.psd_groups:
            vm, dm = smat(v[..., idx], d), smat(dv[..., idx], d)
            lc = np.linalg.cholesky(vm)
            li = np.linalg.inv(lc)
            mm = li @ dm @ np.swapaxes(li, -1, -2)
            lo = np.linalg.eigvalsh(0.5 * (mm + np.swapaxes(mm, -1, -2)))[..., 0]
            with np.errstate(divide="ignore"):
                step = np.where(lo < 0, -1.0 / np.where(lo < 0, lo, -1.0), np.inf)
            best = np.minimum(best, np.min(step, axis=-1))
        return best

    def nt_scaling(self, s: np.ndarray, z: np.ndarray) -> "Scaling":
        """Nesterov-Todd scaling of an interior pair ``(s, z)`` of shape (B, m)."""
        lam = np.empty_like(s)
        nn_w = np.sqrt(s[:, self.nn] / z[:, self.nn])
        lam[:, self.nn] = np.sqrt(s[:, self.nn] * z[:, self.nn])
        soc = []
        for k, idx in self.soc_groups:
            sb, zb = s[:, idx], z[:, idx]
            sn = _jnorm(sb)
            zn = _jnorm(zb)
            sbar = sb / sn[..., None]
            zbar = zb / zn[..., None]
            gamma = np.sqrt(0.5 * (1.0 + np.sum(sbar * zbar, axis=-1)))
            jz = zbar.copy()
            jz[..., 1:] *= -1.0
            # NT point of the normalized pair; the scaling uses its Jordan square root
            wnt = (sbar + jz) / (2.0 * gamma[..., None])
            wbar = np.empty_like(wnt)
            wbar[..., 0] = np.sqrt(0.5 * (wnt[..., 0] + 1.0))
            wbar[..., 1:] = wnt[..., 1:] / (2.0 * wbar[..., :1])
            beta = np.sqrt(sn / zn)
            soc.append((beta, wbar))
            lam[:, idx] = _soc_apply(beta, wbar, zb, "W")
        psd = []
        for d, idx in self.psd_groups:
            sm, zm = smat(s[:, idx], d), smat(z[:, idx], d)
            ls = np.linalg.cholesky(sm)
            lz = np.linalg.cholesky(zm)
            u, sv, vt = np.linalg.svd(np.swapaxes(lz, -1, -2) @ ls)
            isq = 1.0 / np.sqrt(sv)
            r = (ls @ np.swapaxes(vt, -1, -2)) * isq[..., None, :]
            rinv = isq[..., :, None] * (np.swapaxes(u, -1, -2) @ np.swapaxes(lz, -1, -2))
            psd.append((r, rinv, sv))
            lam[:, idx] = svec(sv[..., :, None] * np.eye(d))
        return Scaling(self, nn_w, soc, psd, lam)

    def identity_scaling(self, batch: int) -> "Scaling":
        nn_w = np.ones((batch, len(self.nn)))
        soc = []
        for k, idx in self.soc_groups:
            wbar = np.zeros((batch, idx.shape[0], k))
            wbar[..., 0] = 1.0
            soc.append((np.ones((batch, idx.shape[0])), wbar))
        psd = []
        for d, idx in self.psd_groups:
            eye = np.broadcast_to(np.eye(d), (batch, idx.shape[0], d, d)).copy()
            psd.append((eye, eye.copy(), np.ones((batch, idx.shape[0], d))))
        lam = np.broadcast_to(self.identity, (batch, self.m)).copy()
        return Scaling(self, nn_w, soc, psd, lam)


def _jnorm(b: np.ndarray) -> np.ndarray:
    """sqrt(b0^2 - |b1|^2), computed as a product to limit cancellation."""
    n1 = np.linalg.norm(b[..., 1:], axis=-1)
    return np.sqrt(np.maximum((b[..., 0] - n1) * (b[..., 0] + n1), 1e-300))


def _soc_apply(beta, wbar, v, mode):
    """Apply the symmetric SOC scaling ``beta*(2 w w' - J)`` or its inverse."""
    if mode in ("W", "Wt"):
        wv = np.sum(wbar * v, axis=-1)
        jv = v.copy()
        jv[..., 0] *= -1.0
        return beta[..., None] * (2.0 * wbar * wv[..., None] + jv)
    jw = wbar.copy()
    jw[..., 1:] *= -1.0
    jwv = np.sum(jw * v, axis=-1)
    jv = v.copy()
    jv[..., 0] *= -1.0
    return (2.0 * jw * jwv[..., None] + jv) / beta[..., None]


def _soc_max_step(v: np.ndarray, dv: np.ndarray) -> np.ndarray:
    """Smallest positive root of (v0+a dv0)^2 - |v1 + a dv1|^2, or inf."""
    qa = dv[..., 0] ** 2 - np.sum(dv[..., 1:] ** 2, axis=-1)
    qb = 2.0 * (v[..., 0] * dv[..., 0] - np.sum(v[..., 1:] * dv[..., 1:], axis=-1))
    n1 = np.linalg.norm(v[..., 1:], axis=-1)
    qc = np.maximum((v[..., 0] - n1) * (v[..., 0] + n1), 0.0)
    disc = qb * qb - 4.0 * qa * qc
    out = np.full(qa.shape, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = np.sqrt(np.maximum(disc, 0.0))
        q = -0.5 * (qb + np.where(qb >= 0, sq, -sq))
        r1 = np.where(qa != 0, q / qa, np.inf)
        r2 = np.where(q != 0, qc / q, np.inf)
    has = disc >= 0
    for r in (r1, r2):
        ok = has & np.isfinite(r) & (r > 0)
        out = np.where(ok, np.minimum(out, r), out)
    # linear case
    lin = (qa == 0) & (qb < 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(lin, np.minimum(out, -qc / np.where(lin, qb, -1.0)), out)
    # the apex direction: v0 + a dv0 must stay nonnegative
    with np.errstate(divide="ignore", invalid="ignore"):
        apex = np.where(dv[..., 0] < 0, -v[..., 0] / np.where(dv[..., 0] < 0, dv[..., 0], -1.0), np.inf)
    return np.minimum(out, apex)


@dataclass
class Scaling:
    """A primal-dual scaling ``W`` with ``W z = W^{-T} s = lam``."""

    geom: ConeGeometry
    nn_w: np.ndarray
    soc: list
    psd: list
    lam: np.ndarray
    _psd_lam: list = field(default=None, repr=False)

    def apply(self, v: np.ndarray, mode: str) -> np.ndarray:
        """Apply W, W^T, W^{-1} or W^{-T} to v of shape (B, m) or (B, n, m)."""
        g = self.geom
        extra = v.ndim - 2

        def ex(a, nd):
            # insert singleton axes after the batch axis to broadcast over columns
            for _ in range(extra):
                a = np.expand_dims(a, 1)
            return a

        out = np.empty_like(v)
        if len(g.nn):
            w = ex(self.nn_w, 1)
            out[..., g.nn] = v[..., g.nn] * w if mode in ("W", "Wt") else v[..., g.nn] / w
        for (k, idx), (beta, wbar) in zip(g.soc_groups, self.soc):
            out[..., idx] = _soc_apply(ex(beta, 1), ex(wbar, 2), v[..., idx], mode)
        for (d, idx), (r, rinv, _) in zip(g.psd_groups, self.psd):
            r_, ri_ = ex(r, 3), ex(rinv, 3)
            vm = smat(v[..., idx], d)
            if mode == "W":
                res = np.swapaxes(r_, -1, -2) @ vm @ r_
            elif mode == "Wt":
                res = r_ @ vm @ np.swapaxes(r_, -1, -2)
            elif mode == "Winv":
                res = np.swapaxes(ri_, -1, -2) @ vm @ ri_
            else:
                res = ri_ @ vm @ np.swapaxes(ri_, -1, -2)
            out[..., idx] = svec(res)
        return out

    def lam_div(self, r: np.ndarray) -> np.ndarray:
        """Solve ``lam o u = r`` for u (Jordan product with the scaled point)."""
        g = self.geom
        lam = self.lam
        out = np.empty_like(r)
        out[:, g.nn] = r[:, g.nn] / lam[:, g.nn]
        for k, idx in g.soc_groups:
            lb, rb = lam[:, idx], r[:, idx]
            l0, l1 = lb[..., 0], lb[..., 1:]
            den = (l0 - np.linalg.norm(l1, axis=-1)) * (l0 + np.linalg.norm(l1, axis=-1))
            u0 = (l0 * rb[..., 0] - np.sum(l1 * rb[..., 1:], axis=-1)) / den
            ub = np.empty_like(rb)
            ub[..., 0] = u0
            ub[..., 1:] = (rb[..., 1:] - u0[..., None] * l1) / l0[..., None]
            out[:, idx] = ub
        for (d, idx), (_, _, ev) in zip(g.psd_groups, self.psd):
            rows, cols, _ = svec_index(d)
            out[:, idx] = r[:, idx] / (0.5 * (ev[..., rows] + ev[..., cols]))
        return out

    def winvt_blocks(self):
        """Explicit W^{-T} blocks for a single program (batch size 1).

        Returns ``(rows, cols, vals)`` triplets of the block-diagonal matrix.
        """
        g = self.geom
        rows, cols, vals = [g.nn], [g.nn], [1.0 / self.nn_w[0]]
        for (k, idx), (beta, wbar) in zip(g.soc_groups, self.soc):
            eye = np.broadcast_to(np.eye(k), (idx.shape[0], k, k))
            # columns of W^{-1} (symmetric), one block per cone
            blk = _soc_apply(beta[0][:, None], wbar[0][:, None, :], eye, "Winv")
            rows.append(np.repeat(idx, k, axis=1).ravel())
            cols.append(np.tile(idx, (1, k)).ravel())
            vals.append(np.swapaxes(blk, -1, -2).ravel())
        for (d, idx), (r, rinv, _) in zip(g.psd_groups, self.psd):
            t = svec_dim(d)
            basis = smat(np.eye(t), d)  # (t, d, d)
            ri = rinv[0][:, None]  # (nb, 1, d, d)
            res = svec(ri @ basis[None] @ np.swapaxes(ri, -1, -2))  # (nb, t_in, t_out)
            blk = np.swapaxes(res, -1, -2)  # (nb, out, in)
            rows.append(np.repeat(idx, t, axis=1).ravel())
            cols.append(np.tile(idx, (1, t)).ravel())
            vals.append(blk.ravel())
        return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
