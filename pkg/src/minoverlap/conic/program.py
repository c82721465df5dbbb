"""Cone program containers and a builder for assembling them."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ..errors import InvalidProgramError
from ..matcore import svec, svec_dim
from .cones import ConeLayout


class Status(str, Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"
    MAX_ITERATIONS = "MaxIterations"


@dataclass(frozen=True)
class SolverOptions:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    rel_gap_tol: float = 1e-8
    max_iter: int = 200
    step_fraction: float = 0.99
    dense_limit: int = 1000


@dataclass
class ConicProgram:
    """``min c'x  s.t.  G x + s = h, s in K, A x = b`` (or ``max`` when sense is "max").

    ``K`` is described by ``cones``; its ``free_count`` must be zero because
    free variables are simply the components of ``x``. ``G`` and ``A`` may be
    dense arrays or scipy sparse matrices. ``offset`` is added to reported
    objective values.
    """

    c: np.ndarray
    G: object
    h: np.ndarray
    cones: ConeLayout
    A: object = None
    b: np.ndarray | None = None
    sense: str = "min"
    offset: float = 0.0
    names: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.h = np.asarray(self.h, dtype=float).ravel()
        n, m = self.c.size, self.h.size
        if self.cones.free_count:
            raise InvalidProgramError("inequality-form programs take no free cone slots")
        if m != self.cones.cone_dim:
            raise InvalidProgramError(f"h has length {m}, cone dimension is {self.cones.cone_dim}")
        if self.G.shape != (m, n):
            raise InvalidProgramError(f"G has shape {self.G.shape}, expected {(m, n)}")
        if self.A is None:
            self.A = np.zeros((0, n))
            self.b = np.zeros(0)
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.A.shape != (self.b.size, n):
            raise InvalidProgramError(f"A has shape {self.A.shape}, expected {(self.b.size, n)}")
        if self.sense not in ("min", "max"):
            raise InvalidProgramError("sense must be 'min' or 'max'")
        for arr in (self.c, self.h, self.b):
            if not np.all(np.isfinite(arr)):
                raise InvalidProgramError("program data contain non-finite values")

    @property
    def n(self) -> int:
        return self.c.size

    @classmethod
    def standard(cls, layout: ConeLayout, objective, eq_constraints, sense: str = "min") -> "ConicProgram":
        """Standard form: ``min <objective, x>`` over ``x = (x_K, x_free)`` with
        ``x_K`` in the cone of ``layout`` and ``<a_i, x> = b_i`` for each pair
        ``(a_i, b_i)`` of ``eq_constraints``."""
        nk, nt = layout.cone_dim, layout.total_dim
        obj = np.asarray(objective, dtype=float).ravel()
        if obj.size != nt:
            raise InvalidProgramError(f"objective has length {obj.size}, layout needs {nt}")
        rows = []
        rhs = []
        for a, bi in eq_constraints:
            a = np.asarray(a, dtype=float).ravel()
            if a.size != nt:
                raise InvalidProgramError(f"constraint has length {a.size}, layout needs {nt}")
            rows.append(a)
            rhs.append(float(bi))
        A = np.array(rows).reshape(len(rows), nt)
        G = sp.hstack([-sp.identity(nk, format="csr"), sp.csr_matrix((nk, layout.free_count))]).tocsr()
        return cls(obj, G, np.zeros(nk), layout.cone_only(), A, np.array(rhs), sense)

    # ------------------------------------------------------------------
    def dump(self, path) -> None:
        """Write the program as JSON: layout, objective, and index/value triplets."""

        def triplets(mat):
            coo = sp.coo_matrix(mat)
            return [[int(i), int(j), float(v)] for i, j, v in zip(coo.row, coo.col, coo.data)]

        doc = {
            "layout": {
                "psd_block_dims": list(self.cones.psd_block_dims),
                "soc_dims": list(self.cones.soc_dims),
                "nonneg_count": self.cones.nonneg_count,
            },
            "sense": self.sense,
            "offset": self.offset,
            "n": self.n,
            "c": self.c.tolist(),
            "h": self.h.tolist(),
            "b": self.b.tolist(),
            "G": triplets(self.G),
            "A": triplets(self.A),
        }
        Path(path).write_text(json.dumps(doc, indent=1))

    @classmethod
    def load(cls, path) -> "ConicProgram":
        doc = json.loads(Path(path).read_text())
        lay = ConeLayout(**doc["layout"])
        n, m, p = doc["n"], lay.cone_dim, len(doc["b"])

        def mat(trip, shape):
            if not trip:
                return sp.csr_matrix(shape)
            t = np.array(trip)
            return sp.csr_matrix((t[:, 2], (t[:, 0].astype(int), t[:, 1].astype(int))), shape=shape)

        return cls(
            np.array(doc["c"]), mat(doc["G"], (m, n)), np.array(doc["h"]), lay,
            mat(doc["A"], (p, n)), np.array(doc["b"]), doc["sense"], doc["offset"],
        )


@dataclass
class ConicSolution:
    """Primal-dual solution.

    Dual variables satisfy ``G' z - A' y + c = 0`` (for minimization), with
    ``z`` in the dual cone; ``dual_eq`` is ``y`` and ``dual_slack`` is ``z``.
    For infeasible statuses the fields hold a normalized certificate instead:
    a Farkas ray ``(y, z)`` with ``h'z - b'y = -1`` for PrimalInfeasible, or an
    improving ray ``x`` with ``c'x = -1`` for DualInfeasible.
    """

    status: Status
    primal: np.ndarray
    dual_eq: np.ndarray
    dual_slack: np.ndarray
    slack: np.ndarray
    objective_value: float
    dual_value: float
    gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == Status.OPTIMAL


class ProgramBuilder:
    """Incremental assembly of an inequality-form conic program.

    Variables are allocated in named blocks. Constraints are affine
    expressions ``const + sum_k coef_k * x[var_k]`` required to lie in a cone.
    """

    def __init__(self):
        self.n = 0
        self.blocks: dict[str, np.ndarray] = {}
        self._nn: list = []
        self._soc: list = []
        self._psd: dict[int, list] = {}
        self._eq: list = []
        self.c: dict[int, float] = {}

    def var(self, name: str, size: int) -> np.ndarray:
        idx = np.arange(self.n, self.n + size)
        self.n += size
        self.blocks[name] = idx
        return idx

    def minimize(self, cols, coefs) -> None:
        for j, v in zip(np.atleast_1d(cols), np.atleast_1d(coefs)):
            self.c[int(j)] = self.c.get(int(j), 0.0) + float(v)

    def nonneg(self, const, cols, coefs) -> None:
        """Rows ``const[r] + sum coefs[r, k] x[cols[r, k]] >= 0`` (arrays of shape (R,), (R, K), (R, K))."""
        const = np.atleast_1d(np.asarray(const, dtype=float))
        cols = np.asarray(cols).reshape(const.size, -1)
        coefs = np.asarray(coefs, dtype=float).reshape(const.size, -1)
        self._nn.append((const, cols, coefs))

    def soc(self, const, terms) -> None:
        """``const + sum_k coef_k x[col_k]`` in the second-order cone; terms are (col, vector)."""
        const = np.asarray(const, dtype=float)
        cols = np.array([[int(c) for c, _ in terms]], dtype=int).reshape(1, len(terms))
        coefs = np.array([np.asarray(v, dtype=float) for _, v in terms]).reshape(1, len(terms), const.size)
        self._soc.append((const[None], cols, coefs))

    def soc_batch(self, const, cols, coefs) -> None:
        """R cones of equal size k: ``const[r] + sum_j coefs[r, j] * x[cols[r, j]]``.

        Shapes: const (R, k), cols (R, J), coefs (R, J, k).
        """
        const = np.asarray(const, dtype=float)
        self._soc.append((const, np.asarray(cols, dtype=int), np.asarray(coefs, dtype=float)))

    def psd(self, const, terms) -> None:
        """``const + sum_k x[col_k] * mat_k`` positive semidefinite; terms are (col, matrix)."""
        const = np.asarray(const, dtype=float)
        self._psd.setdefault(const.shape[0], []).append((const, list(terms)))

    def eq(self, cols, coefs, rhs: float) -> None:
        self._eq.append((np.atleast_1d(cols), np.atleast_1d(np.asarray(coefs, dtype=float)), float(rhs)))

    def build(self, sense: str = "min", offset: float = 0.0) -> ConicProgram:
        rows, cols, vals, h = [], [], [], []
        off = 0
        psd_dims = []
        for d in sorted(self._psd):
            t = svec_dim(d)
            for const, terms in self._psd[d]:
                psd_dims.append(d)
                h.append(svec(const))
                for col, mat in terms:
                    v = -svec(np.asarray(mat, dtype=float))
                    nz = np.nonzero(v)[0]
                    rows.append(off + nz)
                    cols.append(np.full(nz.size, col))
                    vals.append(v[nz])
                off += t
        soc_dims = []
        for const, cc, coefs in self._soc:
            R, k = const.shape
            soc_dims.extend([k] * R)
            h.append(const.ravel())
            if cc.size:
                rr = off + np.arange(R)[:, None, None] * k + np.arange(k)[None, None, :]
                rr = np.broadcast_to(rr, coefs.shape)
                jj = np.broadcast_to(cc[:, :, None], coefs.shape)
                mask = coefs != 0
                rows.append(rr[mask])
                cols.append(jj[mask])
                vals.append(-coefs[mask])
            off += R * k
        nn = 0
        for const, cc, coefs in self._nn:
            r = const.size
            h.append(const)
            rr = np.repeat(np.arange(off, off + r), cc.shape[1])
            mask = coefs.ravel() != 0
            rows.append(rr[mask])
            cols.append(cc.ravel()[mask])
            vals.append(-coefs.ravel()[mask])
            off += r
            nn += r
        m = off
        G = sp.csr_matrix(
            (np.concatenate(vals) if vals else [], (np.concatenate(rows) if rows else [], np.concatenate(cols) if cols else [])),
            shape=(m, self.n),
        )
        ar, ac, av, b = [], [], [], []
        for i, (cc, coefs, rhs) in enumerate(self._eq):
            ar.append(np.full(cc.size, i))
            ac.append(cc)
            av.append(coefs)
            b.append(rhs)
        A = sp.csr_matrix(
            (np.concatenate(av) if av else [], (np.concatenate(ar) if ar else [], np.concatenate(ac) if ac else [])),
            shape=(len(b), self.n),
        )
        c = np.zeros(self.n)
        for j, v in self.c.items():
            c[j] = v
        lay = ConeLayout(tuple(psd_dims), tuple(soc_dims), nn)
        return ConicProgram(c, G, np.concatenate(h) if h else np.zeros(0), lay, A, np.array(b), sense, offset)
