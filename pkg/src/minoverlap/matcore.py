"""Dense symmetric matrix kernel.

Small helpers used by the geometry and solver code: validated symmetric
matrices, sorted eigendecomposition, PSD tests and square roots, and the
``svec``/``smat`` isometry between symmetric matrices and vectors.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import InvalidInputError, NotPSDError

MAX_DIM = 512
PSD_TOL = 1e-9
SQRT2 = np.sqrt(2.0)


def sym(m, copy: bool = True) -> np.ndarray:
    """Return a validated symmetric matrix built from the lower triangle of ``m``.

    The upper triangle is overwritten with the lower one so that the result
    is exactly symmetric.
    """
    a = np.array(m, dtype=float, copy=copy)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] == 0 or a.shape[0] > MAX_DIM:
        raise InvalidInputError(f"matrix dimension {a.shape[0]} outside 1..{MAX_DIM}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("matrix has non-finite entries")
    lower = np.tril(a)
    return lower + np.tril(a, -1).T


def eig_sym(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and the matching orthonormal eigenvectors.

    Returns ``(w, Q)`` with ``m = Q @ diag(w) @ Q.T``; column ``k`` of ``Q``
    belongs to ``w[k]``.
    """
    a = sym(m)
    w, q = np.linalg.eigh(a)
    return w[::-1].copy(), q[:, ::-1].copy()


def is_psd(m, tol: float = PSD_TOL) -> bool:
    """True iff the smallest eigenvalue of ``m`` is at least ``-tol``."""
    if tol < 0:
        raise InvalidInputError("tol must be nonnegative")
    a = sym(m)
    return bool(np.linalg.eigvalsh(a)[0] >= -tol)


def sqrt_psd(m) -> np.ndarray:
    """Symmetric PSD square root; tiny negative eigenvalues are clamped to zero."""
    a = sym(m)
    w, q = np.linalg.eigh(a)
    scale = max(1.0, float(np.linalg.norm(a)))
    if w[0] < -1e-10 * scale:
        raise NotPSDError(f"matrix has eigenvalue {w[0]:.3e} < 0")
    r = (q * np.sqrt(np.clip(w, 0.0, None))) @ q.T
    return 0.5 * (r + r.T)


def min_eig(m) -> float:
    return float(np.linalg.eigvalsh(sym(m))[0])


def svec_dim(d: int) -> int:
    return d * (d + 1) // 2


def smat_dim(t: int) -> int:
    """Inverse of :func:`svec_dim`; raises if ``t`` is not triangular."""
    d = int(round((np.sqrt(8 * t + 1) - 1) / 2))
    if svec_dim(d) != t:
        raise InvalidInputError(f"{t} is not a triangular number")
    return d


@lru_cache(maxsize=None)
def svec_index(d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row indices, column indices and scale factors of the svec ordering.

    Entries are taken column by column from the lower triangle; off-diagonal
    entries are multiplied by sqrt(2) so that ``svec(A) @ svec(B) == trace(A @ B)``.
    """
    rows, cols = [], []
    for j in range(d):
        for i in range(j, d):
            rows.append(i)
            cols.append(j)
    rows = np.array(rows)
    cols = np.array(cols)
    scale = np.where(rows == cols, 1.0, SQRT2)
    for arr in (rows, cols, scale):
        arr.setflags(write=False)
    return rows, cols, scale


def svec(m: np.ndarray) -> np.ndarray:
    """Map symmetric matrices (batched over leading axes) to vectors."""
    m = np.asarray(m, dtype=float)
    rows, cols, scale = svec_index(m.shape[-1])
    return m[..., rows, cols] * scale


def smat(v: np.ndarray, d: int | None = None) -> np.ndarray:
    """Inverse of :func:`svec`, batched over leading axes."""
    v = np.asarray(v, dtype=float)
    if d is None:
        d = smat_dim(v.shape[-1])
    rows, cols, scale = svec_index(d)
    out = np.zeros(v.shape[:-1] + (d, d))
    vals = v / scale
    out[..., rows, cols] = vals
    out[..., cols, rows] = vals
    return out
