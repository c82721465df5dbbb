"""Ellipsoids, containers and containment conditions.

An ellipsoid is ``{x : (x - c)' S^{-2} (x - c) <= 1}`` with ``S`` symmetric
positive definite; the eigenvalues of ``S`` are the semi-axis lengths and
``Sigma = S^2``. Containment of one ellipsoid in another is expressed by the
S-lemma as a linear matrix inequality in the inner ellipsoid's center, its
shape matrix ``S`` and a scalar multiplier ``lam``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InfeasibleContainmentError, InvalidInputError
from .matcore import eig_sym, smat, sqrt_psd, svec_dim, sym


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """Ellipsoid with center ``center``, shape ``S`` and ``Sigma`` (defaults to ``S @ S``).

    A ``Sigma`` larger than ``S @ S`` is allowed; such an ellipsoid is
    flagged by :attr:`relaxed` and its geometry is governed by ``Sigma``.
    """

    center: np.ndarray
    S: np.ndarray
    Sigma: np.ndarray = None

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).ravel()
        S = sym(self.S)
        if c.size not in (2, 3) or S.shape != (c.size, c.size):
            raise InvalidInputError(f"need dim 2 or 3 with matching shape, got {c.size} and {S.shape}")
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("center has non-finite entries")
        if np.linalg.eigvalsh(S)[0] <= 0:
            raise InvalidInputError("shape matrix must be positive definite")
        Sig = S @ S if self.Sigma is None else sym(self.Sigma)
        for a in (c, S, Sig):
            a.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "Sigma", Sig)

    @classmethod
    def ball(cls, center, radius: float) -> "Ellipsoid":
        c = np.asarray(center, dtype=float).ravel()
        if radius <= 0:
            raise InvalidInputError("radius must be positive")
        return cls(c, radius * np.eye(c.size))

    @classmethod
    def from_axes(cls, center, radii, rotation=None) -> "Ellipsoid":
        """Semi-axes ``radii`` along the columns of ``rotation`` (identity by default)."""
        c = np.asarray(center, dtype=float).ravel()
        r = np.asarray(radii, dtype=float).ravel()
        Q = np.eye(c.size) if rotation is None else np.asarray(rotation, dtype=float)
        return cls(c, (Q * r) @ Q.T)

    @classmethod
    def from_sigma(cls, center, Sigma) -> "Ellipsoid":
        return cls(center, sqrt_psd(Sigma), Sigma)

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def semi_axes(self) -> np.ndarray:
        """Semi-axis lengths in descending order (square roots of Sigma's eigenvalues)."""
        w = np.linalg.eigvalsh(self.Sigma)[::-1]
        return np.sqrt(np.clip(w, 0.0, None))

    @property
    def relaxed(self) -> bool:
        return bool(np.linalg.norm(self.Sigma - self.S @ self.S) > 1e-8 * np.linalg.norm(self.Sigma))

    def contains_point(self, x, tol: float = 0.0) -> bool:
        d = np.asarray(x, dtype=float) - self.center
        return bool(d @ np.linalg.solve(self.Sigma, d) <= 1.0 + tol)

    def boundary_points(self, count: int, rng=None) -> np.ndarray:
        """Points on the boundary: an even angular grid in 2D, random in 3D."""
        if self.dim == 2:
            t = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
            u = np.c_[np.cos(t), np.sin(t)]
        else:
            rng = np.random.default_rng(0) if rng is None else rng
            u = rng.normal(size=(count, 3))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
        return self.center + u @ sqrt_psd(self.Sigma)

    def moved(self, center=None, S=None) -> "Ellipsoid":
        return Ellipsoid(self.center if center is None else center, self.S if S is None else S)


@dataclass(frozen=True, eq=False)
class Container:
    """The enclosing ellipsoid."""

    ellipsoid: Ellipsoid

    @classmethod
    def sphere(cls, radius: float, center=(0.0, 0.0, 0.0)) -> "Container":
        return cls(Ellipsoid.ball(center, radius))

    @classmethod
    def from_axes(cls, radii, center=None, rotation=None) -> "Container":
        r = np.asarray(radii, dtype=float)
        c = np.zeros(r.size) if center is None else center
        return cls(Ellipsoid.from_axes(c, r, rotation))

    @property
    def dim(self) -> int:
        return self.ellipsoid.dim

    @property
    def center(self) -> np.ndarray:
        return self.ellipsoid.center

    @property
    def semi_axes(self) -> np.ndarray:
        return self.ellipsoid.semi_axes

    @property
    def is_spherical(self) -> bool:
        a = self.semi_axes
        return bool(a[0] - a[-1] <= 1e-12 * a[0])

    @property
    def volume(self) -> float:
        return volume(self.ellipsoid)


@dataclass(frozen=True)
class AxisSpec:
    """Prescribed semi-axis lengths, descending."""

    radii: tuple

    def __post_init__(self):
        r = tuple(float(v) for v in self.radii)
        if len(r) not in (2, 3) or min(r) <= 0:
            raise InvalidInputError("axis spec needs 2 or 3 positive radii")
        if any(r[i] < r[i + 1] for i in range(len(r) - 1)):
            raise InvalidInputError("axis spec radii must be descending")
        object.__setattr__(self, "radii", r)

    @property
    def dim(self) -> int:
        return len(self.radii)

    @property
    def is_sphere(self) -> bool:
        return self.radii[0] == self.radii[-1]

    @property
    def trace(self) -> float:
        return float(sum(self.radii))

    @property
    def volume(self) -> float:
        return _ball_volume(self.dim) * math.prod(self.radii)


def _ball_volume(dim: int) -> float:
    return math.pi if dim == 2 else 4.0 * math.pi / 3.0


def volume(e: Ellipsoid) -> float:
    """Volume (area in 2D) of the ellipsoid described by ``Sigma``."""
    return _ball_volume(e.dim) * math.sqrt(max(np.linalg.det(e.Sigma), 0.0))


def axis_distortion(e: Ellipsoid, spec: AxisSpec) -> float:
    """Relative l2 distance between the sorted semi-axes of ``e`` and ``spec``."""
    if e.dim != spec.dim:
        raise InvalidInputError("dimension mismatch")
    actual = np.sort(eig_sym(e.S)[0])[::-1]
    want = np.array(spec.radii)
    return float(np.linalg.norm(actual - want) / np.linalg.norm(want))


# ----------------------------------------------------------------------
# containment LMI
def containment_matrix(center, S, lam: float, outer: Container) -> np.ndarray:
    """The matrix that must be negative semidefinite for the ellipsoid
    ``(center, S)`` to lie in ``outer``, at multiplier ``lam``."""
    n = outer.dim
    c = np.asarray(center, dtype=float) - outer.center
    F = np.zeros((2 * n + 1, 2 * n + 1))
    F[:n, :n] = -lam * np.eye(n)
    F[:n, n + 1:] = S
    F[n + 1:, :n] = S
    F[n, n] = lam - 1.0
    F[n, n + 1:] = c
    F[n + 1:, n] = c
    F[n + 1:, n + 1:] = -outer.ellipsoid.Sigma
    return F


@dataclass(frozen=True)
class ContainmentLMI:
    """Containment of ``inner`` in ``outer`` as an LMI with multiplier slot."""

    inner: Ellipsoid
    outer: Container

    @property
    def size(self) -> int:
        return 2 * self.outer.dim + 1

    def matrix(self, lam: float) -> np.ndarray:
        return containment_matrix(self.inner.center, self.inner.S, lam, self.outer)

    def best_multiplier(self) -> tuple[float, float]:
        """Multiplier in [0, 1] minimizing the largest eigenvalue, and that eigenvalue."""
        return best_containment_multiplier(self.inner.center, self.inner.S, self.outer)

    def feasible(self, tol: float = 1e-9) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.outer.ellipsoid.Sigma))))
        return self.best_multiplier()[1] <= tol * scale


def best_containment_multiplier(center, S, outer: Container) -> tuple[float, float]:
    def f(lam):
        return np.linalg.eigvalsh(containment_matrix(center, S, lam, outer))[-1]

    res = minimize_scalar(f, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-12})
    lam = float(res.x)
    best = float(res.fun)
    for cand in (0.0, 1.0):
        v = f(cand)
        if v < best:
            lam, best = cand, v
    return lam, best


def containment_lmi(inner: Ellipsoid, outer: Container) -> ContainmentLMI:
    if inner.dim != outer.dim:
        raise InvalidInputError("dimension mismatch")
    return ContainmentLMI(inner, outer)


def emit_containment(builder, outer: Container, lam_col: int, center, shape) -> None:
    """Add the containment LMI to a :class:`ProgramBuilder`.

    ``center`` is either a fixed vector or an array of variable columns;
    ``shape`` is a fixed matrix ``S`` or an array of svec variable columns.
    """
    n = outer.dim
    N = 2 * n + 1
    const = np.zeros((N, N))
    const[n, n] = 1.0
    const[n + 1:, n + 1:] = outer.ellipsoid.Sigma
    terms = []
    E = np.zeros((N, N))
    E[:n, :n] = np.eye(n)
    E[n, n] = -1.0
    terms.append((lam_col, E))
    c0 = outer.center
    center = np.asarray(center)
    if center.dtype.kind in "iu":
        # -(c - c0) in the off-diagonal entries
        const[n, n + 1:] = c0
        const[n + 1:, n] = c0
        for k, col in enumerate(center):
            M = np.zeros((N, N))
            M[n, n + 1 + k] = M[n + 1 + k, n] = -1.0
            terms.append((int(col), M))
    else:
        d = center.astype(float) - c0
        const[n, n + 1:] = -d
        const[n + 1:, n] = -d
    shape = np.asarray(shape)
    if shape.ndim == 1:
        basis = smat(np.eye(svec_dim(n)), n)
        for k, col in enumerate(shape):
            M = np.zeros((N, N))
            M[:n, n + 1:] = -basis[k]
            M[n + 1:, :n] = -basis[k]
            terms.append((int(col), M))
    else:
        const[:n, n + 1:] = -shape
        const[n + 1:, :n] = -shape
    builder.psd(const, terms)


# ----------------------------------------------------------------------
# feasible-center sets for spheres
class ContainmentSet:
    """Centers at which a sphere of fixed radius fits inside a container."""

    dim: int

    def contains(self, c, tol: float = 1e-9) -> bool:
        raise NotImplementedError

    def emit(self, builder, center_cols) -> None:
        raise NotImplementedError

    def project(self, c) -> np.ndarray:
        raise NotImplementedError

    def slack(self, c) -> float:
        """Distance-like margin to the container wall (0 when touching)."""
        raise NotImplementedError


@dataclass(frozen=True)
class BallSet(ContainmentSet):
    """``{c : |c - center| <= radius}``."""

    center: np.ndarray
    radius: float

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, c, tol: float = 1e-9) -> bool:
        return bool(np.linalg.norm(np.asarray(c) - self.center) <= self.radius + tol)

    def emit(self, builder, center_cols) -> None:
        builder.soc(np.r_[self.radius, -np.asarray(self.center)],
                    [(int(col), np.eye(self.dim + 1)[k + 1]) for k, col in enumerate(center_cols)])

    def project(self, c) -> np.ndarray:
        d = np.asarray(c, dtype=float) - self.center
        nd = np.linalg.norm(d)
        return np.asarray(c, dtype=float) if nd <= self.radius else self.center + d * (self.radius / nd)

    def slack(self, c) -> float:
        return float(self.radius - np.linalg.norm(np.asarray(c) - self.center))


@dataclass(frozen=True)
class BoxSet(ContainmentSet):
    """``{c : lo <= c <= hi}`` componentwise."""

    lo: np.ndarray
    hi: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, c, tol: float = 1e-9) -> bool:
        c = np.asarray(c)
        return bool(np.all(c >= self.lo - tol) and np.all(c <= self.hi + tol))

    def emit(self, builder, center_cols) -> None:
        cols = np.asarray(center_cols)
        builder.nonneg(-np.asarray(self.lo), cols[:, None], np.ones((cols.size, 1)))
        builder.nonneg(np.asarray(self.hi), cols[:, None], -np.ones((cols.size, 1)))

    def project(self, c) -> np.ndarray:
        return np.clip(np.asarray(c, dtype=float), self.lo, self.hi)

    def slack(self, c) -> float:
        c = np.asarray(c)
        return float(min(np.min(c - self.lo), np.min(self.hi - c)))


@dataclass(frozen=True)
class LMISet(ContainmentSet):
    """Centers of a ball of radius ``radius`` contained in an ellipsoidal container."""

    radius: float
    outer: Container
    _S: np.ndarray = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.outer.dim

    def _shape(self):
        return self.radius * np.eye(self.dim)

    def margin(self, c) -> float:
        """Smallest achievable largest eigenvalue of the containment matrix."""
        return best_containment_multiplier(c, self._shape(), self.outer)[1]

    def contains(self, c, tol: float = 1e-9) -> bool:
        scale = max(1.0, float(np.max(self.outer.ellipsoid.Sigma)))
        return self.margin(c) <= tol * scale

    def emit(self, builder, center_cols) -> None:
        lam = builder.var(f"lam{len(builder.blocks)}", 1)[0]
        emit_containment(builder, self.outer, lam, np.asarray(center_cols), self._shape())

    def project(self, c) -> np.ndarray:
        from .conic import ProgramBuilder, solve

        c = np.asarray(c, dtype=float)
        if self.contains(c, 0.0):
            return c
        b = ProgramBuilder()
        x = b.var("c", self.dim)
        t = b.var("t", 1)[0]
        self.emit(b, x)
        b.soc(np.r_[0.0, -c], [(t, np.eye(self.dim + 1)[0])] + [(int(x[k]), np.eye(self.dim + 1)[k + 1]) for k in range(self.dim)])
        b.minimize([t], [1.0])
        sol = solve(b.build())
        out = sol.primal[x]
        # pull slightly toward the container center so that the result is interior
        c0 = self.outer.center
        for _ in range(60):
            if self.contains(out, 0.0):
                break
            out = c0 + (1 - 1e-9) * (out - c0)
        return out

    def slack(self, c) -> float:
        """Distance from the sphere's surface to the container wall, estimated by
        bisection on the radius at fixed center."""
        c = np.asarray(c, dtype=float)
        if not self.outer.ellipsoid.contains_point(c):
            return -float(np.linalg.norm(c - self.outer.center))
        lo, hi = 0.0, float(self.outer.semi_axes[0])
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            ok = best_containment_multiplier(c, mid * np.eye(self.dim), self.outer)[1] <= 0.0
            lo, hi = (mid, hi) if ok else (lo, mid)
        return lo - self.radius


def sphere_containment_set(radius: float, outer: Container) -> ContainmentSet:
    """Feasible centers for a sphere of ``radius`` inside ``outer``."""
    a = outer.semi_axes
    if radius >= a[-1] * (1 + 1e-12) or radius <= 0:
        raise InfeasibleContainmentError(f"radius {radius} does not fit in a container with semi-axes {a}")
    if outer.is_spherical:
        return BallSet(outer.center, float(a[0] - radius))
    return LMISet(float(radius), outer)


@dataclass(frozen=True, eq=False)
class BoxContainer:
    """Axis-aligned box ``lo <= x <= hi``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1 or np.any(hi <= lo):
            raise InvalidInputError("box bounds must be 1-D with lo < hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, side: float, dim: int, center=None) -> "BoxContainer":
        c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        return cls(c - side / 2, c + side / 2)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def semi_axes(self) -> np.ndarray:
        return np.sort(0.5 * (self.hi - self.lo))[::-1]

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))


def center_set(radius: float, outer) -> ContainmentSet:
    """Feasible centers for a sphere of ``radius`` inside an ellipsoidal or box container."""
    if isinstance(outer, BoxContainer):
        if radius <= 0 or np.any(2 * radius >= outer.hi - outer.lo):
            raise InfeasibleContainmentError(f"radius {radius} does not fit in the box")
        return BoxSet(outer.lo + radius, outer.hi - radius)
    return sphere_containment_set(radius, outer)
