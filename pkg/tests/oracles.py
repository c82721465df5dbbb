"""Brute-force reference values used to freeze test expectations."""
import math

import numpy as np
from scipy.optimize import minimize_scalar

def _fits(x0, a, b, balls):
    # max over u in [-1, 1] of (a u + e)^2 + b^2 (1 - u^2) against R^2, exact
    for c, R in balls:
        e = x0 - c
        worst = (abs(a) + abs(e)) ** 2
        if b * b > a * a:
            u = a * e / (b * b - a * a)
            if abs(u) <= 1:
                worst = max(worst, (a * u + e) ** 2 + b * b * (1 - u * u))
        if worst > R * R:
            return False
    return True


def _b_max(x0, a, balls):
    if not _fits(x0, a, 0.0, balls):
        return -1.0
    lo, hi = 0.0, min(R for _, R in balls)
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if _fits(x0, a, mid, balls) else (lo, mid)
    return lo


def spheroid_in_lens(r1, r2, d):
    """Largest a + 2b over spheroids aligned with the axis of two balls
    (centers 0 and d on the axis, radii r1 and r2).

    The set of inscribed spheroids is convex, so the best value for fixed
    center x0 is concave in the axial semi-axis a, and the outer maximum
    over x0 is concave too; nested bounded scalar searches are exact.
    """
    if d >= r1 + r2:
        return 0.0
    balls = [(0.0, r1), (d, r2)]
    lo, hi = max(-r1, d - r2), min(r1, d + r2)

    def inner(x0):
        amax = min(r1 - abs(x0), r2 - abs(x0 - d))
        if amax <= 0:
            return 0.0
        res = minimize_scalar(lambda a: -(a + 2 * max(_b_max(x0, a, balls), 0.0)), bounds=(0.0, amax),
                              method="bounded", options={"xatol": 1e-12})
        return -res.fun

    res = minimize_scalar(lambda x: -inner(x), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return -res.fun


def lens_cases(count=20, seed=2024):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        r1, r2 = rng.uniform(0.5, 1.5, 2)
        d = rng.uniform(abs(r1 - r2) + 0.05, r1 + r2 - 0.05)
        u = rng.standard_normal(3)
        out.append({"r1": r1, "r2": r2, "d": d, "c1": rng.uniform(-1, 1, 3).tolist(),
                    "u": (u / np.linalg.norm(u)).tolist()})
    return out


if __name__ == "__main__":
    import json
    import pathlib

    cases = lens_cases()
    for c in cases:
        c["value"] = spheroid_in_lens(c["r1"], c["r2"], c["d"])
    path = pathlib.Path(__file__).parent / "data" / "lens_oracle.json"
    path.write_text(json.dumps(cases, indent=1))
