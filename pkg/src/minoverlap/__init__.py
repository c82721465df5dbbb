"""Minimum-overlap packing of spheres and ellipsoids."""
from .errors import MinOverlapError
from .geometry import AxisSpec, BoxContainer, Container, Ellipsoid
from .overlap import measure_overlap
from .spherepack import SpherePackProblem, pack, multistart
from .ellipack import PackingProblem, TrustRegionConfig, pack_ellipsoids, init_state

__version__ = "0.1.0"

__all__ = [
    "AxisSpec",
    "BoxContainer",
    "Container",
    "Ellipsoid",
    "MinOverlapError",
    "PackingProblem",
    "SpherePackProblem",
    "TrustRegionConfig",
    "init_state",
    "measure_overlap",
    "multistart",
    "pack",
    "pack_ellipsoids",
]
