"""Embedded conic interior-point solver and value-function tools."""
from .cones import ConeLayout
from .ipm import solve, solve_many
from .program import ConicProgram, ConicSolution, ProgramBuilder, SolverOptions, Status
from .sensitivity import (
    ContinuityReport,
    LipschitzProbe,
    dual_interior_margin,
    lipschitz_probe,
    solution_continuity_probe,
    value_and_solution,
    value_function,
)

__all__ = [
    "ContinuityReport",
    "LipschitzProbe",
    "dual_interior_margin",
    "lipschitz_probe",
    "solution_continuity_probe",
    "value_and_solution",
    "value_function",
    "ConeLayout",
    "ConicProgram",
    "ConicSolution",
    "ProgramBuilder",
    "SolverOptions",
    "Status",
    "solve",
    "solve_many",
]
