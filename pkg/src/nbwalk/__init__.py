"""Non-backtracking random walks: exact counts, transition-matrix spectra,
Green's functions, torus mixing times and CLT diagnostics."""

__version__ = "0.1.0"

from .lattice import (  # noqa: E402
    StepSet,
    TorusSpec,
    hamming,
    hamming_step_transform,
    hypercube,
    hypercube_step_transform,
    nearest_neighbor,
    parse_step_set,
    step_transform,
)

__all__ = [
    "StepSet",
    "TorusSpec",
    "hamming",
    "hamming_step_transform",
    "hypercube",
    "hypercube_step_transform",
    "nearest_neighbor",
    "parse_step_set",
    "step_transform",
]
