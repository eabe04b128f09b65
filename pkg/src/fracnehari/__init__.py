"""Two positive solutions of a singular-critical fractional problem on an interval."""

from .operator import (DomainGrid, EigenPair, EmbeddingConstants, StiffnessForm,
                       assemble_stiffness, build_grid, estimate_constants,
                       principal_eigenpair)
from .energy import ProblemParams, energy, weak_residual
from .fibering import Branch, fiber_roots, lambda_star, nehari_project

__version__ = "0.1.0"

__all__ = [
    "DomainGrid", "EigenPair", "EmbeddingConstants", "StiffnessForm", "assemble_stiffness",
    "build_grid", "estimate_constants", "principal_eigenpair", "ProblemParams", "energy",
    "weak_residual", "Branch", "fiber_roots", "lambda_star", "nehari_project",
]
