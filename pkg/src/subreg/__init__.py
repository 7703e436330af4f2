"""Newton-type solvers and strong subregularity certificates for generalized equations."""

from .geq import (
    BoxNormalCone,
    ExplicitGraph,
    FiniteSelection,
    GeneralizedEquation,
    KktCone,
    NonnegativeOrthant,
    PolyhedralNormalCone,
    SmoothMap,
    ZeroMap,
)
from .numerics import CapExceeded, SingularMatrixError
from .polyhedral import Box, Polyhedron, polyhedral_cone
from .regularity import LinearMapAnalysis, ModulusEstimate
from .solvers import NewtonConfig, SolveReport

__version__ = "0.1.0"

__all__ = [
    "Box",
    "BoxNormalCone",
    "CapExceeded",
    "ExplicitGraph",
    "FiniteSelection",
    "GeneralizedEquation",
    "KktCone",
    "LinearMapAnalysis",
    "ModulusEstimate",
    "NewtonConfig",
    "NonnegativeOrthant",
    "PolyhedralNormalCone",
    "Polyhedron",
    "SingularMatrixError",
    "SmoothMap",
    "SolveReport",
    "ZeroMap",
    "polyhedral_cone",
]
