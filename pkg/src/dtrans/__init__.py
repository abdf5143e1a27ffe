"""Optimal transport on the unit simplex under the Dirichlet cost."""

__version__ = "0.1.0"

from ._accel import backend_name
from .simplex import SimplexPoint, barycenter, cost, invert, odot, power, relative_entropy

__all__ = [
    "__version__",
    "backend_name",
    "SimplexPoint",
    "barycenter",
    "cost",
    "invert",
    "odot",
    "power",
    "relative_entropy",
]
