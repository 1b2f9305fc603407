"""Constant-tracked Nash-Moser iteration, degenerate multiplication models,
polyhomogeneous edge-expansion calculus and leading-coefficient extraction."""

from .errors import NMKError
from .graded import GradedElement

__version__ = "0.1.0"

__all__ = ["GradedElement", "NMKError", "__version__"]
