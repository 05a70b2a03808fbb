"""Numerical laboratory for Calderón commutators with rough homogeneous kernels in the plane."""

__version__ = "0.1.0"

from .grid import BoxGrid, GridFunction  # noqa: E402
from .harness import CHECKERS, BoundReport  # noqa: E402
from .kernels import AngularKernel  # noqa: E402
from .operators import LipschitzSymbol  # noqa: E402

__all__ = ["__version__", "BoxGrid", "GridFunction", "AngularKernel", "LipschitzSymbol", "BoundReport", "CHECKERS"]
