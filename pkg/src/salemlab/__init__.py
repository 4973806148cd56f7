"""Random sparse measures on the discrete torus and the inequalities they satisfy."""

from .errors import (CapacityError, ConfigurationError, ConsistencyError, DomainError, PrecisionError,
                     SalemlabError)
from .grid import AtomicMeasure, GridFunction, TorusGrid, conv_power, convolve, dft, max_cube_mass

__all__ = [
    "AtomicMeasure", "GridFunction", "TorusGrid", "conv_power", "convolve", "dft", "max_cube_mass",
    "SalemlabError", "DomainError", "CapacityError", "PrecisionError", "ConfigurationError", "ConsistencyError",
]
