"""impedbench: desk-scale workbench for dissipative impedance boundary conditions."""

__version__ = "0.1.0"

from .errors import (
    InvalidInputError,
    InvariantViolationError,
    NumericalFailureError,
    WorkbenchError,
)

__all__ = [
    "__version__",
    "WorkbenchError",
    "InvalidInputError",
    "NumericalFailureError",
    "InvariantViolationError",
]
