"""Contact Hamiltonian mechanics on T*Q x R and Hamilton-Jacobi verification."""

from ._kernels import BACKEND
from .errors import (
    AssumptionError,
    ChartError,
    EvaluationError,
    ExprSyntaxError,
    IntegrabilityError,
    UnknownIdentifier,
)

__version__ = "0.1.0"
