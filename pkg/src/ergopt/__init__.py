"""Transfer operators, involution kernels and subactions for expanding interval maps."""

__version__ = "0.1.0"

from .dynamics import ExpandingMapSpec, MapSpecError, PeriodicOrbit
from .expr import Expression, ExpressionError, parse_expression
from .kernel import KernelContext
from .symbolic import EventuallyPeriodicPoint, Word, parse_point, parse_word
from .transfer import EigenData, GridFunction, PotentialSpec, TransferOperator

__all__ = [
    "__version__",
    "EigenData",
    "EventuallyPeriodicPoint",
    "ExpandingMapSpec",
    "Expression",
    "ExpressionError",
    "GridFunction",
    "KernelContext",
    "MapSpecError",
    "PeriodicOrbit",
    "PotentialSpec",
    "TransferOperator",
    "Word",
    "parse_expression",
    "parse_point",
    "parse_word",
]
