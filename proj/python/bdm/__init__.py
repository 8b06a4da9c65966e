"""Mean-field binary decision model."""

from ._bdm import *  # noqa: F401,F403
from ._bdm import InvalidArgument, NumericalError, PreconditionError  # noqa: F401

__version__ = "0.1.0"
