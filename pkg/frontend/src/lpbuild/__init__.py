"""lpbuild: builder front-end that emits lpforge IR and data documents.

The package never computes a matrix; everything it produces goes to the
core as JSON (optionally through the ``lpforge`` CLI via lpbuild.runner).
"""

__version__ = "0.1.0"

from . import examples, runner
from .data import Data
from .model import BuildError, Expr, Model, total

__all__ = ["BuildError", "Data", "Expr", "Model", "examples", "runner",
           "total"]
