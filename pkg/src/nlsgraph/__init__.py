"""Ground states of the nonlinear Schroedinger energy on noncompact metric graphs."""
from . import analytic, graph_core
from ._kernels import backend
from .errors import NLSGraphError

__version__ = "0.1.0"

__all__ = ["analytic", "graph_core", "backend", "NLSGraphError", "__version__"]
