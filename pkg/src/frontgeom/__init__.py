"""Numerical geometry of bundle homomorphisms over closed surfaces.

Builds vector-bundle homomorphisms (differentials of vector fields, shape
operators, affine shape operators), locates and classifies their singular
sets, and verifies Gauss-Bonnet-type identities by quadrature.
"""

__version__ = "0.1.0"

from .errors import FrontgeomError
from .jets import Jet
from .expr import parse, evaluate, jet_eval

__all__ = ["FrontgeomError", "Jet", "parse", "evaluate", "jet_eval", "__version__"]
