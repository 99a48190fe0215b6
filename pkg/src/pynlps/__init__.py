# Version info
__version__ = "0.1.0"

from .nlps import NLPS
from . import data
from .errors import NLPSError
from .grid import TriangleField, TriangleGrid, build_grid
from .systems import FullyNonlinearSpec, LinearSystemSpec, QuasilinearSystemSpec

# Main exports
__all__ = [
    'NLPS',
    'NLPSError',
    'TriangleField',
    'TriangleGrid',
    'build_grid',
    'LinearSystemSpec',
    'QuasilinearSystemSpec',
    'FullyNonlinearSpec',
    'data',
]
