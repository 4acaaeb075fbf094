"""
Supply chains of processors and queues: Upwind-Euler and wave-front
tracking solvers, tangent-vector gradients with respect to the switching
times of the inflow, and a quantized steepest descent on those times.
"""

__docformat__ = 'restructuredtext'

from .version import __version__

from . import utilities
from . import chain
from . import upwind
from . import wft
from . import tangent
from . import analysis
from . import optimizer
