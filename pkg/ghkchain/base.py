"""

Verbosity handling and the base class shared by the two chain solvers.


"""
from __future__ import division
import logging

import numpy as np

from ghkchain.onetime import auto_attr

logger = logging.getLogger(__name__)


def set_verbose(verbose):

    r"""A convenience function for setting the verbosity of a run.

    Paramaters
    ----------

    verbose : int
        0 = silent
        1 = report one line per simulation and per descent iteration
        2 = report every event and step

    """

    if verbose >= 2:
        return True, True
    if verbose == 1:
        return True, False
    return False, False


def configure_logging(verbose=0):

    r"""Route the `set_verbose` levels onto the root logger.

    0 maps to WARNING, 1 to INFO and 2 to DEBUG.  Python warnings are captured
    into the logging system as well.

    """

    verbose, very_verbose = set_verbose(verbose)
    if very_verbose:
        level = logging.DEBUG
    elif verbose:
        level = logging.INFO
    else:
        level = logging.WARNING

    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')
    logging.getLogger().setLevel(level)
    logging.captureWarnings(True)
    return level


class ChainSolution(object):

    r""" Base class for the Upwind-Euler and front tracking solutions."""

    def __init__(self, chain, control, horizon):

        r"""Base class for supply chain solutions.

        Paramaters
        ----------

        chain : `SupplyChain` class instance
            The processors, their initial densities and initial queues.

        control : `PiecewiseConstantControl` class instance
            The inflow fed to the first processor.

        horizon : float
            The final time T of the run.

        """

        self.chain = chain
        self.control = control
        self.horizon = float(horizon)

    def queue_at(self, j, t):  # pragma: no cover
        raise NotImplementedError("Each solver must implement its own queue evaluation!")

    def density_profile(self, j, t):  # pragma: no cover
        raise NotImplementedError("Each solver must implement its own density profile!")

    def outflow_function(self):  # pragma: no cover
        raise NotImplementedError("Each solver must implement its own outflow!")

    def processor_mass(self, j, t):  # pragma: no cover
        raise NotImplementedError("Each solver must implement its own mass accounting!")

    @auto_attr
    def queue_indices(self):
        return list(range(1, self.chain.n_processors))

    @auto_attr
    def inflow_mass(self):
        return self.control.function.integral(0.0, self.horizon)

    def outflow_mass(self):
        return self.outflow_function().integral(0.0, self.horizon)

    def mass_balance(self, t=None):

        r"""Residual of the mass balance on ``[0, t]``.

        Returns a dict with the inflow, the stored mass in processors and
        queues (net of the initial content), the outflow and the residual
        ``inflow - stored - queued - outflow``.

        """

        if t is None:
            t = self.horizon
        chain = self.chain
        stored = np.sum([self.processor_mass(j, t) - self.processor_mass(j, 0.0)
                         for j in range(chain.n_processors)])
        queued = np.sum([self.queue_at(j, t) - chain.initial_queues[j]
                         for j in self.queue_indices])
        inflow = self.control.function.integral(0.0, t)
        outflow = self.outflow_function().integral(0.0, t)
        residual = inflow - stored - queued - outflow
        return dict(inflow=inflow, stored=float(stored), queued=float(queued),
                    outflow=outflow, residual=float(residual))
