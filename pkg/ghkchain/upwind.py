"""

Upwind-Euler simulation of the chain.

Each processor is advanced with the first order Upwind scheme on its own time
mesh ``dt_j = dx / v_j``.  With the CFL number equal to one the update is an
exact shift of the density row by one cell, so the solver keeps one rolling
row per processor together with the full inflow history, from which any past
row can be rebuilt on demand.  Queues in front of the processors follow the
explicit Euler method on the clock of the processor they feed.

"""
from __future__ import division
import logging
import time

import numpy as np

from ghkchain.base import ChainSolution
from ghkchain.onetime import auto_attr
from ghkchain.utilities import StepFunction, PiecewiseLinear, shift_row, GRID_RTOL

logger = logging.getLogger(__name__)

# queue values below this fraction of dt_j * mu_j are treated as roundoff
QUEUE_ATOL = 1e-9


class Grid(object):

    r"""Space and time meshes for one refinement level.

    Paramaters
    ----------

    chain : `SupplyChain`
        The chain to mesh.

    base_dx : float
        Coarsest cell size, it must divide the base unit Delta.

    nu : int
        Refinement level; ``dx = 2**-nu * base_dx``.

    horizon : float
        Final time T.

    """

    def __init__(self, chain, base_dx, nu, horizon):

        self.nu = int(nu)
        self.base_dx = float(base_dx)
        self.dx = self.base_dx * 2.0 ** (-self.nu)
        self.horizon = float(horizon)
        self.velocities = chain.velocities.copy()
        self.dt = self.dx / self.velocities
        self.N = np.round(chain.lengths / self.dx).astype(int)
        self.M = np.ceil(self.horizon / self.dt - GRID_RTOL).astype(int)

    @property
    def n_processors(self):
        return self.N.shape[0]

    @auto_attr
    def run_steps(self):

        r"""Steps simulated per processor.

        Past the horizon the run is padded so that each downstream processor
        always finds the upstream exit history it aggregates, and the outlet
        has one extra step for the last front crossing.

        """

        P = self.n_processors
        steps = np.zeros(P, dtype=int)
        steps[-1] = self.M[-1] + 1
        for j in range(P - 2, -1, -1):
            need = (steps[j + 1] + 2) * self.dt[j + 1] + self.dt[j]
            steps[j] = max(int(np.ceil(need / self.dt[j] - GRID_RTOL)), self.M[j] + 1)
        return steps

    def weights(self, j):
        """Quadrature weights of the steps n < M_j, the last clipped at T."""
        w = np.full(self.M[j], self.dt[j])
        if self.M[j]:
            w[-1] = self.horizon - (self.M[j] - 1) * self.dt[j]
        return w

    def midpoints(self, j):
        return np.arange(self.M[j]) * self.dt[j] + self.weights(j) / 2

    def level(self, j, t):
        """Time level holding time `t` on processor j's clock."""
        return int(np.floor(t / self.dt[j] + GRID_RTOL))


def build_grid(chain, base_dx, nu, horizon):

    r"""Mesh a chain at refinement `nu`.

    Raises
    ------
    ValueError
        When `base_dx` does not divide the base unit Delta or `nu` is negative.

    """

    if nu < 0:
        raise ValueError("the refinement level must be nonnegative (got %d)" % nu)
    if chain.base_unit is None:
        raise ValueError("the chain has no base unit Delta to mesh")
    ratio = chain.base_unit / base_dx
    if not base_dx > 0 or abs(ratio - round(ratio)) > GRID_RTOL * max(1.0, ratio) or round(ratio) < 1:
        raise ValueError("base_dx = %.9g does not divide Delta = %.9g" % (base_dx, chain.base_unit))
    return Grid(chain, base_dx, nu, horizon)


def sample_initial(chain, grid):
    r"""Initial rows ``rho_{j,0}((i dx)+)`` at the left cell edges."""
    rows = []
    for j, rho in enumerate(chain.initial_density):
        x = np.arange(grid.N[j]) * grid.dx
        rows.append(np.asarray(rho(x), dtype='double'))
    return rows


def upwind_step(row, ghost):
    r"""One Upwind step at CFL one: shift by one cell, the ghost value enters."""
    return shift_row(row, float(ghost))


def inflow_rate(q, f_up, mu):
    r"""Rate a queue releases into its processor: mu when loaded, else min(f_up, mu)."""
    if q > 0:
        return mu
    return min(f_up, mu)


def euler_queue_step(q, f_up, f_inc, dt, atol=0.0):

    r"""Explicit Euler step of a queue, clamped at zero.

    Returns
    -------
    q_next : float
        ``max(0, q + dt (f_up - f_inc))``, values up to `atol` count as zero.

    emptied : bool
        True when a loaded queue reaches zero within this step.

    """

    q_next = q + dt * (f_up - f_inc)
    if q_next <= atol:
        return 0.0, bool(q > 0)
    return q_next, False


def aggregate_history(exits, dt_up, dt_dn, n_steps):

    r"""Upstream exit fluxes seen on the downstream clock.

    For ``dt_up <= dt_dn`` each downstream step gets the time average of the
    upstream flux over its window, computed from exact interval overlaps.
    For ``dt_up > dt_dn`` step n reads the upstream flux at step
    ``floor(n dt_dn / dt_up)``.  Equal meshes pass the history through.

    Raises
    ------
    ValueError
        When the history does not cover the requested steps.

    """

    exits = np.asarray(exits, dtype='double')
    ratio = dt_dn / dt_up

    if abs(ratio - 1) <= GRID_RTOL:
        needed = n_steps
        if exits.shape[0] < needed:
            raise ValueError("missing upstream history: %d steps needed, %d recorded"
                             % (needed, exits.shape[0]))
        return exits[:n_steps].copy()

    if ratio > 1:
        r = int(round(ratio))
        if abs(ratio - r) <= GRID_RTOL * ratio:
            needed = n_steps * r
            if exits.shape[0] < needed:
                raise ValueError("missing upstream history: %d steps needed, %d recorded"
                                 % (needed, exits.shape[0]))
            return exits[:needed].reshape(n_steps, r).mean(axis=1)

        edges = np.arange(n_steps + 1) * dt_dn
        knots = np.arange(exits.shape[0] + 1) * dt_up
        if knots[-1] < edges[-1] * (1 - GRID_RTOL):
            raise ValueError("missing upstream history up to t = %.9g" % edges[-1])
        mass = np.concatenate(([0.0], np.cumsum(exits * dt_up)))
        return np.diff(np.interp(edges, knots, mass)) / dt_dn

    idx = np.floor(np.arange(n_steps) * ratio + GRID_RTOL).astype(int)
    if n_steps and idx[-1] >= exits.shape[0]:
        raise ValueError("missing upstream history: step %d needed, %d recorded"
                         % (idx[-1], exits.shape[0]))
    return exits[idx]


def aggregate_upstream_flux(n, exits, dt_up, dt_dn):
    r"""The aggregated upstream flux for downstream step `n`."""
    return aggregate_history(exits, dt_up, dt_dn, n + 1)[n]


class UETrajectory(ChainSolution):

    r"""Result of an Upwind-Euler run.

    Per processor ``j`` the trajectory holds the applied inflow
    ``inflow[j][n]`` (f_{j,inc}^n), the aggregated upstream flux
    ``upstream[j][n]`` (queues only), the queue levels ``queue[j][n]`` for
    ``n = 0 .. steps``, the exit fluxes ``exits[j][n] = v_j rho_{N-1}^n``
    and the rolling density row at the last level.

    """

    def __init__(self, chain, control, grid, initial_rows, inflow, upstream,
                 queue, emptied, exits, rows):

        ChainSolution.__init__(self, chain, control, grid.horizon)
        self.grid = grid
        self.initial_rows = initial_rows
        self.inflow = inflow
        self.upstream = upstream
        self.queue = queue
        self.emptied = emptied
        self.exits = exits
        self.rows = rows

    def density(self, j, n):

        r"""Density row of processor j at level n, rebuilt from the inflow
        history: cell i holds ``inflow[n-1-i] / v`` once the inflow has
        reached it and the initial sample ``rho0[i-n]`` before."""

        N = self.grid.N[j]
        v = self.chain.velocities[j]
        i = np.arange(N)
        src = n - 1 - i
        row = np.empty(N)
        fed = src >= 0
        row[fed] = self.inflow[j][src[fed]] / v
        row[~fed] = self.initial_rows[j][i[~fed] - n]
        return row

    @auto_attr
    def outflow_trace(self):
        """Exit flux of the last processor at levels 0 .. M_P."""
        P = self.chain.n_processors - 1
        return self.exits[P][:self.grid.M[P] + 1]

    def outflow_function(self):
        P = self.chain.n_processors - 1
        trace = self.exits[P]
        breaks = np.arange(1, trace.shape[0]) * self.grid.dt[P]
        return StepFunction(breaks, trace, 0.0, self.horizon)

    def queue_function(self, j):
        """Piecewise-linear interpolant of queue j."""
        nodes = np.arange(self.queue[j].shape[0]) * self.grid.dt[j]
        return PiecewiseLinear(nodes, self.queue[j])

    def queue_at(self, j, t):
        return float(self.queue_function(j)(t))

    def density_profile(self, j, t):
        row = self.density(j, self.grid.level(j, t))
        breaks = np.arange(1, row.shape[0]) * self.grid.dx
        return StepFunction(breaks, row, 0.0, self.chain.lengths[j])

    def processor_mass(self, j, t):
        return float(np.sum(self.density(j, self.grid.level(j, t))) * self.grid.dx)

    @auto_attr
    def emptying_steps(self):
        """Steps at which each queue ran empty."""
        return [np.flatnonzero(e) for e in self.emptied]


def ue_simulate(chain, control, grid, horizon=None):

    r"""Run the Upwind-Euler scheme over ``[0, T]``.

    Processors are simulated from the first to the last since information
    only travels downstream.  The first processor is fed by the control,
    each later one by its queue, whose input is the aggregated exit flux of
    the processor upstream.

    Paramaters
    ----------

    chain : `SupplyChain`
        A validated chain.

    control : `PiecewiseConstantControl`
        Its discontinuities must be multiples of ``dt_1``.

    grid : `Grid`
        From `build_grid`.

    horizon : float, optional
        Must match the grid horizon when given.

    Returns
    -------
    trajectory : `UETrajectory`

    """

    if horizon is not None and abs(horizon - grid.horizon) > GRID_RTOL * max(1.0, horizon):
        raise ValueError("horizon %.9g does not match the grid horizon %.9g" % (horizon, grid.horizon))

    start = time.time()
    P = chain.n_processors
    tau_steps = control.tau_steps(grid.dt[0])
    initial_rows = sample_initial(chain, grid)

    inflow, upstream, queue, emptied, exits, rows = [], [], [], [], [], []

    for j in range(P):
        n_run = grid.run_steps[j]
        v = chain.velocities[j]
        mu = chain.mus[j]
        dt = grid.dt[j]
        row = initial_rows[j].copy()

        f_inc = np.zeros(n_run)
        q = np.zeros(n_run + 1)
        flags = np.zeros(n_run, dtype=bool)
        e = np.zeros(n_run + 1)
        e[0] = v * row[-1]

        if j == 0:
            f_up = None
            f_inc[:] = control.levels[np.searchsorted(tau_steps, np.arange(n_run), side='right')]
        else:
            f_up = aggregate_history(exits[j - 1], grid.dt[j - 1], dt, n_run)
            q[0] = chain.initial_queues[j]
            atol = QUEUE_ATOL * dt * mu

        for n in range(n_run):
            if f_up is not None:
                f_inc[n] = inflow_rate(q[n], f_up[n], mu)
                q[n + 1], flags[n] = euler_queue_step(q[n], f_up[n], f_inc[n], dt, atol)
                if flags[n]:
                    logger.debug("queue %d empties at step %d (t = %.9g)", j + 1, n, (n + 1) * dt)
            row = upwind_step(row, f_inc[n] / v)
            e[n + 1] = v * row[-1]

        inflow.append(f_inc)
        upstream.append(f_up)
        queue.append(q)
        emptied.append(flags)
        exits.append(e)
        rows.append(row)

    logger.info("upwind-euler run: %d processors, nu = %d, %d steps, %.3f s",
                P, grid.nu, int(np.sum(grid.run_steps)), time.time() - start)

    return UETrajectory(chain, control, grid, initial_rows, inflow, upstream,
                        queue, emptied, exits, rows)
