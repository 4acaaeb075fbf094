"""

Cost evaluation, projections, cross-solver distances, convergence studies,
the finite-difference gradient oracle and cost surfaces.

"""
from __future__ import division
import logging

import numpy as np
import numexpr as ne
from scipy.stats import linregress

from ghkchain.chain import PiecewiseConstantControl, shift_control
from ghkchain.tangent import gradient
from ghkchain.upwind import UETrajectory, build_grid, ue_simulate
from ghkchain.utilities import (StepFunction, PiecewiseLinear, merged_knots, l1_distance,
                                parallel_map, GRID_RTOL)
from ghkchain.wft import wft_solve

logger = logging.getLogger(__name__)

OK = 'ok'
FAIL = 'fail'
STATIONARY = 'stationary'
SKIPPED = 'skipped'


class CostBreakdown(object):

    r"""The two terms of the cost.

    Attributes
    ----------
    J1 : float
        Weighted queue content integrated over ``[0, T]``.

    J2 : float
        Weighted squared outflow tracking error.

    queue_costs : ndarray
        J1 split per processor (entry 0 has no queue and is zero).

    """

    def __init__(self, J1, J2, queue_costs):
        self.J1 = float(J1)
        self.J2 = float(J2)
        self.queue_costs = np.asarray(queue_costs, dtype='double')

    @property
    def J(self):
        return self.J1 + self.J2

    def __repr__(self):
        return 'CostBreakdown(J1=%.9g, J2=%.9g, J=%.9g)' % (self.J1, self.J2, self.J)


def _check_horizon(solution, horizon):
    if abs(solution.horizon - horizon) > GRID_RTOL * max(1.0, horizon):
        raise ValueError("solution horizon %.9g does not match the cost horizon %.9g"
                         % (solution.horizon, horizon))


def _simpson(product, functions, a, b):

    """Integral of ``product(*functions)`` over [a, b], Simpson's rule on
    every piece between the merged knots.  Exact up to cubic integrands,
    which covers step and linear weights times squared step or linear
    terms."""

    edges = merged_knots(functions, a, b)
    lo, hi = edges[:-1], edges[1:]
    w = hi - lo
    fa = product(*[f(lo) for f in functions])
    fm = product(*[f((lo + hi) / 2) for f in functions])
    fb = product(*[f.left_limit(hi) for f in functions])
    return float(ne.evaluate('sum(w * (fa + 4 * fm + fb) / 6)'))


def _ue_cost(trajectory, costspec):

    grid = trajectory.grid
    P = trajectory.chain.n_processors
    queue_costs = np.zeros(P)

    for j in trajectory.queue_indices:
        M, dt = grid.M[j], grid.dt[j]
        q = trajectory.queue[j]
        w = grid.weights(j)
        a = costspec.alpha1(grid.midpoints(j))
        q0 = q[:M]
        q1 = q[1:M + 1].copy()
        # last step clipped at T
        q1[-1] = q[M - 1] + (q[M] - q[M - 1]) * w[-1] / dt
        queue_costs[j] = ne.evaluate('sum(a * w * (q0 + q1) / 2)')

    J2 = 0.0
    if costspec.tracks_outflow:
        j = P - 1
        M = grid.M[j]
        w = grid.weights(j)
        mids = grid.midpoints(j)
        a = costspec.alpha2(mids)
        psi = costspec.psi(mids)
        f = trajectory.exits[j][:M]
        J2 = ne.evaluate('sum(a * w * (f - psi) ** 2)')

    return CostBreakdown(np.sum(queue_costs), J2, queue_costs)


def _exact_cost(solution, costspec):

    T = solution.horizon
    P = solution.chain.n_processors
    queue_costs = np.zeros(P)
    for j in solution.queue_indices:
        queue_costs[j] = _simpson(lambda a, q: a * q,
                                  (costspec.alpha1, solution.queue_functions[j]), 0.0, T)
    J2 = 0.0
    if costspec.tracks_outflow:
        J2 = _simpson(lambda a, f, psi: a * (f - psi) ** 2,
                      (costspec.alpha2, solution.outflow_function(), costspec.psi), 0.0, T)
    return CostBreakdown(np.sum(queue_costs), J2, queue_costs)


def cost(solution, costspec):

    r"""Evaluate the cost of a solution.

    Upwind-Euler runs use the trapezoid rule on the queue series and the
    midpoint rule on the per-step outflow.  Front tracking solutions are
    integrated exactly.

    Raises
    ------
    ValueError
        When the solution and the cost disagree on the horizon.

    """

    _check_horizon(solution, costspec.horizon)
    if isinstance(solution, UETrajectory):
        return _ue_cost(solution, costspec)
    return _exact_cost(solution, costspec)


def project_pc(row, dx, offset=0.0):
    r"""Piecewise-constant function of x taking ``row[i]`` on
    ``[offset + i dx, offset + (i + 1) dx)``."""
    row = np.asarray(row, dtype='double')
    breaks = offset + np.arange(1, row.shape[0]) * dx
    return StepFunction(breaks, row, offset, offset + row.shape[0] * dx)


def project_pl(series, dt):
    r"""Piecewise-linear interpolant of a series sampled every `dt`."""
    series = np.asarray(series, dtype='double')
    return PiecewiseLinear(np.arange(series.shape[0]) * dt, series)


def solver_distance(ue, wft, t=None, times=None):

    r"""Distance between an Upwind-Euler and a front tracking solution.

    The L1 distance of the projected densities summed over the processors,
    plus the absolute queue differences, at time `t` (default T).  With
    `times` the largest distance over those times is returned.

    """

    if abs(ue.horizon - wft.horizon) > GRID_RTOL * max(1.0, ue.horizon):
        raise ValueError("solutions cover different horizons (%.9g and %.9g)"
                         % (ue.horizon, wft.horizon))
    if times is not None:
        return max(solver_distance(ue, wft, s) for s in times)
    if t is None:
        t = ue.horizon
    if t < 0 or t > ue.horizon * (1 + GRID_RTOL):
        raise ValueError("distance requested at t = %.9g outside [0, %.9g]" % (t, ue.horizon))

    grid = ue.grid
    total = 0.0
    for j, length in enumerate(ue.chain.lengths):
        row = ue.density(j, grid.level(j, t))
        total += l1_distance(project_pc(row, grid.dx), wft.density_profile(j, t), 0.0, length)
    for j in ue.queue_indices:
        total += abs(project_pl(ue.queue[j], grid.dt[j])(t) - wft.queue_at(j, t))
    return float(total)


class ConvergenceReport(object):

    r"""Solver distances over a refinement ladder.

    `orders[i]` is ``log2(distances[i] / distances[i + 1])``; infinite when
    the finer distance vanishes.  `fitted_order` is the negated slope of
    ``log2(distance)`` against nu over all positive distances.

    """

    def __init__(self, nus, dxs, distances, residuals, costs):
        self.nus = np.asarray(nus)
        self.dxs = np.asarray(dxs, dtype='double')
        self.distances = np.asarray(distances, dtype='double')
        self.residuals = np.asarray(residuals, dtype='double')
        self.costs = np.asarray(costs, dtype='double')

    @property
    def orders(self):
        d = self.distances
        out = np.full(d.shape[0] - 1, np.inf)
        nonzero = d[1:] > 0
        out[nonzero] = np.log2(d[:-1][nonzero] / d[1:][nonzero])
        return out

    @property
    def fitted_order(self):
        keep = self.distances > 0
        if np.sum(keep) < 2:
            return np.inf
        return -linregress(self.nus[keep], np.log2(self.distances[keep])).slope

    @property
    def mass_constants(self):
        """Upwind-Euler mass residual per unit dx."""
        return np.abs(self.residuals) / self.dxs

    def rows(self):
        orders = np.concatenate(([np.nan], self.orders))
        for nu, dx, dist, order in zip(self.nus, self.dxs, self.distances, orders):
            yield nu, dx, dist, order


def _ladder_worker(bundle):
    chain, control, costspec, base_dx, nu, wft = bundle
    grid = build_grid(chain, base_dx, nu, control.horizon)
    ue = ue_simulate(chain, control, grid)
    balance = ue.mass_balance()
    return solver_distance(ue, wft), balance['residual'], cost(ue, costspec).J


def convergence_order(chain, control, costspec, base_dx, nu_list, ncpus=1):

    r"""Measure the Upwind-Euler error against front tracking at t = T.

    Paramaters
    ----------

    chain, control, costspec
        The problem.

    base_dx : float
        Mesh width at nu = 0.

    nu_list : sequence of int
        Strictly ascending refinement levels, at least three.

    ncpus : int
        Refinement levels run in parallel with more than one.

    Returns
    -------
    report : `ConvergenceReport`

    """

    nu_list = [int(nu) for nu in nu_list]
    if len(nu_list) < 3:
        raise ValueError("a convergence study needs at least three refinement levels")
    if np.any(np.diff(nu_list) <= 0):
        raise ValueError("refinement levels must be strictly ascending (got %s)" % nu_list)

    wft = wft_solve(chain, control, control.horizon)
    bundles = [(chain, control, costspec, base_dx, nu, wft) for nu in nu_list]
    results = parallel_map(_ladder_worker, bundles, ncpus)

    report = ConvergenceReport(nu_list, [base_dx * 2.0 ** -nu for nu in nu_list],
                               [r[0] for r in results], [r[1] for r in results],
                               [r[2] for r in results])
    for nu, dx, dist, order in report.rows():
        logger.info("nu = %d  dx = %.9g  distance = %.9g  order = %.4g", nu, dx, dist, order)
    return report


def evaluate(chain, control, grid, costspec, backend='ue'):
    """Simulate with the chosen solver and return the `CostBreakdown`."""
    if backend == 'ue':
        return cost(ue_simulate(chain, control, grid), costspec)
    if backend == 'wft':
        return cost(wft_solve(chain, control, control.horizon), costspec)
    raise ValueError("unknown solver backend %r" % (backend,))


def _evaluate_worker(bundle):
    return evaluate(*bundle).J


def _probe_controls(control, k, step):
    if not 0 <= k < control.n_discontinuities:
        raise ValueError("no discontinuity %d in a control with %d" % (k, control.n_discontinuities))
    edges = np.concatenate(([0.0], control.taus, [control.horizon]))
    lo, hi = edges[k], edges[k + 2]
    tau = control.taus[k]
    slack = GRID_RTOL * max(1.0, control.horizon)
    if tau - step <= lo + slack or tau + step >= hi - slack:
        raise ValueError("shifting tau_%d = %.9g by %.9g leaves (%.9g, %.9g)"
                         % (k + 1, tau, step, lo, hi))
    xi = np.zeros(control.n_discontinuities)
    xi[k] = step
    return shift_control(control, xi), shift_control(control, -xi)


def fd_gradient(chain, control, grid, costspec, k, backend='ue', step=None):

    r"""Central finite difference of the cost with respect to tau_k.

    The step defaults to the control quantum, or ``dt_1`` without one.

    Raises
    ------
    ValueError
        When tau_k shifted by the step would reach 0, T or a neighbour.

    """

    step = _default_step(control, grid) if step is None else step
    plus, minus = _probe_controls(control, k, step)
    J_plus = evaluate(chain, plus, grid, costspec, backend).J
    J_minus = evaluate(chain, minus, grid, costspec, backend).J
    return (J_plus - J_minus) / (2 * step)


def _default_step(control, grid):
    return control.quantum if control.quantum is not None else grid.dt[0]


def fd_gradients(chain, control, grid, costspec, backend='ue', ncpus=1):

    r"""Central differences for every discontinuity, NaN where the shift is
    invalid.  The probe simulations fan out over `ncpus`."""

    step = _default_step(control, grid)
    K = control.n_discontinuities
    bundles, valid = [], []
    for k in range(K):
        try:
            plus, minus = _probe_controls(control, k, step)
        except ValueError:
            continue
        valid.append(k)
        bundles.extend([(chain, plus, grid, costspec, backend), (chain, minus, grid, costspec, backend)])

    values = parallel_map(_evaluate_worker, bundles, ncpus)
    out = np.full(K, np.nan)
    for i, k in enumerate(valid):
        out[k] = (values[2 * i] - values[2 * i + 1]) / (2 * step)
    return out


class GradientCheck(object):

    r"""Tangent gradient against central differences, one entry per
    discontinuity.

    `gradient` keeps the full `GradientVector`.  `statuses` holds ``'ok'``,
    ``'fail'``, ``'stationary'`` (the FD value is below the noise floor) or ``'skipped'``
    (no valid shift).

    """

    def __init__(self, gradient, fd, statuses, rtol, floor):
        self.gradient = gradient
        self.taus = gradient.taus
        self.tangent = gradient.values
        self.fd = np.asarray(fd, dtype='double')
        self.statuses = list(statuses)
        self.rtol = rtol
        self.floor = floor

    @property
    def relative_errors(self):
        with np.errstate(divide='ignore', invalid='ignore'):
            return np.abs(self.tangent - self.fd) / np.abs(self.fd)

    @property
    def passed(self):
        return FAIL not in self.statuses

    def rows(self):
        for k, (tau, g, fd, rel, status) in enumerate(zip(self.taus, self.tangent, self.fd,
                                                          self.relative_errors, self.statuses)):
            yield k + 1, tau, g, fd, rel, status


def gradient_check(chain, control, grid, costspec, backend='ue', probe='one-sided',
                   rtol=0.05, noise_factor=10.0, ncpus=1):

    r"""Compare the tangent gradient with the finite-difference oracle.

    An entry passes when the relative error is at most `rtol`.  Differences
    below the floor ``noise_factor * dt_q * (1 + |J|)`` are stationary.

    """

    trajectory = ue_simulate(chain, control, grid)
    J = cost(trajectory, costspec).J
    tangent = gradient(chain, control, grid, costspec, backend=backend, probe=probe,
                       trajectory=trajectory if backend == 'ue' else None)
    fd = fd_gradients(chain, control, grid, costspec, backend=backend, ncpus=ncpus)
    floor = noise_factor * _default_step(control, grid) * (1 + abs(J))

    statuses = []
    for g, d in zip(tangent.values, fd):
        if np.isnan(d):
            statuses.append(SKIPPED)
        elif abs(d) <= floor:
            statuses.append(STATIONARY)
        elif abs(g - d) <= rtol * abs(d):
            statuses.append(OK)
        else:
            statuses.append(FAIL)

    check = GradientCheck(tangent, fd, statuses, rtol, floor)
    for k, tau, g, d, rel, status in check.rows():
        logger.info("tau_%d = %.9g  tangent %.9g  fd %.9g  %s", k, tau, g, d, status)
    return check


class CostSurface(object):
    """Cost on a (tau_1, tau_2) grid, NaN where tau_1 >= tau_2 or a time
    leaves (0, T)."""

    def __init__(self, tau1, tau2, values):
        self.tau1 = np.asarray(tau1, dtype='double')
        self.tau2 = np.asarray(tau2, dtype='double')
        self.values = np.asarray(values, dtype='double')

    def argmin(self):
        i, j = np.unravel_index(np.nanargmin(self.values), self.values.shape)
        return self.tau1[i], self.tau2[j], self.values[i, j]

    def rows(self):
        for i, a in enumerate(self.tau1):
            for j, b in enumerate(self.tau2):
                yield a, b, self.values[i, j]


def cost_surface(chain, control, grid, costspec, tau1_values, tau2_values, backend='ue', ncpus=1):

    r"""Evaluate J over every pair of the two discontinuity times.

    The levels of `control` are kept, only its two times move.

    """

    if control.n_discontinuities != 2:
        raise ValueError("a cost surface needs a control with two discontinuities (got %d)"
                         % control.n_discontinuities)

    T = control.horizon
    tau1 = np.asarray(tau1_values, dtype='double')
    tau2 = np.asarray(tau2_values, dtype='double')
    cells, bundles = [], []
    for i, a in enumerate(tau1):
        for j, b in enumerate(tau2):
            if 0 < a < b < T:
                trial = PiecewiseConstantControl([a, b], control.levels, T,
                                                 control.quantum, control.budget)
                cells.append((i, j))
                bundles.append((chain, trial, grid, costspec, backend))

    values = np.full((tau1.shape[0], tau2.shape[0]), np.nan)
    for (i, j), J in zip(cells, parallel_map(_evaluate_worker, bundles, ncpus)):
        values[i, j] = J
    return CostSurface(tau1, tau2, values)
