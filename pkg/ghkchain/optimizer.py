"""

Quantized steepest descent over the discontinuity times of the control.

The decision variables are the integer step counts of the discontinuity
times on the control quantum.  A step moves every time against its gradient
component by ``floor(|h g| / dt_q)`` quanta, then the times are clamped to
``[0, T]`` and kept ordered.  Times that collide or reach the boundary stay
decision variables; the control they describe merges them, and their
gradient comes from a one-sided difference in the direction that separates
them again.

"""
from __future__ import division
import logging
import time
from collections import OrderedDict

import numpy as np

from ghkchain.analysis import cost
from ghkchain.chain import PiecewiseConstantControl
from ghkchain.tangent import gradient
from ghkchain.upwind import ue_simulate
from ghkchain.utilities import steps_of, GRID_RTOL
from ghkchain.wft import wft_solve

logger = logging.getLogger(__name__)

POLICIES = ('backtracking', 'fixed')

UNCHANGED = 'unchanged'
MAX_ITERATIONS = 'max_iterations'
PINNED = 'pinned'

SOLUTION_CACHE = 8


class DescentConfig(object):

    r"""Settings of the descent loop.

    Paramaters
    ----------

    h : float
        Base step, time per unit of cost gradient.

    quantum : float, optional
        Control time quantum dt_q; defaults to the control's own quantum,
        then to ``dt_1``.

    patience : int
        Iterations with unchanged J before stopping.

    max_iterations : int
        Hard cap on iterations.

    policy : {'backtracking', 'fixed'}
        Backtracking halves h until J strictly decreases or the quantized
        step vanishes; fixed always takes the step.

    tolerance : float
        J counts as unchanged when ``|dJ| <= tolerance * (1 + |J|)``.

    backend : {'ue', 'wft'}
        Solver used for J and for the gradient.

    probe : {'one-sided', 'symmetric'}
        Tangent probe mode of the Upwind-Euler gradient.

    """

    def __init__(self, h, quantum=None, patience=5, max_iterations=100, policy='backtracking',
                 tolerance=1e-9, backend='ue', probe='one-sided'):

        self.h = float(h)
        self.quantum = None if quantum is None else float(quantum)
        self.patience = int(patience)
        self.max_iterations = int(max_iterations)
        self.policy = policy
        self.tolerance = float(tolerance)
        self.backend = backend
        self.probe = probe

        if not self.h > 0:
            raise ValueError("the descent step h must be positive (got %g)" % self.h)
        if self.patience < 1:
            raise ValueError("patience must be at least 1 (got %d)" % self.patience)
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1 (got %d)" % self.max_iterations)
        if self.policy not in POLICIES:
            raise ValueError("unknown step policy %r, use one of %s" % (policy, POLICIES))
        if self.backend not in ('ue', 'wft'):
            raise ValueError("unknown solver backend %r" % (backend,))


class DescentRecord(object):
    """One row of the descent trace."""

    def __init__(self, iteration, taus, J1, J2, gradient, step, h):
        self.iteration = iteration
        self.taus = np.asarray(taus, dtype='double')
        self.J1 = float(J1)
        self.J2 = float(J2)
        self.gradient = np.asarray(gradient, dtype='double')
        self.step = np.asarray(step, dtype='double')
        self.h = float(h)

    @property
    def J(self):
        return self.J1 + self.J2


class DescentTrace(object):

    r"""Iterates of a descent run, the starting point first.

    `step` of each record is the move that led to it (zeros for the
    starting point) and `gradient` the gradient evaluated at it.

    """

    def __init__(self, records, stop_reason, quantum):
        self.records = list(records)
        self.stop_reason = stop_reason
        self.quantum = quantum

    def __len__(self):
        return len(self.records)

    @property
    def final(self):
        return self.records[-1]

    @property
    def J(self):
        return np.array([r.J for r in self.records])

    @property
    def taus(self):
        return np.array([r.taus for r in self.records])

    def rows(self):
        for r in self.records:
            yield ([r.iteration] + list(r.taus) + [r.J1, r.J2, r.J] + list(r.step) + [r.h])

    def header(self):
        K = self.taus.shape[1] if len(self) else 0
        return (['iteration'] + ['tau_%d' % (k + 1) for k in range(K)] + ['J1', 'J2', 'J']
                + ['step_%d' % (k + 1) for k in range(K)] + ['h'])


def _moves(gradient, h, quantum):
    g = np.asarray(gradient, dtype='double')
    return (-np.sign(g) * np.floor(np.abs(h * g) / quantum + GRID_RTOL)).astype(int)


def _last_step(horizon, quantum):
    return int(np.floor(horizon / quantum + GRID_RTOL))


def _project_steps(steps, n_max):
    steps = np.clip(np.asarray(steps, dtype=int), 0, n_max)
    return np.maximum.accumulate(steps) if steps.size else steps


def descent_step(taus, gradient, h, quantum, horizon):

    r"""One quantized steepest descent move.

    Each time moves by ``-sign(g_k) floor(|h g_k| / dt_q)`` quanta, then the
    times are clamped to ``[0, T]`` and made nondecreasing, so colliding
    times coincide.

    Returns
    -------
    taus : ndarray
        Exact multiples of `quantum`.

    """

    taus = np.atleast_1d(np.asarray(taus, dtype='double'))
    gradient = np.atleast_1d(np.asarray(gradient, dtype='double'))
    if taus.shape != gradient.shape:
        raise ValueError("%d times but %d gradient components" % (taus.shape[0], gradient.shape[0]))
    steps = steps_of(taus, quantum) if taus.size else np.zeros(0, dtype=int)
    new = _project_steps(steps + _moves(gradient, h, quantum), _last_step(horizon, quantum))
    return new * quantum


class _Evaluator(object):

    """Cached costs over raw step vectors."""

    def __init__(self, chain, control0, grid, costspec, config, quantum):
        self.chain = chain
        self.grid = grid
        self.costspec = costspec
        self.config = config
        self.quantum = quantum
        self.levels = control0.levels
        self.horizon = control0.horizon
        self.budget = control0.budget
        self.costs = {}
        self.solutions = OrderedDict()
        self.n_simulations = 0

    def control(self, steps):
        return PiecewiseConstantControl.from_raw(np.asarray(steps) * self.quantum, self.levels,
                                                 self.horizon, self.quantum, self.budget)

    def simulate(self, control):
        self.n_simulations += 1
        if self.config.backend == 'ue':
            return ue_simulate(self.chain, control, self.grid)
        return wft_solve(self.chain, control, control.horizon)

    def solution(self, steps):
        """Solution for raw steps; the most recent ones are kept."""
        key = tuple(int(s) for s in steps)
        if key in self.solutions:
            self.solutions.move_to_end(key)
            return self.solutions[key]
        solution = self.simulate(self.control(key))
        self.solutions[key] = solution
        if len(self.solutions) > SOLUTION_CACHE:
            self.solutions.popitem(last=False)
        return solution

    def __call__(self, steps):
        key = tuple(int(s) for s in steps)
        if key not in self.costs:
            self.costs[key] = cost(self.solution(key), self.costspec)
        return self.costs[key]

    def gradient(self, steps):

        """Gradient with respect to every raw time.  Isolated interior times
        read the tangent gradient of the merged control; the others take a
        one-sided difference towards the side that separates them."""

        steps = np.asarray(steps, dtype=int)
        K = steps.shape[0]
        n_max = _last_step(self.horizon, self.quantum)
        control = self.control(steps)
        g = np.zeros(K)

        tangent = None
        if control.n_discontinuities:
            trajectory = None
            if self.config.backend == 'ue':
                trajectory = self.solution(steps)
            tangent = gradient(self.chain, control, self.grid, self.costspec,
                               backend=self.config.backend, probe=self.config.probe,
                               trajectory=trajectory)
        eff_steps = np.round(control.taus / self.quantum).astype(int)

        J0 = self(steps).J
        for value in np.unique(steps):
            group = np.flatnonzero(steps == value)
            found = np.flatnonzero(eff_steps == value)
            if group.shape[0] == 1 and 0 < value < n_max and found.size:
                g[group[0]] = tangent.values[found[0]]
                continue
            for i, k in enumerate(group):
                if i == 0 and value > 0:
                    d = -1
                elif i == group.shape[0] - 1 and value < n_max:
                    d = 1
                else:
                    continue
                trial = steps.copy()
                trial[k] += d
                g[k] = (self(trial).J - J0) / (d * self.quantum)
        return g


def optimize(chain, control0, grid, costspec, config):

    r"""Run the quantized steepest descent from `control0`.

    Every iteration simulates, computes the gradient and moves the times.
    The run stops when J stayed unchanged for `config.patience` iterations
    in a row, when every time sits at 0 or T, or after
    `config.max_iterations`.

    Returns
    -------
    trace : `DescentTrace`

    """

    quantum = config.quantum or control0.quantum or grid.dt[0]
    ratio = quantum / grid.dt[0]
    if abs(ratio - round(ratio)) > GRID_RTOL * max(1.0, ratio) or round(ratio) < 1:
        raise ValueError("the control quantum %.9g is not a multiple of dt_1 = %.9g"
                         % (quantum, grid.dt[0]))

    start = time.time()
    evaluate = _Evaluator(chain, control0, grid, costspec, config, quantum)
    n_max = _last_step(control0.horizon, quantum)
    steps = steps_of(control0.taus, quantum) if control0.taus.size else np.zeros(0, dtype=int)
    K = steps.shape[0]

    current = evaluate(steps)
    g = evaluate.gradient(steps) if K else np.zeros(0)
    records = [DescentRecord(0, steps * quantum, current.J1, current.J2, g, np.zeros(K), config.h)]
    logger.info("iteration 0: taus %s  J = %.9g", np.round(steps * quantum, 9).tolist(), current.J)

    unchanged = 0
    stop_reason = MAX_ITERATIONS
    for iteration in range(1, config.max_iterations + 1):

        if K == 0 or np.all((steps == 0) | (steps == n_max)):
            stop_reason = PINNED
            break

        h = config.h
        new = _project_steps(steps + _moves(g, h, quantum), n_max)
        if config.policy == 'backtracking':
            while np.any(new != steps) and not evaluate(new).J < current.J:
                h /= 2
                logger.debug("backtracking: h = %.9g", h)
                new = _project_steps(steps + _moves(g, h, quantum), n_max)

        trial = evaluate(new)
        if abs(trial.J - current.J) <= config.tolerance * (1 + abs(current.J)):
            unchanged += 1
        else:
            unchanged = 0

        move = (new - steps) * quantum
        steps, current = new, trial
        g = evaluate.gradient(steps)
        records.append(DescentRecord(iteration, steps * quantum, current.J1, current.J2, g, move, h))
        logger.info("iteration %d: taus %s  J = %.9g  h = %.9g", iteration,
                    np.round(steps * quantum, 9).tolist(), current.J, h)

        if unchanged >= config.patience:
            stop_reason = UNCHANGED
            break

    logger.info("descent stopped (%s) after %d iterations, %d simulations, %.3f s",
                stop_reason, len(records) - 1, evaluate.n_simulations, time.time() - start)
    return DescentTrace(records, stop_reason, quantum)
