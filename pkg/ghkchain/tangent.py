"""

Generalized tangent vectors and the cost gradient with respect to the
discontinuity times of the control.

A probe shifts one control discontinuity.  The shift travels with the density
front it displaced (``xi``, a downstream displacement in space units, positive
when the front is ahead), is transferred to the queue loads (``eta``, in
parts) when the front meets a queue, and comes back out as a displaced
emptying front.  Along the way the probe's first order effect on the cost is
accumulated in ``Y1`` (queue term) and ``Y2`` (outflow term).

The product of a shift and the density jump it sits on is its moment (in
parts).  Every interaction rule below conserves the total moment of a probe,
which is the tangent norm.

"""
from __future__ import division
import logging

import numpy as np

from ghkchain.chain import PiecewiseConstantControl
from ghkchain.upwind import ue_simulate
from ghkchain.utilities import shift_row, shift_rows, GRID_RTOL
from ghkchain.wft import wft_solve

logger = logging.getLogger(__name__)

CASES = ('a11', 'a12', 'a2', 'b')


class TangentField(object):

    r"""Tangent state for a batch of probes on an Upwind-Euler grid.

    Attributes
    ----------
    xi : list of ndarray
        Per processor, the shift rows of shape ``(probes, N_j)``.

    eta : ndarray
        Queue shifts, shape ``(probes, P)``.

    Y1 : ndarray
        Queue-cost accumulators, shape ``(probes, P)``.

    Y2 : ndarray
        Outflow-cost accumulators, shape ``(probes,)``.

    injection_step, injection : ndarray
        Step at which, and shift with which, each probe enters the ghost
        cell of the first processor.

    """

    def __init__(self, grid, n_probes):

        P = grid.n_processors
        self.grid = grid
        self.xi = [np.zeros((n_probes, grid.N[j])) for j in range(P)]
        self.eta = np.zeros((n_probes, P))
        self.Y1 = np.zeros((n_probes, P))
        self.Y2 = np.zeros(n_probes)
        self.injection_step = np.zeros(n_probes, dtype=int)
        self.injection = np.zeros(n_probes)
        self.discontinuity = np.zeros(n_probes, dtype=int)
        self.dropped = np.zeros(n_probes)
        self.events = []

    @property
    def n_probes(self):
        return self.injection.shape[0]

    @classmethod
    def combine(cls, fields):
        """Stack single-probe fields into one batch."""
        out = cls(fields[0].grid, len(fields))
        for i, field in enumerate(fields):
            out.injection_step[i] = field.injection_step[0]
            out.injection[i] = field.injection[0]
            out.discontinuity[i] = field.discontinuity[0]
        return out

    def ghost(self, n):
        """Shift entering the first processor's ghost cell at step n."""
        return np.where(self.injection_step == n, self.injection, 0.0)

    def is_zero(self):
        return (not np.any(self.eta) and not np.any(self.Y1) and not np.any(self.Y2)
                and not any(np.any(x) for x in self.xi))


class GradientVector(object):

    r"""Cost gradient with respect to the discontinuity times.

    ``values[k] = Y1[k].sum() + Y2[k]`` is dJ/dtau_k.  `Y1` and `Y2` are
    reported as the cost response to a unit delay of tau_k.

    """

    def __init__(self, taus, values, Y1, Y2, backend='ue'):
        self.taus = np.asarray(taus, dtype='double')
        self.values = np.asarray(values, dtype='double')
        self.Y1 = np.asarray(Y1, dtype='double')
        self.Y2 = np.asarray(Y2, dtype='double')
        self.backend = backend

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, k):
        return self.values[k]

    def __array__(self, dtype=None):
        return np.asarray(self.values, dtype=dtype)

    def __repr__(self):
        return 'GradientVector(%s, backend=%r)' % (np.round(self.values, 9).tolist(), self.backend)


def init_tangent(k, sign, grid, control, scale=1.0):

    r"""Tangent field of a single probe on discontinuity `k`.

    The probe injects ``v_1 * sign * scale * dt_1`` into the ghost cell of
    the first processor at step ``n(k) = tau_k / dt_1``; ``sign = +1`` moves
    the discontinuity one step earlier.  Everything else starts at zero.

    Raises
    ------
    ValueError
        When tau_k is not a multiple of dt_1.

    """

    steps = control.tau_steps(grid.dt[0])
    field = TangentField(grid, 1)
    field.discontinuity[0] = k
    field.injection_step[0] = steps[k]
    field.injection[0] = grid.velocities[0] * sign * scale * grid.dt[0]
    return field


def advect_tangent(row, ghost=0.0):
    r"""Shift a tangent row one cell downstream, exactly like the density."""
    return shift_row(np.asarray(row, dtype='double'), float(ghost))


def queue_interaction(case, xi_in, eta, rho_old, rho_new, v_up, v_dn, mu):

    r"""Transfer of shifts across queue j.

    Paramaters
    ----------

    case : {'a11', 'a12', 'a2', 'b'}
        a11 a front reaches an empty queue that stays empty,
        a12 a front reaches an empty queue and starts loading it,
        a2 a front reaches a loaded queue,
        b the queue runs empty.

    xi_in : float or ndarray
        Shift of the arriving front (upstream space units).

    eta : float or ndarray
        Queue shift before the interaction.

    rho_old, rho_new : float
        Upstream exit density before and after the front.  For case b
        `rho_new` is the upstream density draining the queue.

    v_up, v_dn : float
        Velocities of the upstream and downstream processors.

    mu : float
        Rate of the downstream processor.

    Returns
    -------
    xi_out, eta_new

    """

    xi_in = np.asarray(xi_in, dtype='double')
    eta = np.asarray(eta, dtype='double')

    if case == 'a11':
        return (v_dn / v_up) * xi_in, np.zeros_like(eta)
    if case == 'a12':
        return (v_dn / v_up) * xi_in, xi_in * (v_up * rho_new - mu) / v_up + eta
    if case == 'a2':
        return np.zeros_like(xi_in), xi_in * (rho_new - rho_old) + eta
    if case == 'b':
        denom = v_up * rho_new - mu
        assert denom != 0, "a queue cannot empty while its inflow equals its rate"
        return v_dn * eta / denom, np.zeros_like(eta)
    raise ValueError("unknown queue interaction case %r" % (case,))


def accumulate_y1(Y1, eta, q_now, q_next, alpha1, dt):

    r"""Queue-cost accumulator for one step.

    A loaded queue adds ``alpha1 eta dt``, a queue emptying within the step
    adds half of it and an empty queue adds nothing.

    """

    if q_next > 0:
        return Y1 + alpha1 * eta * dt
    if q_now > 0:
        return Y1 + 0.5 * alpha1 * eta * dt
    return Y1


def accumulate_y2(Y2, f_old, f_new, psi, alpha2, xi, v_out, weight=1.0):
    r"""Outflow-cost change from a front of shift `xi` leaving the last
    processor, the outflow switching from `f_old` to `f_new`."""
    return Y2 + alpha2 * ((f_new - psi) ** 2 - (f_old - psi) ** 2) * xi / v_out * weight


def _moment_norm(*parts):
    return np.sum([np.abs(np.asarray(p)) for p in parts], axis=0)


def _arrival(a, eta, loaded, f_old, f_new, v_up, v_dn, mu):

    """Route an arriving moment `a` through an empty or loaded queue.
    Returns the moment passed into the downstream ghost cell, the new queue
    shift and the case."""

    jump = (f_new - f_old) / v_up
    if jump == 0:
        # fronts cancelling inside one aggregation window
        if loaded:
            return np.zeros_like(a), eta + a, 'a2'
        return a, np.zeros_like(eta), 'a11'

    xi_in = a / jump
    if loaded:
        xi_out, eta_new = queue_interaction('a2', xi_in, eta, f_old / v_up, f_new / v_up, v_up, v_dn, mu)
        return np.zeros_like(a), eta_new, 'a2'
    if f_new <= mu:
        xi_out, eta_new = queue_interaction('a11', xi_in, eta, f_old / v_up, f_new / v_up, v_up, v_dn, mu)
        return xi_out * (f_new - f_old) / v_dn, eta_new, 'a11'
    xi_out, eta_new = queue_interaction('a12', xi_in, eta, f_old / v_up, f_new / v_up, v_up, v_dn, mu)
    return xi_out * (mu - f_old) / v_dn, eta_new, 'a12'


def distribute_moments(moments, dt_up, dt_dn, n_changes):

    r"""Move moments of upstream exit fronts onto the downstream clock.

    A front leaving upstream at ``l dt_up`` inside downstream window n0 is
    split between changes n0 and n0 + 1 in proportion to the part of the
    window it covers, matching the time averaging of the fluxes.  With a
    coarser upstream clock the whole moment lands on the first downstream
    step that reads the new upstream value.

    """

    K = moments.shape[0]
    out = np.zeros((K, n_changes))
    ratio = dt_dn / dt_up
    for l in np.flatnonzero(np.any(moments != 0, axis=0)):
        if abs(ratio - 1) <= GRID_RTOL:
            targets = ((l, 1.0),)
        elif ratio > 1:
            t_l = l * dt_up
            n0 = int(np.floor(t_l / dt_dn + GRID_RTOL))
            theta = ((n0 + 1) * dt_dn - t_l) / dt_dn
            if theta >= 1 - GRID_RTOL:
                targets = ((n0, 1.0),)
            else:
                targets = ((n0, theta), (n0 + 1, 1.0 - theta))
        else:
            targets = ((int(np.ceil(l / ratio - GRID_RTOL)), 1.0),)
        for n, share in targets:
            if n < n_changes:
                out[:, n] += share * moments[:, l]
    return out


def propagate_ue(field, trajectory, costspec, record_events=False):

    r"""Propagate a tangent field alongside an Upwind-Euler trajectory.

    Processors are swept from upstream to downstream.  On each one the shift
    rows advect with the density rows; at every change of the aggregated
    upstream flux the queue interaction rules are applied (an emptying queue
    first, then the arriving front), and the moment sent into the ghost cell
    is turned back into a shift by dividing by the ghost jump.  Y1 follows
    the queue load, Y2 collects the fronts leaving the last processor.

    Returns
    -------
    field : `TangentField`
        The same object, filled in.

    """

    chain, grid = trajectory.chain, trajectory.grid
    P = chain.n_processors
    K = field.n_probes
    moments_up = None
    warned = False

    for j in range(P):
        v = chain.velocities[j]
        mu = chain.mus[j]
        dt = grid.dt[j]
        n_run = grid.run_steps[j]
        f_inc = trajectory.inflow[j]
        exits = trajectory.exits[j]
        rows = field.xi[j]
        exit_xi = np.zeros((K, n_run + 1))

        if j > 0:
            v_up = chain.velocities[j - 1]
            f_up = trajectory.upstream[j]
            q = trajectory.queue[j]
            arrivals = distribute_moments(moments_up, grid.dt[j - 1], dt, n_run)
            M = grid.M[j]
            w = grid.weights(j)
            a1 = costspec.alpha1(grid.midpoints(j))
            eta = np.zeros(K)
            Y1 = np.zeros(K)

        for n in range(n_run):
            if j == 0:
                ghost_xi = field.ghost(n)
            else:
                ghost_m = np.zeros(K)
                if n >= 1:
                    if q[n - 1] > 0 and q[n] == 0 and np.any(eta):
                        norm_in = _moment_norm(eta)
                        xi_out, eta = queue_interaction('b', 0.0, eta, f_up[n - 1] / v_up,
                                                        f_up[n - 1] / v_up, v_up, v, mu)
                        ghost_m = ghost_m + xi_out * (f_up[n - 1] - mu) / v
                        if record_events:
                            field.events.append((j, n, 'b', norm_in, _moment_norm(ghost_m, eta)))
                    a = arrivals[:, n]
                    if np.any(a):
                        norm_in = _moment_norm(a, eta)
                        passed, eta, case = _arrival(a, eta, q[n] > 0, f_up[n - 1], f_up[n], v_up, v, mu)
                        if record_events:
                            field.events.append((j, n, case, norm_in, _moment_norm(passed, eta)))
                        ghost_m = ghost_m + passed

                ghost_xi = np.zeros(K)
                if np.any(ghost_m):
                    jump = (f_inc[n] - f_inc[n - 1]) / v if n >= 1 else 0.0
                    if jump != 0:
                        ghost_xi = ghost_m / jump
                    else:
                        field.dropped += np.abs(ghost_m)
                        if not warned:
                            logger.warning("processor %d: tangent moment dropped at step %d, "
                                           "the inflow does not jump there", j + 1, n)
                            warned = True

                if n < M:
                    Y1 = accumulate_y1(Y1, eta, q[n], q[n + 1], a1[n], w[n])

            rows = shift_rows(rows, ghost_xi)
            exit_xi[:, n + 1] = rows[:, -1]

        field.xi[j] = rows
        if j > 0:
            field.eta[:, j] = eta
            field.Y1[:, j] = Y1

        jumps = np.diff(exits) / v
        moments_up = np.zeros((K, n_run + 1))
        moments_up[:, 1:] = exit_xi[:, 1:] * jumps[np.newaxis, :]

        if j == P - 1:
            M = grid.M[j]
            w = grid.weights(j)
            mids = grid.midpoints(j)
            for n in range(1, M + 1):
                if exits[n] != exits[n - 1] and np.any(exit_xi[:, n]):
                    field.Y2 = accumulate_y2(field.Y2, exits[n - 1], exits[n],
                                             costspec.psi(mids[n - 1]), costspec.alpha2(mids[n - 1]),
                                             exit_xi[:, n], v, w[n - 1] / dt)

    return field


class WFTTangentObserver(object):

    r"""Carries unit probes through a front tracking run.

    Probe k starts as the shift ``v_1`` (the discontinuity moved one time
    unit earlier) on the wave the k-th control jump creates.  Y1 integrates
    the queue shifts exactly between events.

    """

    def __init__(self, chain, control, costspec):

        self.chain = chain
        self.costspec = costspec
        K = control.n_discontinuities
        P = chain.n_processors
        self.K = K
        self.xi = {}
        self.eta = np.zeros((P, K))
        self.Y1 = np.zeros((K, P))
        self.Y2 = np.zeros(K)
        self.last_t = np.zeros(P)
        self.loaded = np.zeros(P, dtype=bool)
        self.events = []

    def start(self, state):
        for queue in state.queues[1:]:
            self.loaded[queue.index] = queue.loaded

    def _flush(self, j, t):
        if self.loaded[j] and np.any(self.eta[j]):
            self.Y1[:, j] += self.eta[j] * self.costspec.alpha1.integral(self.last_t[j], t)
        self.last_t[j] = t

    def control_jump(self, state, k, t, idx):
        if idx is not None:
            xi = np.zeros(self.K)
            xi[k] = self.chain.velocities[0]
            self.xi[(0, idx)] = xi

    def wave_hits_queue(self, state, queue, t, src, f_old, f_new, was_loaded, new_idx):
        j = queue.index
        self._flush(j, t)
        xi_in = self.xi.get(src)
        if xi_in is not None:
            v_up = self.chain.velocities[j - 1]
            v = self.chain.velocities[j]
            rho_old, rho_new = f_old / v_up, f_new / v_up
            norm_in = _moment_norm(xi_in * (rho_new - rho_old), self.eta[j])
            if was_loaded:
                case = 'a2'
            elif f_new <= queue.mu:
                case = 'a11'
            else:
                case = 'a12'
            xi_out, self.eta[j] = queue_interaction(case, xi_in, self.eta[j], rho_old, rho_new,
                                                    v_up, v, queue.mu)
            passed = np.zeros(self.K)
            if case != 'a2' and new_idx is not None:
                jump = (state.inlet_values[j][new_idx] - state.inlet_values[j][new_idx - 1]) / v
                self.xi[(j, new_idx)] = xi_out
                passed = xi_out * jump
            self.events.append((j, t, case, norm_in, _moment_norm(passed, self.eta[j])))
        self.loaded[j] = queue.loaded

    def queue_empties(self, state, queue, t, f_old, idx):
        j = queue.index
        self._flush(j, t)
        if np.any(self.eta[j]):
            v_up = self.chain.velocities[j - 1]
            v = self.chain.velocities[j]
            norm_in = _moment_norm(self.eta[j])
            xi_out, self.eta[j] = queue_interaction('b', 0.0, self.eta[j], f_old / v_up,
                                                    queue.f_up / v_up, v_up, v, queue.mu)
            if idx is not None:
                self.xi[(j, idx)] = xi_out
            passed = xi_out * (queue.f_inc - f_old) / v
            self.events.append((j, t, 'b', norm_in, _moment_norm(passed, self.eta[j])))
        self.loaded[j] = queue.loaded

    def wave_exits(self, state, t, src, f_old, f_new):
        xi = self.xi.get(src)
        if xi is not None:
            cs = self.costspec
            self.Y2 = accumulate_y2(self.Y2, f_old, f_new, cs.psi.left_limit(t), cs.alpha2.left_limit(t),
                                    xi, self.chain.velocities[-1])

    def finish(self, state):
        for queue in state.queues[1:]:
            self._flush(queue.index, state.horizon)


def wft_gradient(chain, control, costspec):

    r"""Exact gradient from tangent vectors carried by front tracking.

    Returns
    -------
    gradient : `GradientVector`

    """

    observer = WFTTangentObserver(chain, control, costspec)
    wft_solve(chain, control, control.horizon, observer=observer)
    Y1 = -observer.Y1
    Y2 = -observer.Y2
    return GradientVector(control.taus, Y1.sum(axis=1) + Y2, Y1, Y2, backend='wft')


def _ue_tangents(control, grid, trajectory, costspec):
    """Tangent gradients of every discontinuity on one shared trajectory."""
    dt1 = grid.dt[0]
    field = TangentField.combine([init_tangent(k, 1.0, grid, control)
                                  for k in range(control.n_discontinuities)])
    propagate_ue(field, trajectory, costspec)
    return -field.Y1 / dt1, -field.Y2 / dt1


def _neighbour(control, k, step, dt1):
    """The control with tau_k moved by `step` quanta, None when that breaks the order."""
    taus = control.tau_steps(dt1) * dt1
    taus[k] += step * dt1
    lower = taus[k - 1] if k else 0.0
    upper = taus[k + 1] if k + 1 < control.n_discontinuities else control.horizon
    if not lower < taus[k] < upper:
        return None
    return PiecewiseConstantControl(taus, control.levels, control.horizon,
                                    control.quantum, control.budget)


def _symmetric_tangents(chain, control, grid, costspec, Y1, Y2):

    r"""Average the tangent gradients linearized around tau_k - dt_1 and
    tau_k + dt_1.

    Each neighbour needs its own simulation.  When only one neighbour is
    admissible it is averaged with the tangent at tau_k itself.

    """

    dt1 = grid.dt[0]
    Y1, Y2 = Y1.copy(), Y2.copy()
    for k in range(control.n_discontinuities):
        rows1, rows2 = [], []
        for step in (-1, 1):
            shifted = _neighbour(control, k, step, dt1)
            if shifted is None:
                continue
            field = init_tangent(k, 1.0, grid, shifted)
            propagate_ue(field, ue_simulate(chain, shifted, grid), costspec)
            rows1.append(-field.Y1[0] / dt1)
            rows2.append(-field.Y2[0] / dt1)
        if not rows1:
            logger.debug("tau_%d has no admissible neighbour, one-sided tangent kept", k + 1)
            continue
        if len(rows1) == 1:
            rows1.append(Y1[k])
            rows2.append(Y2[k])
        Y1[k] = np.mean(rows1, axis=0)
        Y2[k] = np.mean(rows2)
    return Y1, Y2


def gradient(chain, control, grid, costspec, backend='ue', probe='one-sided', trajectory=None):

    r"""Gradient of the cost with respect to the discontinuity times.

    Paramaters
    ----------

    chain, control, grid, costspec
        The problem; the control must be quantized on ``dt_1``.

    backend : {'ue', 'wft'}
        Upwind-Euler tangents (one shared simulation for all
        discontinuities) or the exact front tracking overlay.

    probe : {'one-sided', 'symmetric'}
        One-sided linearizes around the given control.  Symmetric averages
        the tangents linearized around the controls with tau_k one step
        earlier and one step later, at the cost of two runs per
        discontinuity.

    trajectory : `UETrajectory`, optional
        Reused when given.

    Returns
    -------
    gradient : `GradientVector`
        dJ/dtau_k for every discontinuity.

    """

    K = control.n_discontinuities
    P = chain.n_processors
    if K == 0:
        return GradientVector([], [], np.zeros((0, P)), [], backend)
    if backend == 'wft':
        return wft_gradient(chain, control, costspec)
    if backend != 'ue':
        raise ValueError("unknown gradient backend %r" % (backend,))
    if probe not in ('one-sided', 'symmetric'):
        raise ValueError("unknown probe mode %r" % (probe,))

    if trajectory is None:
        trajectory = ue_simulate(chain, control, grid)
    Y1, Y2 = _ue_tangents(control, grid, trajectory, costspec)
    if probe == 'symmetric':
        Y1, Y2 = _symmetric_tangents(chain, control, grid, costspec, Y1, Y2)

    return GradientVector(control.taus, Y1.sum(axis=1) + Y2, Y1, Y2, backend='ue')
