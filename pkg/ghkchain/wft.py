"""

Wave-front tracking for the chain.

Under the capacity bound every Riemann problem inside a processor is solved
by one contact discontinuity travelling at the processor velocity, so waves
never interact inside a processor.  The solver therefore records, for each
processor, the history of its inlet flux ``F_j(s)``: every change of that
history is a wave born at the inlet at time ``s`` that reaches the outlet at
``s + L_j / v_j``.  Jumps of the initial density are waves born at the
virtual times ``-x / v_j``.  Queues are exactly linear between events.

Events are kept in a heap ordered by time, then by kind (queue emptying,
wave arrival, control jump), then by location and insertion order, which
makes the event log reproducible.

"""
from __future__ import division
import heapq
import logging
import time
from collections import namedtuple

import numpy as np

from ghkchain.base import ChainSolution
from ghkchain.onetime import auto_attr
from ghkchain.utilities import StepFunction, PiecewiseLinear

logger = logging.getLogger(__name__)

QUEUE_EMPTIES = 'queue-empties'
WAVE_HITS_QUEUE = 'wave-hits-queue'
WAVE_EXITS = 'wave-exits'
CONTROL_JUMP = 'control-jump'
HORIZON = 'horizon'

PRIORITY = {QUEUE_EMPTIES: 0, WAVE_HITS_QUEUE: 1, WAVE_EXITS: 1, CONTROL_JUMP: 2}

# safety cap on processed events
MAX_EVENTS = 1000000

# relative slack for the capacity check and queue roundoff
WFT_RTOL = 1e-12

Event = namedtuple('Event', ['time', 'kind', 'location', 'payload'])


class EventLimitExceeded(RuntimeError):
    """Raised when a front tracking run processes more events than allowed."""


class Wave(object):

    r"""A contact discontinuity on processor `processor`.

    Its position (local coordinate) is ``v (t - birth)``; `rho_left` is the
    upstream (newer) state and `rho_right` the downstream (older) one.

    """

    def __init__(self, processor, birth, velocity, rho_left, rho_right, xi=None):
        self.processor = processor
        self.birth = float(birth)
        self.velocity = float(velocity)
        self.rho_left = float(rho_left)
        self.rho_right = float(rho_right)
        self.xi = xi

    @property
    def speed(self):
        return self.velocity

    @property
    def jump(self):
        return self.rho_left - self.rho_right

    def position(self, t):
        return self.velocity * (t - self.birth)

    def __repr__(self):
        return ('Wave(processor=%d, birth=%.9g, %g -> %g)'
                % (self.processor, self.birth, self.rho_right, self.rho_left))


def solve_rp(rho_minus, rho_plus, velocity, mu, processor=0, t=0.0):

    r"""Solve the Riemann problem with left state `rho_minus` and right state
    `rho_plus` on a processor with velocity `velocity` and capacity `mu`.

    Returns
    -------
    wave : `Wave` or None
        A contact discontinuity at speed `velocity`, None for equal states.

    Raises
    ------
    ValueError
        When a state exceeds the capacity bound ``v rho <= mu``.

    """

    for rho in (rho_minus, rho_plus):
        if velocity * rho > mu * (1 + WFT_RTOL) or rho < 0:
            raise ValueError("state %.9g violates 0 <= v rho <= mu = %.9g" % (rho, mu))
    if rho_minus == rho_plus:
        return None
    return Wave(processor, t, velocity, rho_minus, rho_plus)


class QueueState(object):
    """Linear piece of one queue: value, slope and the fluxes around it."""

    def __init__(self, index, mu, q, f_up):
        self.index = index
        self.mu = mu
        self.q = float(q)
        self.t = 0.0
        self.f_up = float(f_up)
        self.f_inc = mu if self.q > 0 else min(self.f_up, mu)
        self.version = 0
        self.knots = [(0.0, self.q)]

    @property
    def slope(self):
        return self.f_up - self.f_inc

    @property
    def loaded(self):
        """Positive on the interval that starts at the current time."""
        return self.q > 0 or self.slope > 0


class WFTState(object):

    r"""Mutable state of a front tracking run at time `t`.

    Holds the inlet histories (``inlet_times[j]``, ``inlet_values[j]``), the
    queues, the event heap and the event log.

    """

    def __init__(self, chain, control, horizon, observer=None):

        self.chain = chain
        self.control = control
        self.horizon = float(horizon)
        self.observer = observer
        self.t = 0.0
        self.heap = []
        self.seq = 0
        self.n_events = 0
        self.log = []

        P = chain.n_processors
        self.inlet_times = [[] for j in range(P)]
        self.inlet_values = [[] for j in range(P)]
        self.queues = [None] * P

        # initial data as virtual inlet history on (-L/v, 0)
        for j, (p, rho) in enumerate(zip(chain.processors, chain.initial_density)):
            inner = rho.knots(0.0, p.length)
            edges = np.concatenate(([0.0], inner, [p.length]))
            values = rho((edges[:-1] + edges[1:]) / 2)
            for i in range(len(values) - 1, -1, -1):
                self._append(j, -edges[i + 1] / p.velocity, p.velocity * values[i], initial=True)

        for j in range(1, P):
            f_up = self.inlet_values[j - 1][0]
            self.queues[j] = QueueState(j, chain.mus[j], chain.initial_queues[j], f_up)

        for j in range(P):
            self._schedule_arrivals(j, 0)

        self._append(0, 0.0, control.levels[0])
        for j in range(1, P):
            self._append(j, 0.0, self.queues[j].f_inc)
            self._schedule_emptying(self.queues[j])

        for k, tau in enumerate(control.taus):
            self._push(tau, CONTROL_JUMP, 0, k)

    def _push(self, t, kind, location, payload):
        heapq.heappush(self.heap, (t, PRIORITY[kind], location, self.seq, kind, payload))
        self.seq += 1

    def _append(self, j, s, value, initial=False):

        """Append a change of processor j's inlet flux at time s; returns its
        index or None for a zero jump."""

        times, values = self.inlet_times[j], self.inlet_values[j]
        if values and values[-1] == value:
            return None
        times.append(float(s))
        values.append(float(value))
        idx = len(values) - 1
        if not initial and idx > 0:
            self._schedule_arrivals(j, idx)
        return idx

    def _schedule_arrivals(self, j, first):
        p = self.chain.processors[j]
        last = self.chain.n_processors - 1
        for idx in range(max(first, 1), len(self.inlet_values[j])):
            t_arrive = self.inlet_times[j][idx] + p.transit_time
            if j == last:
                self._push(t_arrive, WAVE_EXITS, j, (j, idx))
            else:
                self._push(t_arrive, WAVE_HITS_QUEUE, j + 1, (j, idx))

    def _schedule_emptying(self, queue):
        queue.version += 1
        if queue.q > 0 and queue.slope < 0:
            self._push(queue.t + queue.q / -queue.slope, QUEUE_EMPTIES, queue.index, queue.version)

    def advance_queue(self, queue, t):

        """Move a queue along its linear piece to time t."""

        if t > queue.t:
            q = queue.q + queue.slope * (t - queue.t)
            if q < WFT_RTOL * queue.mu * max(1.0, self.horizon) and queue.slope <= 0:
                q = 0.0
            queue.q = q
            queue.t = t
            queue.knots.append((t, q))

    def exit_value(self, j, idx):
        return self.inlet_values[j][idx]

    def record(self, t, kind, location, detail):
        self.log.append((t, kind, location, detail))
        self.n_events += 1
        logger.debug("t = %.9g  %s at %d: %s", t, kind, location + 1, detail)


def next_event(state):

    r"""Pop the earliest live event.

    Stale emptying events (their queue changed slope since scheduling) are
    discarded.  An event of kind ``'horizon'`` at time T is returned once no
    event up to T remains.

    """

    while state.heap:
        t, _, location, _, kind, payload = state.heap[0]
        if t > state.horizon:
            break
        heapq.heappop(state.heap)
        if kind == QUEUE_EMPTIES and payload != state.queues[location].version:
            continue
        return Event(t, kind, location, payload)
    return Event(state.horizon, HORIZON, -1, None)


def _empty_queue(state, queue, t):
    queue.q = 0.0
    if queue.knots[-1][0] == t:
        queue.knots[-1] = (t, 0.0)
    else:
        queue.knots.append((t, 0.0))
    queue.t = t
    f_old = queue.f_inc
    queue.f_inc = min(queue.f_up, queue.mu)
    idx = state._append(queue.index, t, queue.f_inc)
    state._schedule_emptying(queue)
    state.record(t, QUEUE_EMPTIES, queue.index, 'f_inc %.9g->%.9g' % (f_old, queue.f_inc))
    if state.observer is not None:
        state.observer.queue_empties(state, queue, t, f_old, idx)


def apply_event(state, event):

    r"""Process one event and return the updated state.

    wave-hits-queue
        The queue takes the new upstream flux, its inflow to the processor
        follows ``mu`` when loaded and ``min(f_up, mu)`` when empty; a wave
        enters the processor when that inflow changes.
    queue-empties
        The queue reaches zero and its processor inflow drops to the
        upstream flux.
    control-jump
        A new wave of the next control level enters the first processor.
    wave-exits
        A wave leaves the last processor; only the outflow changes.

    """

    t, kind, location, payload = event
    if t < state.t:
        raise ValueError("event at t = %.9g precedes the state time %.9g" % (t, state.t))
    state.t = t
    observer = state.observer

    if kind == CONTROL_JUMP:
        k = payload
        old = state.inlet_values[0][-1]
        idx = state._append(0, t, state.control.levels[k + 1])
        state.record(t, CONTROL_JUMP, 0, 'u %.9g->%.9g' % (old, state.control.levels[k + 1]))
        if observer is not None:
            observer.control_jump(state, k, t, idx)

    elif kind == QUEUE_EMPTIES:
        queue = state.queues[location]
        state.advance_queue(queue, t)
        _empty_queue(state, queue, t)

    elif kind == WAVE_HITS_QUEUE:
        src, idx = payload
        queue = state.queues[location]
        state.advance_queue(queue, t)
        if queue.q == 0.0 and queue.f_inc == queue.mu and queue.slope < 0:
            # the queue crossed zero by roundoff before its emptying event
            _empty_queue(state, queue, t)
        f_old = queue.f_up
        f_new = state.exit_value(src, idx)
        was_loaded = queue.q > 0
        queue.f_up = f_new
        f_inc_old = queue.f_inc
        queue.f_inc = queue.mu if was_loaded else min(f_new, queue.mu)
        new_idx = state._append(location, t, queue.f_inc)
        state._schedule_emptying(queue)
        state.record(t, WAVE_HITS_QUEUE, location,
                     'f_up %.9g->%.9g f_inc %.9g->%.9g' % (f_old, f_new, f_inc_old, queue.f_inc))
        if observer is not None:
            observer.wave_hits_queue(state, queue, t, (src, idx), f_old, f_new, was_loaded, new_idx)

    elif kind == WAVE_EXITS:
        src, idx = payload
        f_old = state.exit_value(src, idx - 1)
        f_new = state.exit_value(src, idx)
        state.record(t, WAVE_EXITS, location, 'f_out %.9g->%.9g' % (f_old, f_new))
        if observer is not None:
            observer.wave_exits(state, t, (src, idx), f_old, f_new)

    else:
        raise ValueError("inconsistent event kind %r" % (kind,))

    return state


def _collapse(times, values):
    """Keep the last value among changes that share a time, drop zero jumps."""
    keep_t, keep_v = [times[0]], [values[0]]
    for s, value in zip(times[1:], values[1:]):
        if s == keep_t[-1] and len(keep_t) > 1:
            keep_t.pop()
            keep_v.pop()
        if value != keep_v[-1]:
            keep_t.append(s)
            keep_v.append(value)
    return np.array(keep_t), np.array(keep_v)


class WFTSolution(ChainSolution):

    r"""Exact solution of the chain produced by `wft_solve`.

    Attributes
    ----------
    inlet_times, inlet_values : list of lists
        Inlet flux history per processor, right-continuous in time and
        starting at ``-L_j / v_j``.

    queue_knots : list
        Per queue the breakpoints ``(t, q)`` of its piecewise-linear path.

    events : list
        ``(time, kind, location, detail)`` in processing order.

    """

    def __init__(self, state):

        ChainSolution.__init__(self, state.chain, state.control, state.horizon)
        self.inlet_times = [np.array(t) for t in state.inlet_times]
        self.inlet_values = [np.array(v) for v in state.inlet_values]
        self.queue_knots = [None if q is None else np.array(q.knots) for q in state.queues]
        self.events = list(state.log)

    @property
    def n_events(self):
        return len(self.events)

    def inlet_function(self, j):
        times, values = _collapse(self.inlet_times[j], self.inlet_values[j])
        return StepFunction(times[1:], values, times[0], np.inf)

    def exit_function(self, j):
        shift = self.chain.processors[j].transit_time
        times, values = _collapse(self.inlet_times[j], self.inlet_values[j])
        return StepFunction(times[1:] + shift, values, 0.0, np.inf)

    def outflow_function(self):
        return self.exit_function(self.chain.n_processors - 1)

    @auto_attr
    def queue_functions(self):
        funcs = [None]
        for knots in self.queue_knots[1:]:
            funcs.append(PiecewiseLinear(knots[:, 0], knots[:, 1]))
        return funcs

    def queue_at(self, j, t):
        return float(self.queue_functions[j](t))

    def waves(self, j, t):
        """Waves on processor j at time t, from the inlet to the outlet."""
        p = self.chain.processors[j]
        times, values = self.inlet_times[j], self.inlet_values[j]
        waves = []
        for idx in range(len(values) - 1, 0, -1):
            s = times[idx]
            if t - p.transit_time < s <= t:
                waves.append(Wave(j, s, p.velocity, values[idx] / p.velocity,
                                  values[idx - 1] / p.velocity))
        return waves

    def density_profile(self, j, t):

        r"""Density of processor j at time t as a step function of the local
        coordinate."""

        p = self.chain.processors[j]
        inlet = self.inlet_function(j)
        s_knots = inlet.knots(t - p.transit_time, t)
        x_breaks = np.sort(p.velocity * (t - s_knots))
        edges = np.concatenate(([0.0], x_breaks, [p.length]))
        mids = (edges[:-1] + edges[1:]) / 2
        values = inlet(t - mids / p.velocity) / p.velocity
        return StepFunction(x_breaks, values, 0.0, p.length)

    def processor_mass(self, j, t):
        p = self.chain.processors[j]
        return self.inlet_function(j).integral(t - p.transit_time, t)


def wft_solve(chain, control, horizon, observer=None, max_events=MAX_EVENTS):

    r"""Front tracking solution of the chain on ``[0, T]``.

    Paramaters
    ----------

    chain : `SupplyChain`
        Validated chain with piecewise-constant initial data.

    control : `PiecewiseConstantControl`
        The inflow.

    horizon : float
        Final time T.

    observer : object, optional
        Receives ``start``, ``control_jump``, ``wave_hits_queue``,
        ``queue_empties``, ``wave_exits`` and ``finish`` callbacks; used by
        the tangent overlay.

    max_events : int
        Safety cap, exceeding it raises `EventLimitExceeded`.

    Returns
    -------
    solution : `WFTSolution`

    """

    start = time.time()
    state = WFTState(chain, control, horizon, observer)
    if observer is not None:
        observer.start(state)

    while True:
        event = next_event(state)
        if event.kind == HORIZON:
            break
        apply_event(state, event)
        if state.n_events > max_events:
            raise EventLimitExceeded("front tracking exceeded %d events at t = %.9g"
                                     % (max_events, event.time))

    for queue in state.queues[1:]:
        state.advance_queue(queue, state.horizon)
    if observer is not None:
        observer.finish(state)

    logger.info("front tracking run: %d processors, %d events, %.3f s",
                chain.n_processors, state.n_events, time.time() - start)
    return WFTSolution(state)
