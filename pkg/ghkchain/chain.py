"""

Supply chain topology, the piecewise-constant inflow control and the cost
specification, together with the admissibility checks the solvers rely on.

Processors are numbered from 0 inside the package; processor ``j > 0`` is fed
by the queue in front of it, also indexed ``j``.

"""
from __future__ import division
import logging

import numpy as np

from ghkchain.onetime import auto_attr
from ghkchain.utilities import StepFunction, PiecewiseLinear, as_function, steps_of

logger = logging.getLogger(__name__)

# slack for the capacity and divisibility checks
CHECK_RTOL = 1e-9


class ValidationReport(object):

    r"""List of violated invariants.  Truthy when admissible."""

    def __init__(self, violations=None, notes=None):
        self.violations = list(violations or [])
        self.notes = list(notes or [])

    def __bool__(self):
        return not self.violations

    __nonzero__ = __bool__

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def extend(self, other):
        self.violations.extend(other.violations)
        self.notes.extend(other.notes)
        return self

    def __repr__(self):
        return 'ValidationReport(%r)' % (self.violations,)


def require_admissible(report, what='configuration'):
    if not report:
        raise ValueError("inadmissible %s: %s" % (what, '; '.join(report.violations)))


class Processor(object):

    r"""One arc of the chain.

    Paramaters
    ----------

    index : int
        Position in the chain, counted from 0.

    length : float
        Arc length L_j.

    velocity : float
        Processing velocity v_j.

    mu : float
        Maximal processing rate mu_j (parts per time).

    """

    def __init__(self, index, length, velocity, mu):
        self.index = int(index)
        self.length = float(length)
        self.velocity = float(velocity)
        self.mu = float(mu)

    @auto_attr
    def transit_time(self):
        return self.length / self.velocity

    @auto_attr
    def max_density(self):
        return self.mu / self.velocity

    def __repr__(self):
        return ('Processor(%d, length=%g, velocity=%g, mu=%g)'
                % (self.index, self.length, self.velocity, self.mu))


class SupplyChain(object):

    r"""An ordered sequence of processors with queues in between.

    Paramaters
    ----------

    processors : list of `Processor`
        In flow order; at least one.

    initial_density : list, optional
        Per processor either a number or a `StepFunction` of the local
        coordinate ``x`` in ``[0, L_j]``.  Defaults to empty processors.

    initial_queues : sequence, optional
        Initial queue loads, one per processor.  The first entry is ignored
        since the first processor is fed by the control directly.

    base_unit : float or None
        The common length unit Delta every length is a multiple of.

    """

    def __init__(self, processors, initial_density=None, initial_queues=None, base_unit=None):

        self.processors = list(processors)
        if not self.processors:
            raise ValueError("a supply chain needs at least one processor")

        P = len(self.processors)
        if initial_density is None:
            initial_density = [0.0] * P
        if initial_queues is None:
            initial_queues = [0.0] * P
        if len(initial_density) != P or len(initial_queues) != P:
            raise ValueError("initial data must be given for each of the %d processors" % P)

        self.initial_density = [as_function(rho, 0.0, p.length)
                                for rho, p in zip(initial_density, self.processors)]
        queues = np.asarray(initial_queues, dtype='double').copy()
        queues[0] = 0.0
        self.initial_queues = queues
        self.base_unit = None if base_unit is None else float(base_unit)

    @classmethod
    def from_arrays(cls, mu, velocity=1.0, length=1.0, **kwargs):
        """Build a chain from per-processor arrays (scalars broadcast)."""
        mu = np.atleast_1d(np.asarray(mu, dtype='double'))
        velocity = np.broadcast_to(np.asarray(velocity, dtype='double'), mu.shape)
        length = np.broadcast_to(np.asarray(length, dtype='double'), mu.shape)
        processors = [Processor(j, L, v, m) for j, (L, v, m) in enumerate(zip(length, velocity, mu))]
        return cls(processors, **kwargs)

    @property
    def n_processors(self):
        return len(self.processors)

    @auto_attr
    def lengths(self):
        return np.array([p.length for p in self.processors])

    @auto_attr
    def velocities(self):
        return np.array([p.velocity for p in self.processors])

    @auto_attr
    def mus(self):
        return np.array([p.mu for p in self.processors])

    @auto_attr
    def a(self):
        """Left endpoints a_j of the processors."""
        return np.concatenate(([0.0], np.cumsum(self.lengths)[:-1]))

    @auto_attr
    def b(self):
        """Right endpoints b_j = a_j + L_j."""
        return np.cumsum(self.lengths)


def validate_chain(chain):

    r"""Check the standing assumptions on a chain.

    Every violated invariant is listed: positivity of lengths, velocities and
    rates, (H1) in flux form ``v_j rho_{j,0} <= mu_j`` on every piece of the
    initial data, (H2) divisibility of each length by the base unit, the
    sign of the initial data and the shared endpoints.  Configurations where
    the literal density bound ``rho_{j,0} <= mu_j`` disagrees with the flux
    bound are noted, not rejected.

    Returns
    -------
    report : `ValidationReport`

    """

    report = ValidationReport()
    bad = report.violations

    for p in chain.processors:
        label = 'processor %d' % (p.index + 1)
        for name, value in (('length', p.length), ('velocity', p.velocity), ('mu', p.mu)):
            if not value > 0:
                bad.append('%s: %s must be positive (got %g)' % (label, name, value))

    if chain.base_unit is None or not chain.base_unit > 0:
        bad.append('H2: no base length unit Delta is defined')
    else:
        for p in chain.processors:
            ratio = p.length / chain.base_unit
            if abs(ratio - round(ratio)) > CHECK_RTOL * max(1.0, ratio) or round(ratio) < 1:
                bad.append('H2: processor %d length %.9g is not a multiple of Delta = %.9g'
                           % (p.index + 1, p.length, chain.base_unit))

    for p, rho in zip(chain.processors, chain.initial_density):
        label = 'processor %d' % (p.index + 1)
        values = rho.values
        if np.any(values < 0):
            bad.append('%s: initial density is negative' % label)
        if not np.all(np.isfinite(values)):
            bad.append('%s: initial density has infinite total variation' % label)
            continue
        flux = p.velocity * values
        over = flux > p.mu * (1 + CHECK_RTOL)
        if np.any(over):
            bad.append('H1: %s initial flux %.9g exceeds mu = %.9g'
                       % (label, flux[over].max(), p.mu))
        literal = values <= p.mu * (1 + CHECK_RTOL)
        if np.any(literal != ~over):
            report.notes.append('%s: density bound rho <= mu and flux bound v*rho <= mu disagree'
                                % label)
            logger.warning("%s: the density bound rho <= mu and the flux bound "
                           "v*rho <= mu disagree; the flux bound is enforced", label)

    if np.any(chain.initial_queues < 0):
        bad.append('initial queues must be nonnegative')

    ends = chain.a[1:] - chain.b[:-1]
    if np.any(np.abs(ends) > CHECK_RTOL * max(1.0, chain.b[-1])):
        bad.append('consecutive processors do not share endpoints')

    return report


class PiecewiseConstantControl(object):

    r"""Inflow control with finitely many jumps.

    Paramaters
    ----------

    taus : array_like
        Strictly increasing discontinuity times inside ``(0, T)``.

    levels : array_like
        ``len(taus) + 1`` inflow levels u_0 ... u_delta.

    horizon : float
        Final time T.

    quantum : float, optional
        Control time quantum dt_q the taus must be multiples of.

    budget : float, optional
        Total variation budget C.

    """

    def __init__(self, taus, levels, horizon, quantum=None, budget=None):

        self.taus = np.atleast_1d(np.asarray(taus, dtype='double'))
        self.levels = np.atleast_1d(np.asarray(levels, dtype='double'))
        self.horizon = float(horizon)
        self.quantum = None if quantum is None else float(quantum)
        self.budget = None if budget is None else float(budget)

        if self.levels.shape[0] != self.taus.shape[0] + 1:
            raise ValueError("a control with %d discontinuities needs %d levels, got %d"
                             % (self.taus.shape[0], self.taus.shape[0] + 1, self.levels.shape[0]))
        if np.any(np.diff(self.taus) <= 0):
            raise ValueError("control discontinuities must be strictly increasing")
        if self.taus.size and (self.taus[0] <= 0 or self.taus[-1] >= self.horizon):
            raise ValueError("control discontinuities must lie inside (0, %g)" % self.horizon)

    @classmethod
    def from_raw(cls, taus, levels, horizon, quantum=None, budget=None):

        r"""Build a control from possibly colliding or out-of-range times.

        Times are clamped to ``[0, T]`` and made nondecreasing.  Segments of
        zero length are dropped, so at a collision the level of the later
        segment wins and a time clamped to 0 or T absorbs its segment.
        Breakpoints whose two sides carry the same level disappear.

        """

        taus = np.clip(np.atleast_1d(np.asarray(taus, dtype='double')), 0.0, horizon)
        taus = np.maximum.accumulate(taus) if taus.size else taus
        levels = np.atleast_1d(np.asarray(levels, dtype='double'))
        edges = np.concatenate(([0.0], taus, [float(horizon)]))
        keep = np.diff(edges) > 0
        if not np.any(keep):
            keep[-1] = True
        kept_levels = levels[keep]
        kept_starts = edges[:-1][keep]

        new_taus, new_levels = [], [kept_levels[0]]
        for start, level in zip(kept_starts[1:], kept_levels[1:]):
            if level != new_levels[-1]:
                new_taus.append(start)
                new_levels.append(level)
        return cls(new_taus, new_levels, horizon, quantum, budget)

    @property
    def n_discontinuities(self):
        return self.taus.shape[0]

    @auto_attr
    def function(self):
        return StepFunction(self.taus, self.levels, 0.0, self.horizon)

    def tau_steps(self, dt):
        """The discontinuity times as integer step counts on a clock ``dt``."""
        return steps_of(self.taus, dt) if self.taus.size else np.zeros(0, dtype=int)

    def __repr__(self):
        return ('PiecewiseConstantControl(taus=%s, levels=%s, horizon=%g)'
                % (np.round(self.taus, 9).tolist(), self.levels.tolist(), self.horizon))


def control_tv(u):
    r"""Total variation sum_k |u_k - u_{k-1}| of a control."""
    return u.function.total_variation


def eval_control(u, t):

    r"""Evaluate the control at time `t` in ``[0, T]``.

    The control is right-continuous: at ``t = tau_k`` the new level u_k is
    returned, and at ``t = T`` the last level.

    """

    t_arr = np.asarray(t, dtype='double')
    if np.any(t_arr < 0) or np.any(t_arr > u.horizon):
        raise ValueError("control evaluated at t = %s outside [0, %g]" % (t, u.horizon))
    return u.function(t)


def shift_control(u, xi):

    r"""Shift every discontinuity of `u` by the matching entry of `xi`.

    Shifted times are clamped to ``[0, T]``; colliding breakpoints merge with
    the later level winning and a breakpoint clamped to 0 or T absorbs its
    segment.  See `PiecewiseConstantControl.from_raw`.

    """

    xi = np.atleast_1d(np.asarray(xi, dtype='double'))
    if xi.shape != u.taus.shape:
        raise ValueError("one shift per discontinuity is needed (%d given, %d expected)"
                         % (xi.shape[0], u.taus.shape[0]))
    if not np.any(xi):
        return u
    return PiecewiseConstantControl.from_raw(u.taus + xi, u.levels, u.horizon,
                                             u.quantum, u.budget)


def check_control(u, chain):

    r"""Admissibility of a control for a chain.

    Levels must lie in ``[0, mu_1]``, the total variation within the budget
    and the discontinuities on multiples of the quantum.

    """

    report = ValidationReport()
    mu1 = chain.processors[0].mu
    if np.any(u.levels < 0) or np.any(u.levels > mu1 * (1 + CHECK_RTOL)):
        report.violations.append('control levels must lie in [0, mu_1 = %.9g]' % mu1)
    if u.budget is not None and control_tv(u) > u.budget * (1 + CHECK_RTOL):
        report.violations.append('control total variation %.9g exceeds the budget %.9g'
                                 % (control_tv(u), u.budget))
    if u.quantum is not None:
        try:
            u.tau_steps(u.quantum)
        except ValueError as err:
            report.violations.append(str(err))
    return report


class CostSpec(object):

    r"""Weights and target of the cost functional

    J = sum_j int alpha1 q_j dt + int alpha2 (f_out - psi)^2 dt.

    Paramaters
    ----------

    alpha1, alpha2 : float or `StepFunction`
        Nonnegative weights.

    psi : float, `StepFunction` or `PiecewiseLinear`
        Desired outflow.

    horizon : float
        Final time T.

    """

    def __init__(self, alpha1=1.0, alpha2=0.0, psi=0.0, horizon=1.0):

        self.horizon = float(horizon)
        self.alpha1 = as_function(alpha1, 0.0, self.horizon)
        self.alpha2 = as_function(alpha2, 0.0, self.horizon)
        self.psi = as_function(psi, 0.0, self.horizon)

        for name in ('alpha1', 'alpha2', 'psi'):
            func = getattr(self, name)
            if not isinstance(func, (StepFunction, PiecewiseLinear)):  # pragma: no cover
                raise ValueError("%s must be a piecewise function" % name)
            if func.minimum < 0:
                raise ValueError("%s must be nonnegative on [0, T]" % name)

    @property
    def tracks_outflow(self):
        return not (isinstance(self.alpha2, StepFunction) and np.all(self.alpha2.values == 0))
