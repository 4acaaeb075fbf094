"""

Command line driver.

    ghkchain {simulate,optimize,compare,gradcheck,scan} --config RUN.yaml
             [--set section.key=value]... [--out DIR] [-v]

A run is described by one YAML file with the sections ``chain``,
``control``, ``cost``, ``grid``, ``descent``, ``analysis`` and ``output``
(see the packaged files in ``ghkchain/configs``).  The whole configuration
is validated before anything is computed, and output files are only written
once every result of the subcommand is available.

"""
from __future__ import division
import argparse
import logging
import os
import sys

import numpy as np
from ruamel.yaml import YAML
from ruamel.yaml.error import YAMLError

from ghkchain import analysis
from ghkchain.base import configure_logging
from ghkchain.chain import (SupplyChain, Processor, PiecewiseConstantControl, CostSpec,
                            validate_chain, check_control)
from ghkchain.optimizer import DescentConfig, optimize
from ghkchain.upwind import build_grid, ue_simulate
from ghkchain.utilities import StepFunction, PiecewiseLinear, grid_points, write_table, GRID_RTOL
from ghkchain.wft import wft_solve

logger = logging.getLogger(__name__)

COMMANDS = ('simulate', 'optimize', 'compare', 'gradcheck', 'scan')

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_GRADCHECK = 3

_REQUIRED = object()


class ConfigError(ValueError):
    """A configuration problem anchored at ``path:line: [section] key``."""

    def __init__(self, message, path='<config>', line=None, section=None, key=None):
        where = path if line is None else '%s:%s' % (path, line)
        if section is not None:
            where += ': [%s]' % section
            if key is not None:
                where += ' %s' % key
        ValueError.__init__(self, '%s: %s' % (where, message))


def _parse_override(item):
    path, sep, text = item.partition('=')
    parts = [p for p in path.strip().split('.') if p]
    if not sep or len(parts) != 2:
        raise ConfigError("invalid override %r, expected section.key=value" % item, path='--set')
    value = YAML(typ='safe').load(text) if text.strip() else None
    return parts[0], parts[1], value


class _Reader(object):

    """Typed access to the loaded mapping with line-anchored errors."""

    def __init__(self, data, path, overrides=()):
        self.data = data
        self.path = path
        self.overridden = set()
        for item in overrides:
            section, key, value = _parse_override(item)
            if self.data.get(section) is None:
                self.data[section] = {}
            self.data[section][key] = value
            self.overridden.add((section, key))

    def line(self, section, key=None):
        if (section, key) in self.overridden:
            return None
        try:
            if key is None:
                return self.data.lc.key(section)[0] + 1
            return self.data[section].lc.key(key)[0] + 1
        except (AttributeError, KeyError, TypeError):
            return None

    def error(self, section, key, message):
        path = '--set' if (section, key) in self.overridden else self.path
        return ConfigError(message, path, self.line(section, key), section, key)

    def section(self, name):
        block = self.data.get(name)
        if block is None:
            return {}
        if not isinstance(block, dict):
            raise self.error(name, None, "must be a mapping")
        return block

    def get(self, section, key, default=_REQUIRED, kind=float):
        block = self.section(section)
        if key not in block or block[key] is None:
            if default is _REQUIRED:
                raise self.error(section, key, "missing required value")
            return default
        value = block[key]
        try:
            if kind is list:
                if not isinstance(value, (list, tuple)):
                    value = [value]
                return [float(v) for v in value]
            if kind is bool:
                if not isinstance(value, bool):
                    raise ValueError("expected true or false")
                return value
            if kind is int and float(value) != int(value):
                raise ValueError("expected an integer")
            return kind(value)
        except (TypeError, ValueError) as err:
            raise self.error(section, key, "cannot read %r (%s)" % (value, err))

    def table(self, section, key, horizon, default=0.0):

        """A number, ``{values, breaks}`` for a step function or
        ``{kind: linear, nodes, values}`` for a piecewise-linear one."""

        block = self.section(section)
        value = block.get(key, default)
        if value is None:
            value = default
        try:
            if isinstance(value, dict):
                values = [float(v) for v in value['values']]
                if value.get('kind', 'step') == 'linear':
                    return PiecewiseLinear([float(v) for v in value['nodes']], values)
                return StepFunction([float(v) for v in value.get('breaks', [])], values, 0.0, horizon)
            return float(value)
        except (KeyError, TypeError, ValueError) as err:
            raise self.error(section, key, "cannot read the table %r (%s)" % (value, err))


class RunConfig(object):

    r"""Everything a subcommand needs, validated.

    Attributes
    ----------
    chain : `SupplyChain`
    control : `PiecewiseConstantControl`
        Its times snapped onto the ``dt_1`` grid of the configured mesh.
    costspec : `CostSpec`
    base_dx, nu, nu_list
        Mesh settings.
    descent : `DescentConfig`
    probe, backend, rtol, noise_factor, ncpus, scan_tau1, scan_tau2
        Analysis settings.
    directory, snapshots, events
        Output settings.

    """

    @classmethod
    def from_file(cls, path, overrides=()):

        try:
            with open(path) as fid:
                data = YAML().load(fid)
        except (IOError, OSError) as err:
            raise ConfigError("cannot read the configuration (%s)" % err, path)
        except YAMLError as err:
            raise ConfigError("not valid YAML (%s)" % err, path)
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("the configuration must be a mapping of sections", path)
        return cls(_Reader(data, path, overrides))

    def __init__(self, reader):

        self.reader = reader
        self._read_chain(reader)
        self._read_grid(reader)
        self._read_control(reader)
        self._read_cost(reader)
        self._read_analysis(reader)
        self._read_descent(reader)
        self.scan_tau1 = self._scan_axis(reader, 'scan_tau1')
        self.scan_tau2 = self._scan_axis(reader, 'scan_tau2')
        self._read_output(reader)

    def _read_chain(self, r):

        mu = r.get('chain', 'mu', kind=list)
        P = len(mu)
        if P == 0:
            raise r.error('chain', 'mu', "at least one processor is needed")

        def per_processor(key, default):
            values = r.get('chain', key, [default] * P, kind=list)
            if len(values) == 1:
                values = values * P
            if len(values) != P:
                raise r.error('chain', key, "expected %d entries, got %d" % (P, len(values)))
            return values

        velocity = per_processor('velocity', 1.0)
        length = per_processor('length', 1.0)
        queues = per_processor('initial_queue', 0.0)

        densities = r.section('chain').get('initial_density') or [0.0] * P
        if not isinstance(densities, (list, tuple)) or len(densities) != P:
            raise r.error('chain', 'initial_density', "expected %d entries" % P)
        initial = []
        for j, entry in enumerate(densities):
            try:
                if isinstance(entry, dict):
                    initial.append(StepFunction([float(b) for b in entry.get('breaks', [])],
                                                [float(v) for v in entry['values']], 0.0, length[j]))
                else:
                    initial.append(float(entry))
            except (KeyError, TypeError, ValueError) as err:
                raise r.error('chain', 'initial_density',
                              "processor %d: cannot read %r (%s)" % (j + 1, entry, err))

        processors = [Processor(j, length[j], velocity[j], mu[j]) for j in range(P)]
        self.chain = SupplyChain(processors, initial, queues, r.get('chain', 'base_unit', None))
        report = validate_chain(self.chain)
        if not report:
            raise r.error('chain', None, '; '.join(report.violations))

    def _read_grid(self, r):

        self.base_dx = r.get('grid', 'base_dx')
        self.nu = r.get('grid', 'nu', 0, kind=int)
        self.nu_list = [int(v) for v in r.get('grid', 'nu_list', [self.nu], kind=list)]
        if np.any(np.diff(self.nu_list) <= 0):
            raise r.error('grid', 'nu_list', "refinement levels must be strictly ascending")

    def _read_control(self, r):

        horizon = r.get('control', 'horizon')
        if not horizon > 0:
            raise r.error('control', 'horizon', "the horizon must be positive")
        try:
            self.grid = build_grid(self.chain, self.base_dx, self.nu, horizon)
        except ValueError as err:
            raise r.error('grid', 'base_dx', str(err))

        dt1 = self.grid.dt[0]
        taus = np.array(r.get('control', 'taus', [], kind=list))
        snapped = np.round(taus / dt1) * dt1
        for raw, new in zip(taus, snapped):
            if abs(raw - new) > GRID_RTOL * max(1.0, abs(raw)):
                logger.warning("control time %.9g snapped to %.9g on the dt_1 = %.9g grid",
                               raw, new, dt1)
        levels = r.get('control', 'levels', kind=list)
        try:
            self.control = PiecewiseConstantControl(snapped, levels, horizon, quantum=dt1,
                                                    budget=r.get('control', 'budget', None))
        except ValueError as err:
            raise r.error('control', 'taus', str(err))
        report = check_control(self.control, self.chain)
        if not report:
            raise r.error('control', 'levels', '; '.join(report.violations))

    def _read_cost(self, r):

        T = self.control.horizon
        try:
            self.costspec = CostSpec(r.table('cost', 'alpha1', T, 1.0), r.table('cost', 'alpha2', T, 0.0),
                                     r.table('cost', 'psi', T, 0.0), T)
        except ValueError as err:
            raise r.error('cost', None, str(err))

    def _read_descent(self, r):

        quantum = r.get('descent', 'quantum', None)
        try:
            self.descent = DescentConfig(r.get('descent', 'h', 1.0),
                                         quantum=quantum,
                                         patience=r.get('descent', 'patience', 5, kind=int),
                                         max_iterations=r.get('descent', 'max_iterations', 100, kind=int),
                                         policy=r.get('descent', 'policy', 'backtracking', kind=str),
                                         tolerance=r.get('descent', 'tolerance', 1e-9),
                                         backend=self.backend, probe=self.probe)
        except ValueError as err:
            raise r.error('descent', None, str(err))
        if quantum is not None:
            ratio = quantum / self.grid.dt[0]
            if abs(ratio - round(ratio)) > GRID_RTOL * max(1.0, ratio) or round(ratio) < 1:
                raise r.error('descent', 'quantum', "must be a multiple of dt_1 = %.9g" % self.grid.dt[0])
            self.control = PiecewiseConstantControl.from_raw(
                np.round(self.control.taus / quantum) * quantum, self.control.levels,
                self.control.horizon, quantum, self.control.budget)

    def _read_analysis(self, r):

        self.probe = r.get('analysis', 'probe', 'one-sided', kind=str)
        if self.probe not in ('one-sided', 'symmetric'):
            raise r.error('analysis', 'probe', "use one-sided or symmetric")
        self.backend = r.get('analysis', 'backend', 'ue', kind=str)
        if self.backend not in ('ue', 'wft'):
            raise r.error('analysis', 'backend', "use ue or wft")
        self.rtol = r.get('analysis', 'rtol', 0.05)
        self.noise_factor = r.get('analysis', 'noise_factor', 10.0)
        self.ncpus = r.get('analysis', 'ncpus', 1, kind=int)

    def _scan_axis(self, r, key):
        axis = r.get('analysis', key, None, kind=list)
        if axis is None:
            return None
        if len(axis) != 3 or axis[2] < 1 or axis[2] != int(axis[2]):
            raise r.error('analysis', key, "expected [start, stop, count]")
        return grid_points(axis[0], axis[1], int(axis[2]), self.control.quantum)

    def _read_output(self, r):

        self.directory = r.get('output', 'directory', '.', kind=str)
        self.snapshots = r.get('output', 'snapshots', [], kind=list)
        for t in self.snapshots:
            if t < 0 or t > self.control.horizon:
                raise r.error('output', 'snapshots', "time %.9g outside [0, T]" % t)
        self.events = r.get('output', 'events', False, kind=bool)


def _write(directory, tables):
    if not os.path.isdir(directory):
        os.makedirs(directory)
    for name, header, rows in tables:
        write_table(os.path.join(directory, name), header, rows)


def cmd_simulate(config):

    """Both solvers on the configured mesh: queue and outflow traces, costs,
    mass balances, density snapshots and optionally the front tracking
    event log."""

    chain, control, grid = config.chain, config.control, config.grid
    ue = ue_simulate(chain, control, grid)
    wft = wft_solve(chain, control, control.horizon)
    tables = []

    for j in ue.queue_indices:
        t = np.arange(grid.M[j] + 1) * grid.dt[j]
        t[-1] = min(t[-1], control.horizon)
        ue_q = ue.queue_function(j)
        tables.append(('queue_%d.csv' % (j + 1), ('t', 'ue', 'wft'),
                       [(s, ue_q(s), wft.queue_at(j, s)) for s in t]))

    P = chain.n_processors - 1
    t = np.arange(grid.M[P]) * grid.dt[P]
    ue_out, wft_out = ue.outflow_function(), wft.outflow_function()
    tables.append(('outflow.csv', ('t', 'ue', 'wft'), [(s, ue_out(s), wft_out(s)) for s in t]))

    rows = []
    for name, solution in (('ue', ue), ('wft', wft)):
        c = analysis.cost(solution, config.costspec)
        rows.append((name, c.J1, c.J2, c.J))
    tables.append(('cost.csv', ('solver', 'J1', 'J2', 'J'), rows))

    rows = []
    for name, solution in (('ue', ue), ('wft', wft)):
        b = solution.mass_balance()
        rows.append((name, b['inflow'], b['stored'], b['queued'], b['outflow'], b['residual']))
    tables.append(('mass.csv', ('solver', 'inflow', 'stored', 'queued', 'outflow', 'residual'), rows))

    if config.snapshots:
        rows = []
        for s in config.snapshots:
            for j in range(chain.n_processors):
                x = (np.arange(grid.N[j]) + 0.5) * grid.dx
                ue_rho = ue.density_profile(j, s)(x)
                wft_rho = wft.density_profile(j, s)(x)
                rows.extend((s, j + 1, xi, a, b) for xi, a, b in zip(x, ue_rho, wft_rho))
        tables.append(('density.csv', ('t', 'processor', 'x', 'ue', 'wft'), rows))

    if config.events:
        tables.append(('events.csv', ('t', 'kind', 'location', 'detail'),
                       [(t, kind, loc + 1, detail) for t, kind, loc, detail in wft.events]))
        rows = []
        for j in wft.queue_indices:
            rows.extend((j + 1, t, q) for t, q in wft.queue_knots[j])
        tables.append(('queue_breakpoints.csv', ('processor', 't', 'q'), rows))

    _write(config.directory, tables)
    return EXIT_OK


def cmd_optimize(config):

    """Quantized steepest descent from the configured control."""

    trace = optimize(config.chain, config.control, config.grid, config.costspec, config.descent)
    final = trace.final
    summary = [('stop_reason', trace.stop_reason), ('iterations', len(trace) - 1)]
    summary.extend(('tau_%d' % (k + 1), tau) for k, tau in enumerate(final.taus))
    summary.extend([('J1', final.J1), ('J2', final.J2), ('J', final.J)])
    _write(config.directory, [('trace.csv', trace.header(), trace.rows()),
                              ('summary.csv', ('key', 'value'), summary)])
    return EXIT_OK


def cmd_compare(config):

    """Upwind-Euler against front tracking at t = T over ``nu_list``; a
    single level gives a plain distance report."""

    chain, control = config.chain, config.control
    if len(config.nu_list) == 1:
        nu = config.nu_list[0]
        grid = build_grid(chain, config.base_dx, nu, control.horizon)
        dist = analysis.solver_distance(ue_simulate(chain, control, grid),
                                        wft_solve(chain, control, control.horizon))
        _write(config.directory, [('distance.csv', ('nu', 'dx', 'distance'), [(nu, grid.dx, dist)])])
        return EXIT_OK

    report = analysis.convergence_order(chain, control, config.costspec, config.base_dx,
                                        config.nu_list, config.ncpus)
    rows = [(nu, dx, dist, order, res) for (nu, dx, dist, order), res
            in zip(report.rows(), report.residuals)]
    _write(config.directory,
           [('convergence.csv', ('nu', 'dx', 'distance', 'order', 'mass_residual'), rows),
            ('convergence_summary.csv', ('key', 'value'), [('fitted_order', report.fitted_order)])])
    return EXIT_OK


def cmd_gradcheck(config):

    """Tangent gradient against central differences; exit status 3 when an
    entry is out of tolerance."""

    check = analysis.gradient_check(config.chain, config.control, config.grid, config.costspec,
                                    backend=config.backend, probe=config.probe, rtol=config.rtol,
                                    noise_factor=config.noise_factor, ncpus=config.ncpus)
    g = check.gradient
    queues = ['Y1_%d' % (j + 1) for j in range(1, config.chain.n_processors)]
    _write(config.directory,
           [('gradcheck.csv', ('k', 'tau', 'tangent', 'fd', 'relative_error', 'status'), check.rows()),
            ('gradient.csv', ['k', 'tau'] + queues + ['Y2', 'g'],
             [[k + 1, g.taus[k]] + list(g.Y1[k, 1:]) + [g.Y2[k], g.values[k]] for k in range(len(g))])])
    if not check.passed:
        logger.warning("gradient check failed for %d discontinuities", check.statuses.count(analysis.FAIL))
        return EXIT_GRADCHECK
    return EXIT_OK


def cmd_scan(config):

    """Cost surface over the first two discontinuity times."""

    if config.scan_tau1 is None or config.scan_tau2 is None:
        raise ConfigError("scan needs scan_tau1 and scan_tau2", config.reader.path, section='analysis')
    surface = analysis.cost_surface(config.chain, config.control, config.grid, config.costspec,
                                    config.scan_tau1, config.scan_tau2, backend=config.backend,
                                    ncpus=config.ncpus)
    _write(config.directory, [('surface.csv', ('tau_1', 'tau_2', 'J'), surface.rows())])
    return EXIT_OK


HANDLERS = dict(simulate=cmd_simulate, optimize=cmd_optimize, compare=cmd_compare,
                gradcheck=cmd_gradcheck, scan=cmd_scan)


def main(argv=None):

    """Entry point of the ``ghkchain`` console script; returns the exit
    status."""

    parser = argparse.ArgumentParser(prog='ghkchain',
                                     description="Simulate and optimize supply chains of "
                                                 "processors and queues")
    parser.add_argument('command', choices=COMMANDS)
    parser.add_argument('--config', required=True, help="path to the YAML run configuration")
    parser.add_argument('--set', dest='overrides', action='append', default=[],
                        metavar='SECTION.KEY=VALUE', help="override one configuration value")
    parser.add_argument('--out', help="output directory, overrides output.directory")
    parser.add_argument('-v', '--verbose', action='count', default=0,
                        help="-v for one line per run, -vv for every event")
    args = parser.parse_args(argv)

    configure_logging(args.verbose)
    try:
        config = RunConfig.from_file(args.config, args.overrides)
        if args.out is not None:
            config.directory = args.out
        return HANDLERS[args.command](config)
    except ValueError as err:
        sys.stderr.write('ghkchain: error: %s\n' % err)
        return EXIT_CONFIG


if __name__ == '__main__':  # pragma: no cover
    sys.exit(main())
