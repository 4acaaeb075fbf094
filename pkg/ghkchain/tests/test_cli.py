from __future__ import division
import logging
import os
import tempfile

import numpy as np
import numpy.testing as npt

import ghkchain
from ghkchain import cli

CONFIGS = os.path.join(os.path.dirname(ghkchain.__file__), 'configs')

SMALL = """\
chain:
  mu: [200, 75]
  base_unit: 1
control:
  horizon: 3.5
  taus: [1]
  levels: [100, 250]
grid:
  base_dx: 0.5
"""


def _write_config(text):
    path = os.path.join(tempfile.mkdtemp(), 'run.yaml')
    with open(path, 'w') as fid:
        fid.write(text)
    return path


def _read(directory, name):
    with open(os.path.join(directory, name)) as fid:
        return fid.read()


def _table(directory, name):
    return np.genfromtxt(os.path.join(directory, name), delimiter=',', names=True)


def test_simulate():

    out = os.path.join(tempfile.mkdtemp(), 'run')
    config = os.path.join(CONFIGS, 'saturating_two_arc.yaml')
    npt.assert_equal(cli.main(['simulate', '--config', config, '--out', out]), cli.EXIT_OK)

    for name in ('queue_2.csv', 'outflow.csv', 'cost.csv', 'mass.csv', 'density.csv',
                 'events.csv', 'queue_breakpoints.csv'):
        assert os.path.isfile(os.path.join(out, name)), name

    queue = _table(out, 'queue_2.csv')
    npt.assert_almost_equal(queue['t'], np.arange(8) * 0.5)
    npt.assert_almost_equal(queue['ue'][:5], [0, 0, 0, 12.5, 25.0])
    npt.assert_almost_equal(queue['wft'][4], 25.0)

    mass = np.genfromtxt(os.path.join(out, 'mass.csv'), delimiter=',', names=True, dtype=None,
                         encoding='ascii')
    npt.assert_allclose(mass['residual'][1], 0.0, atol=1e-9)

    assert 'queue-empties' in _read(out, 'events.csv')

    # a second run reproduces every file
    again = os.path.join(tempfile.mkdtemp(), 'run')
    cli.main(['simulate', '--config', config, '--out', again])
    for name in os.listdir(out):
        npt.assert_equal(_read(again, name), _read(out, name))


def test_config_error(capsys):

    path = _write_config(SMALL)
    out = os.path.join(tempfile.mkdtemp(), 'run')

    # the second level exceeds mu_1
    npt.assert_equal(cli.main(['simulate', '--config', path, '--out', out]), cli.EXIT_CONFIG)
    err = capsys.readouterr().err
    assert '%s:7: [control] levels:' % path in err
    assert not os.path.exists(out)

    # an override repairs it
    npt.assert_equal(cli.main(['simulate', '--config', path, '--out', out,
                               '--set', 'control.levels=[100, 51]']), cli.EXIT_OK)
    assert os.path.isfile(os.path.join(out, 'cost.csv'))


def test_bad_values(capsys):

    path = _write_config(SMALL.replace('[200, 75]', '[200, -75]'))
    npt.assert_equal(cli.main(['simulate', '--config', path]), cli.EXIT_CONFIG)
    assert 'mu must be positive' in capsys.readouterr().err

    path = _write_config(SMALL.replace('base_dx: 0.5', 'base_dx: 0.3'))
    npt.assert_equal(cli.main(['simulate', '--config', path]), cli.EXIT_CONFIG)
    assert '[grid] base_dx' in capsys.readouterr().err

    path = _write_config(SMALL.replace('  mu: [200, 75]\n', ''))
    npt.assert_equal(cli.main(['simulate', '--config', path]), cli.EXIT_CONFIG)
    assert '[chain] mu: missing required value' in capsys.readouterr().err

    path = _write_config(SMALL)
    npt.assert_equal(cli.main(['simulate', '--config', path, '--set', 'levels']), cli.EXIT_CONFIG)
    assert '--set' in capsys.readouterr().err

    npt.assert_equal(cli.main(['simulate', '--config', path + '.missing']), cli.EXIT_CONFIG)
    npt.assert_equal(cli.main(['simulate', '--config', _write_config('chain: [\n')]), cli.EXIT_CONFIG)

    path = _write_config(SMALL.replace('[100, 250]', '[100, 51]') + 'output:\n  events: maybe\n')
    npt.assert_equal(cli.main(['simulate', '--config', path]), cli.EXIT_CONFIG)
    assert 'expected true or false' in capsys.readouterr().err


def test_snapping(caplog):

    path = _write_config(SMALL.replace('[100, 250]', '[100, 51]').replace('[1]', '[1.1]'))
    with caplog.at_level(logging.WARNING):
        config = cli.RunConfig.from_file(path)
    assert 'snapped' in caplog.text
    npt.assert_equal(config.control.taus, [1.0])
    npt.assert_equal(config.control.quantum, 0.5)


def test_reader():

    path = _write_config(SMALL + 'cost:\n  alpha2: 0.5\n  psi:\n    values: [100, 75]\n'
                                 '    breaks: [2]\n')
    config = cli.RunConfig.from_file(path, ['control.levels=[100, 51]', 'analysis.backend=wft'])
    npt.assert_equal(config.control.levels, [100, 51])
    npt.assert_equal(config.backend, 'wft')
    npt.assert_equal(config.costspec.psi(2.5), 75.0)
    assert config.costspec.tracks_outflow
    npt.assert_equal(config.nu_list, [0])
    assert config.scan_tau1 is None

    # the overridden value is reported against --set
    try:
        cli.RunConfig.from_file(path, ['control.levels=[100, 51]', 'analysis.backend=fd'])
    except cli.ConfigError as err:
        assert str(err).startswith('--set: [analysis] backend')
    else:
        raise AssertionError("no error for an unknown backend")


def test_compare_and_scan(capsys):

    out = tempfile.mkdtemp()
    config = os.path.join(CONFIGS, 'saturating_two_arc.yaml')

    npt.assert_equal(cli.main(['compare', '--config', config, '--out', out,
                               '--set', 'grid.nu_list=[0]']), cli.EXIT_OK)
    dist = _table(out, 'distance.csv')
    npt.assert_allclose(float(dist['distance']), 11.0, rtol=1e-9)

    npt.assert_equal(cli.main(['compare', '--config', config, '--out', out]), cli.EXIT_OK)
    conv = _table(out, 'convergence.csv')
    npt.assert_allclose(conv['distance'], [11.0, 5.0, 2.0, 0.5], rtol=1e-9)

    # the saturating run has a single discontinuity and no scan axes
    npt.assert_equal(cli.main(['scan', '--config', config, '--out', out]), cli.EXIT_CONFIG)
    assert 'scan_tau1' in capsys.readouterr().err


def test_gradcheck_without_discontinuities():

    out = tempfile.mkdtemp()
    path = _write_config(SMALL.replace('[100, 250]', '[100]').replace('[1]', '[]'))
    npt.assert_equal(cli.main(['gradcheck', '--config', path, '--out', out]), cli.EXIT_OK)
    npt.assert_equal(_read(out, 'gradcheck.csv'), 'k,tau,tangent,fd,relative_error,status\n')
    npt.assert_equal(_read(out, 'gradient.csv'), 'k,tau,Y1_2,Y2,g\n')


def test_gradcheck_case_a():

    out = tempfile.mkdtemp()
    config = os.path.join(CONFIGS, 'case_a.yaml')
    npt.assert_equal(cli.main(['gradcheck', '--config', config, '--out', out]), cli.EXIT_OK)
    text = _read(out, 'gradcheck.csv')
    npt.assert_equal(text.count(',ok'), 2)


def test_optimize():

    out = tempfile.mkdtemp()
    path = _write_config(SMALL.replace('[100, 250]', '[100, 51]'))
    npt.assert_equal(cli.main(['optimize', '--config', path, '--out', out,
                               '--set', 'descent.max_iterations=2']), cli.EXIT_OK)

    trace = _read(out, 'trace.csv').splitlines()
    npt.assert_equal(trace[0], 'iteration,tau_1,J1,J2,J,step_1,h')
    assert trace[1].startswith('0,1,')

    summary = _read(out, 'summary.csv')
    assert summary.startswith('key,value\nstop_reason,')
    assert '\ntau_1,' in summary


def test_scan():

    out = tempfile.mkdtemp()
    path = _write_config(SMALL.replace('[100, 250]', '[100, 51, 40]').replace('[1]', '[1, 2]'))
    npt.assert_equal(cli.main(['scan', '--config', path, '--out', out,
                               '--set', 'analysis.scan_tau1=[0.5, 1.5, 3]',
                               '--set', 'analysis.scan_tau2=[1, 3, 3]']), cli.EXIT_OK)

    surface = _read(out, 'surface.csv').splitlines()
    npt.assert_equal(surface[0], 'tau_1,tau_2,J')
    npt.assert_equal(len(surface), 10)

    # tau_1 = 1 and 1.5 against tau_2 = 1 are out of order
    npt.assert_equal(sum(line.endswith(',nan') for line in surface), 2)


def _rerun(command, name, *overrides):
    """Run a packaged configuration twice and check that every file matches."""
    config = os.path.join(CONFIGS, name)
    argv = [command, '--config', config]
    for item in overrides:
        argv.extend(['--set', item])

    out, again = tempfile.mkdtemp(), tempfile.mkdtemp()
    status = cli.main(argv + ['--out', out])
    npt.assert_equal(cli.main(argv + ['--out', again]), status)

    names = sorted(os.listdir(out))
    assert names
    npt.assert_equal(sorted(os.listdir(again)), names)
    for table in names:
        npt.assert_equal(_read(again, table), _read(out, table))
    return status, out


def test_rerun_optimize():

    status, out = _rerun('optimize', 'case_a.yaml', 'descent.max_iterations=3')
    npt.assert_equal(status, cli.EXIT_OK)
    npt.assert_equal(len(_read(out, 'trace.csv').splitlines()), 5)

    status, out = _rerun('optimize', 'two_arc_tracking.yaml', 'descent.max_iterations=3')
    npt.assert_equal(status, cli.EXIT_OK)
    assert 'stop_reason,max_iterations' in _read(out, 'summary.csv')


def test_rerun_compare():

    status, out = _rerun('compare', 'saturating_two_arc.yaml')
    npt.assert_equal(status, cli.EXIT_OK)
    npt.assert_equal(sorted(os.listdir(out)), ['convergence.csv', 'convergence_summary.csv'])

    status, out = _rerun('compare', 'two_arc_tracking.yaml', 'grid.nu_list=[0]')
    npt.assert_equal(status, cli.EXIT_OK)
    npt.assert_equal(os.listdir(out), ['distance.csv'])


def test_rerun_gradcheck():

    status, out = _rerun('gradcheck', 'two_arc_tracking.yaml')
    npt.assert_equal(status, cli.EXIT_OK)
    npt.assert_equal(_read(out, 'gradcheck.csv').count(',ok'), 2)

    status, out = _rerun('gradcheck', 'case_b.yaml')
    assert status in (cli.EXIT_OK, cli.EXIT_GRADCHECK)
    npt.assert_equal(sorted(os.listdir(out)), ['gradcheck.csv', 'gradient.csv'])


def test_rerun_scan():

    status, out = _rerun('scan', 'two_arc_tracking.yaml',
                         'analysis.scan_tau1=[1, 9, 3]', 'analysis.scan_tau2=[3, 15, 3]')
    npt.assert_equal(status, cli.EXIT_OK)
    surface = _read(out, 'surface.csv').splitlines()
    npt.assert_equal(len(surface), 10)
    # tau_1 = 5 and 9 against tau_2 = 3, and tau_1 = tau_2 = 9, are out of order
    npt.assert_equal(sum(line.endswith(',nan') for line in surface), 3)
