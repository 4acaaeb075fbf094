from __future__ import division
import os

import numpy as np
import numpy.testing as npt

import ghkchain
import ghkchain.analysis as ana
from ghkchain.cli import RunConfig
from ghkchain.chain import SupplyChain, PiecewiseConstantControl, CostSpec
from ghkchain.upwind import build_grid, ue_simulate
from ghkchain.utilities import StepFunction
from ghkchain.wft import wft_solve

MU_A = [200, 75, 100, 65, 150, 75, 30, 100, 80, 100, 120]


def _case(taus, levels, quantum=None):
    chain = SupplyChain.from_arrays(MU_A, base_unit=1.0)
    control = PiecewiseConstantControl(taus, levels, 10.0, quantum=quantum)
    grid = build_grid(chain, 0.02, 0, 10.0)
    return chain, control, grid, CostSpec(1.0, 0.0, 0.0, 10.0)


def _saturating():
    chain = SupplyChain.from_arrays([200.0, 75.0], base_unit=1.0)
    control = PiecewiseConstantControl([1.0], [100.0, 51.0], 3.5)
    return chain, control, CostSpec(1.0, 0.0, 0.0, 3.5)


def test_tracking_cost():

    # outflow 0 then 75 against a target of 100 then 75
    chain = SupplyChain.from_arrays([200.0, 75.0], base_unit=1.0)
    control = PiecewiseConstantControl([5.0, 12.0], [100.0, 80.0, 50.0], 20.0)
    psi = StepFunction([10.0], [100.0, 75.0], 0.0, 20.0)
    spec = CostSpec(0.5, 0.5, psi, 20.0)

    exact = ana.cost(wft_solve(chain, control, 20.0), spec)
    npt.assert_allclose(exact.J1, 911.0, rtol=1e-12)
    npt.assert_allclose(exact.J2, 12500.0, rtol=1e-12)
    npt.assert_allclose(exact.J, 13411.0, rtol=1e-12)

    grid = build_grid(chain, 0.02, 0, 20.0)
    approx = ana.cost(ue_simulate(chain, control, grid), spec)
    npt.assert_allclose(approx.J2, 12500.0, rtol=1e-9)
    npt.assert_allclose(approx.J1, 911.0, rtol=1e-3)

    npt.assert_raises(ValueError, ana.cost, wft_solve(chain, control, 20.0), CostSpec(horizon=10.0))


def test_projections():

    f = ana.project_pc([1.0, 2.0], 0.5)
    npt.assert_equal(f(0.25), 1.0)
    npt.assert_equal(f(0.75), 2.0)
    npt.assert_almost_equal(f.integral(0, 1), 1.5)

    g = ana.project_pc([1.0, 2.0], 0.5, offset=1.0)
    npt.assert_equal(g(1.6), 2.0)

    q = ana.project_pl([0.0, 1.0, 0.0], 0.5)
    npt.assert_almost_equal(q(0.25), 0.5)
    npt.assert_almost_equal(q.integral(0, 1), 0.5)


def test_solver_distance():

    # pure advection on grid: both solvers agree
    chain = SupplyChain.from_arrays([200.0, 200.0], base_unit=1.0)
    control = PiecewiseConstantControl([0.5, 1.5], [100.0, 40.0, 150.0], 3.0)
    grid = build_grid(chain, 0.1, 0, 3.0)
    ue = ue_simulate(chain, control, grid)
    wft = wft_solve(chain, control, 3.0)

    assert ana.solver_distance(ue, wft) < 1e-9
    assert ana.solver_distance(ue, wft, times=[0.5, 1.0, 2.2]) < 1e-9

    npt.assert_raises(ValueError, ana.solver_distance, ue, wft, 3.5)
    npt.assert_raises(ValueError, ana.solver_distance, ue, wft_solve(chain, control, 2.0))


def test_convergence_order():

    chain, control, spec = _saturating()
    report = ana.convergence_order(chain, control, spec, 0.5, [0, 1, 2, 3])

    npt.assert_allclose(report.distances, [11.0, 5.0, 2.0, 0.5], rtol=1e-9)
    npt.assert_allclose(report.orders, np.log2([2.2, 2.5, 4.0]), rtol=1e-9)
    npt.assert_allclose(report.mass_constants, [22.0, 20.0, 16.0, 8.0], rtol=1e-9)
    npt.assert_equal(report.dxs, [0.5, 0.25, 0.125, 0.0625])

    # at least first order
    assert np.all(2.0 ** report.orders >= 1.8)
    assert report.fitted_order > 1.0

    rows = list(report.rows())
    npt.assert_equal(len(rows), 4)
    assert np.isnan(rows[0][3])

    # the front tracking solution balances mass
    wft = wft_solve(chain, control, 3.5)
    npt.assert_allclose(wft.mass_balance()['residual'], 0.0, atol=1e-10)


def test_convergence_errors():
    chain, control, spec = _saturating()
    npt.assert_raises(ValueError, ana.convergence_order, chain, control, spec, 0.5, [0, 1])
    npt.assert_raises(ValueError, ana.convergence_order, chain, control, spec, 0.5, [0, 2, 1])


def test_exact_ladder():

    # no distance at all: every order is infinite
    report = ana.ConvergenceReport([0, 1, 2], [0.1, 0.05, 0.025], [0.0, 0.0, 0.0],
                                   [0.0, 0.0, 0.0], [1.0, 1.0, 1.0])
    npt.assert_equal(report.orders, [np.inf, np.inf])
    npt.assert_equal(report.fitted_order, np.inf)


def test_fd_gradient():

    # the cost is quadratic in the times here, central differences are exact
    chain, control, grid, spec = _case((1.0, 3.0), (90, 100, 125))
    npt.assert_allclose(ana.fd_gradient(chain, control, grid, spec, 0), -80.0, rtol=1e-9)
    npt.assert_allclose(ana.fd_gradient(chain, control, grid, spec, 1, backend='wft'), -150.0,
                        rtol=1e-9)
    npt.assert_allclose(ana.fd_gradients(chain, control, grid, spec), [-80.0, -150.0], rtol=1e-9)
    npt.assert_allclose(ana.fd_gradients(chain, control, grid, spec, ncpus=2), [-80.0, -150.0],
                        rtol=1e-9)

    npt.assert_raises(ValueError, ana.fd_gradient, chain, control, grid, spec, 2)
    npt.assert_raises(ValueError, ana.fd_gradient, chain, control, grid, spec, 0, 'ue', 1.0)
    npt.assert_raises(ValueError, ana.evaluate, chain, control, grid, spec, 'fd')

    # the first time cannot move one step earlier
    chain, control, grid, spec = _case((0.02, 3.0), (90, 100, 125))
    fd = ana.fd_gradients(chain, control, grid, spec)
    assert np.isnan(fd[0])
    npt.assert_allclose(fd[1], -150.0, rtol=1e-9)


def test_gradient_check():

    chain, control, grid, spec = _case((1.0, 3.0), (90, 100, 125))

    check = ana.gradient_check(chain, control, grid, spec, noise_factor=0.1)
    npt.assert_equal(check.statuses, [ana.OK, ana.OK])
    assert check.passed
    assert np.all(check.relative_errors < 1e-6)
    npt.assert_almost_equal(check.floor, 0.1 * 0.02 * 1903.5)

    rows = list(check.rows())
    npt.assert_equal(rows[1][0], 2)
    npt.assert_equal(rows[1][1], 3.0)

    # the default floor hides gradients this small on a cost this large
    check = ana.gradient_check(chain, control, grid, spec)
    npt.assert_equal(check.statuses, [ana.STATIONARY, ana.STATIONARY])
    assert check.passed

    check = ana.gradient_check(chain, control, grid, spec, backend='wft', noise_factor=0.1)
    npt.assert_equal(check.statuses, [ana.OK, ana.OK])

    # a time one step from the boundary is skipped
    chain, control, grid, spec = _case((0.02, 3.0), (90, 100, 125))
    check = ana.gradient_check(chain, control, grid, spec, noise_factor=0.1)
    npt.assert_equal(check.statuses[0], ana.SKIPPED)


def test_tracking_gradient_check():

    path = os.path.join(os.path.dirname(ghkchain.__file__), 'configs', 'two_arc_tracking.yaml')
    config = RunConfig.from_file(path)
    args = (config.chain, config.control, config.grid, config.costspec)
    npt.assert_almost_equal(config.noise_factor, 0.1)

    fd = ana.fd_gradients(*args)
    npt.assert_allclose(fd, [134.0, 96.0], rtol=5e-3)

    for backend in ('ue', 'wft'):
        check = ana.gradient_check(*args, backend=backend, rtol=config.rtol,
                                   noise_factor=config.noise_factor)
        npt.assert_equal(check.statuses, [ana.OK, ana.OK])
        assert check.passed
        npt.assert_allclose(check.fd, fd, rtol=5e-3)
        npt.assert_allclose(check.tangent, [134.0, 96.0], rtol=5e-3)
        assert np.all(check.relative_errors < 5e-3)


def test_cost_surface():

    chain, control, grid, spec = _case((4.0, 5.0), (100, 90, 125))
    surface = ana.cost_surface(chain, control, grid, spec, [1.0, 2.0, 6.0], [2.0, 5.0])

    # invalid orderings are left out
    assert np.isnan(surface.values[1, 0])
    assert np.all(np.isnan(surface.values[2]))

    npt.assert_allclose(surface.values[0], [2075.0, 1497.5], rtol=1e-9)
    npt.assert_allclose(surface.values[1, 1], 1572.5, rtol=1e-9)
    npt.assert_allclose(surface.argmin(), (1.0, 5.0, 1497.5), rtol=1e-9)
    npt.assert_equal(len(list(surface.rows())), 6)

    flat = PiecewiseConstantControl([2.0], [90.0, 100.0], 10.0)
    npt.assert_raises(ValueError, ana.cost_surface, chain, flat, grid, spec, [1.0], [2.0])
