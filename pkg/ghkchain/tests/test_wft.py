from __future__ import division

import numpy as np
import numpy.testing as npt

import ghkchain.wft as wft
from ghkchain.analysis import cost
from ghkchain.chain import SupplyChain, Processor, PiecewiseConstantControl, CostSpec
from ghkchain.utilities import StepFunction

MU_A = [200, 75, 100, 65, 150, 75, 30, 100, 80, 100, 120]


def _saturating():
    chain = SupplyChain.from_arrays([200.0, 75.0], base_unit=1.0)
    control = PiecewiseConstantControl([1.0], [100.0, 51.0], 3.5)
    return chain, control


def test_solve_rp():

    wave = wft.solve_rp(10.0, 20.0, 1.0, 75.0, processor=1, t=2.0)
    npt.assert_equal(wave.jump, -10.0)
    npt.assert_equal(wave.speed, 1.0)
    npt.assert_equal(wave.position(2.5), 0.5)

    assert wft.solve_rp(10.0, 10.0, 1.0, 75.0) is None
    npt.assert_raises(ValueError, wft.solve_rp, 80.0, 10.0, 1.0, 75.0)
    npt.assert_raises(ValueError, wft.solve_rp, -1.0, 10.0, 1.0, 75.0)


def test_event_order():

    chain, control = _saturating()
    solution = wft.wft_solve(chain, control, 3.5)

    kinds = [e[1] for e in solution.events]
    npt.assert_equal(kinds, [wft.WAVE_HITS_QUEUE, wft.CONTROL_JUMP, wft.WAVE_EXITS,
                             wft.WAVE_HITS_QUEUE, wft.QUEUE_EMPTIES])
    times = [e[0] for e in solution.events]
    npt.assert_almost_equal(times, [1.0, 1.0, 2.0, 2.0, 2 + 25 / 24])

    # the queue fills to 25 and runs empty at an off-grid time
    npt.assert_almost_equal(solution.queue_at(1, 2.0), 25.0)
    npt.assert_almost_equal(solution.queue_at(1, 3.0), 1.0)
    npt.assert_equal(solution.queue_at(1, 3.5), 0.0)
    npt.assert_almost_equal(solution.queue_knots[1][-2], [2 + 25 / 24, 0.0])

    # the reproducible log
    again = wft.wft_solve(chain, control, 3.5)
    npt.assert_equal(again.events, solution.events)


def test_density_profile():

    chain, control = _saturating()
    solution = wft.wft_solve(chain, control, 3.5)

    rho = solution.density_profile(1, 1.5)
    npt.assert_equal(rho(0.25), 75.0)
    npt.assert_equal(rho(0.75), 0.0)
    npt.assert_almost_equal(solution.processor_mass(1, 1.5), 37.5)

    waves = solution.waves(1, 1.5)
    npt.assert_equal(len(waves), 1)
    npt.assert_equal(waves[0].rho_left, 75.0)
    npt.assert_equal(waves[0].rho_right, 0.0)
    npt.assert_almost_equal(waves[0].position(1.5), 0.5)

    # the processor releases 51 after the queue empties
    npt.assert_equal(solution.inlet_function(1)(3.2), 51.0)
    npt.assert_equal(solution.outflow_function()(1.5), 0.0)
    npt.assert_equal(solution.outflow_function()(2.5), 75.0)


def test_mass_balance():

    chain, control = _saturating()
    solution = wft.wft_solve(chain, control, 3.5)
    for t in (0.5, 1.0, 2.0, 2 + 25 / 24, 3.5):
        balance = solution.mass_balance(t)
        npt.assert_allclose(balance['residual'], 0.0, atol=1e-10 * max(1.0, balance['inflow']))


def test_initial_data():

    # a loaded queue and a step in the initial density
    rho0 = StepFunction([0.5], [40.0, 10.0], 0.0, 1.0)
    chain = SupplyChain([Processor(0, 1.0, 1.0, 200.0), Processor(1, 1.0, 1.0, 75.0)],
                        initial_density=[rho0, 0.0], initial_queues=[0.0, 10.0], base_unit=1.0)
    control = PiecewiseConstantControl([], [60.0], 3.0)
    solution = wft.wft_solve(chain, control, 3.0)

    # the density near the outlet leaves first
    inlet = solution.inlet_function(0)
    npt.assert_equal(inlet(-0.75), 10.0)
    npt.assert_equal(inlet(-0.25), 40.0)
    npt.assert_equal(solution.exit_function(0)(0.75), 40.0)

    # the queue drains at 75 - 10 until it runs empty at 10 / 65
    npt.assert_almost_equal(solution.queue_at(1, 0.1), 10 - 6.5)
    npt.assert_equal(solution.queue_at(1, 0.5), 0.0)
    npt.assert_equal(solution.events[0][1], wft.QUEUE_EMPTIES)
    npt.assert_almost_equal(solution.events[0][0], 10 / 65)

    balance = solution.mass_balance()
    npt.assert_allclose(balance['residual'], 0.0, atol=1e-10 * balance['inflow'])


def test_case_a_exact_cost():

    chain = SupplyChain.from_arrays(MU_A, base_unit=1.0)
    control = PiecewiseConstantControl([1.0, 3.0], [90, 100, 125], 10.0)
    solution = wft.wft_solve(chain, control, 10.0)
    breakdown = cost(solution, CostSpec(1.0, 0.0, 0.0, 10.0))

    npt.assert_allclose(breakdown.J1, 1902.5, rtol=1e-12)
    npt.assert_allclose(breakdown.queue_costs[[1, 3, 6]], [1377.5, 245.0, 280.0], rtol=1e-12)

    # events come out in time order
    times = np.array([e[0] for e in solution.events])
    assert np.all(np.diff(times) >= 0)

    npt.assert_raises(wft.EventLimitExceeded, wft.wft_solve, chain, control, 10.0, None, 2)


def test_collapse():
    times, values = wft._collapse([-1.0, 0.0, 0.0, 1.0], [0.0, 5.0, 7.0, 7.0])
    npt.assert_equal(times, [-1.0, 0.0])
    npt.assert_equal(values, [0.0, 7.0])
