import math

import numpy as np
import pytest

from scripts.errors import IntegrationError
from scripts.ode_integrator import IntegratorConfig, OdeProblem, integrate, integrate_piecewise


def decay(t, y):
    return -y


def decay_problem(t_end=1.0):
    return OdeProblem(dimension=1, rhs=decay, t_span=(0.0, t_end), y0=np.array([1.0]))


@pytest.mark.parametrize('method', ['rk45_adaptive', 'rk4_fixed'])
def test_exponential_decay_reaches_inverse_e(method):
    cfg = IntegratorConfig(method=method, rel_tol=1e-8, abs_tol=1e-10, initial_step=0.01 if method == 'rk4_fixed' else None)
    y = integrate(decay_problem(), cfg, [1.0])
    assert abs(y[0, 0] - math.exp(-1.0)) <= 1e-6


def test_rk4_converges_at_fourth_order():
    errors = []
    for h in (0.1, 0.05, 0.025):
        cfg = IntegratorConfig(method='rk4_fixed', initial_step=h)
        y = integrate(decay_problem(), cfg, [1.0])
        errors.append(abs(y[0, 0] - math.exp(-1.0)))
    orders = [math.log2(errors[k] / errors[k + 1]) for k in range(2)]
    for order in orders:
        assert 3.8 <= order <= 4.2


def test_dense_output_matches_solution_on_fine_grid():
    grid = np.linspace(0.0, 5.0, 501)
    y = integrate(decay_problem(5.0), IntegratorConfig(rel_tol=1e-9, abs_tol=1e-12), grid)
    np.testing.assert_allclose(y[:, 0], np.exp(-grid), rtol=1e-6, atol=1e-9)


def test_output_grid_may_repeat_times():
    y = integrate(decay_problem(), IntegratorConfig(), [0.0, 0.5, 0.5, 1.0])
    assert y.shape == (4, 1)
    assert y[0, 0] == 1.0
    assert y[1, 0] == y[2, 0]


def test_unsorted_or_out_of_span_grid_is_rejected():
    with pytest.raises(ValueError):
        integrate(decay_problem(), IntegratorConfig(), [0.5, 0.2])
    with pytest.raises(ValueError):
        integrate(decay_problem(), IntegratorConfig(), [0.0, 2.0])


def test_non_finite_derivative_reports_time():
    def blow_up(t, y):
        return np.array([np.nan]) if t > 0.5 else -y

    problem = OdeProblem(dimension=1, rhs=blow_up, t_span=(0.0, 1.0), y0=np.array([1.0]))
    with pytest.raises(IntegrationError) as info:
        integrate(problem, IntegratorConfig(max_step=0.1), [1.0])
    assert info.value.t >= 0.5


def test_step_limit_raises_integration_error():
    problem = OdeProblem(dimension=1, rhs=decay, t_span=(0.0, 100.0), y0=np.array([1.0]))
    with pytest.raises(IntegrationError):
        integrate(problem, IntegratorConfig(max_steps=3, max_step=1.0), [100.0])


def test_piecewise_restarts_at_breakpoints():
    slopes = [1.0, -1.0, 0.5]

    def rhs_for_segment(k):
        return lambda t, y: np.array([slopes[k]])

    grid = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0]
    y = integrate_piecewise(rhs_for_segment, [0.0, 1.0, 2.0, 3.0], np.array([0.0]), IntegratorConfig(), grid)
    np.testing.assert_allclose(y[:, 0], [0.0, 0.5, 1.0, 0.5, 0.0, 0.5], atol=1e-12)


def test_piecewise_stops_at_last_output_time():
    calls = []

    def rhs_for_segment(k):
        calls.append(k)
        return decay

    integrate_piecewise(rhs_for_segment, [0.0, 1.0, 2.0, 3.0], np.array([1.0]), IntegratorConfig(), [0.0, 1.5])
    assert calls == [0, 1]


def test_invalid_configuration_is_rejected():
    with pytest.raises(ValueError):
        IntegratorConfig(method='euler')
    with pytest.raises(ValueError):
        IntegratorConfig(rel_tol=0.0)
    with pytest.raises(ValueError):
        OdeProblem(dimension=1, rhs=decay, t_span=(1.0, 1.0), y0=np.array([1.0]))


# -- accuracy on systems with known solutions ------------------------------

def oscillator(t, y):
    return np.array([y[1], -y[0]])


def oscillator_problem(t_end):
    return OdeProblem(dimension=2, rhs=oscillator, t_span=(0.0, t_end), y0=np.array([1.0, 0.0]))


def test_harmonic_oscillator_returns_after_one_period():
    cfg = IntegratorConfig(rel_tol=1e-8, abs_tol=1e-10)
    y = integrate(oscillator_problem(2 * math.pi), cfg, [2 * math.pi])
    np.testing.assert_allclose(y[0], [1.0, 0.0], rtol=0, atol=1e-5)


def test_harmonic_oscillator_energy_drift_over_ten_periods():
    grid = np.linspace(0.0, 20 * math.pi, 2001)
    y = integrate(oscillator_problem(20 * math.pi), IntegratorConfig(rel_tol=1e-8, abs_tol=1e-10), grid)
    energy = 0.5 * (y[:, 0] ** 2 + y[:, 1] ** 2)
    assert np.max(np.abs(energy / 0.5 - 1.0)) <= 1e-5


def test_solution_does_not_depend_on_initial_step():
    rel_tol = 1e-6
    grid = np.linspace(0.0, 10.0, 41)
    small = integrate(oscillator_problem(10.0), IntegratorConfig(rel_tol=rel_tol, abs_tol=1e-9, initial_step=1e-3), grid)
    large = integrate(oscillator_problem(10.0), IntegratorConfig(rel_tol=rel_tol, abs_tol=1e-9, initial_step=0.5), grid)
    assert np.max(np.abs(small - large)) <= 10 * rel_tol


LINEAR_SYSTEM = np.array([[-1.0, 2.0], [-2.0, -1.0]])


def linear_solution(y0, cfg, grid):
    problem = OdeProblem(dimension=2, rhs=lambda t, y: LINEAR_SYSTEM @ y, t_span=(0.0, 5.0), y0=np.asarray(y0))
    return integrate(problem, cfg, grid)


@pytest.mark.parametrize('cfg', [
    IntegratorConfig(rel_tol=1e-10, abs_tol=1e-14),
    IntegratorConfig(method='rk4_fixed', initial_step=0.01),
], ids=['rk45_adaptive', 'rk4_fixed'])
def test_linear_system_scales_and_superposes(cfg):
    grid = np.linspace(0.0, 5.0, 26)
    a, b = np.array([1.0, 0.5]), np.array([-0.3, 2.0])
    ya = linear_solution(a, cfg, grid)
    yb = linear_solution(b, cfg, grid)
    np.testing.assert_allclose(linear_solution(3.0 * a, cfg, grid), 3.0 * ya, rtol=1e-7, atol=1e-8)
    np.testing.assert_allclose(linear_solution(a + b, cfg, grid), ya + yb, rtol=1e-7, atol=1e-8)
