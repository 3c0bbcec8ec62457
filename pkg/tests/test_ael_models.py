import math
from dataclasses import replace

import numpy as np
import pytest

from scripts.ael_models import (
    ForwardContext,
    HtoParams,
    HtoState,
    InputSchedule,
    OperatingPoint,
    PlantConstants,
    PolarizationParams,
    ThermalParams,
    ThermalState,
    cell_voltage,
    convection_flux,
    crossover_flux,
    diffusion_flux,
    gas_lye_ratio,
    gas_production_rate,
    hto_time_constants,
    hto_transfer_steady_state,
    initial_hto_state,
    polarization_curve,
    simulate_hto,
    simulate_observables,
    simulate_polarization,
    simulate_thermal,
    thermal_rhs,
    thermal_steady_state,
)
from scripts.errors import ModelDomainError
from scripts.ode_integrator import IntegratorConfig

SIMPLE_CURVE = PolarizationParams(r1=1e-4, r2=0.0, r3=0.0, s=0.2, t1=0.05, t2=0.0, t3=0.0)
RATED_CURRENT_DENSITY = 820.0 / 0.196


# -- polarization ----------------------------------------------------------

def test_cell_voltage_matches_hand_evaluation():
    op = OperatingPoint(i_cell=1000.0, temperature=353.15, pressure=16.0)
    u = cell_voltage(SIMPLE_CURVE, op, u_rev=1.2)
    assert u == pytest.approx(1.2 + 0.1 + 0.2 * math.log10(51.0), abs=1e-12)
    assert u == pytest.approx(1.64151, abs=1e-5)


def test_cell_voltage_is_reversible_voltage_at_zero_current(polarization_params):
    for params in (SIMPLE_CURVE, polarization_params, replace(SIMPLE_CURVE, t1=-5.0)):
        assert cell_voltage(params, OperatingPoint(0.0, 340.0, 10.0), u_rev=1.229) == 1.229


def test_non_positive_log_argument_is_a_domain_error():
    params = replace(SIMPLE_CURVE, t1=-0.01)
    with pytest.raises(ModelDomainError, match='i_cell=200'):
        cell_voltage(params, OperatingPoint(200.0, 353.15, 16.0), u_rev=1.2)


def test_cell_voltage_increases_with_current_for_positive_parameters():
    rng = np.random.default_rng(3)
    currents = np.linspace(10.0, 5000.0, 60)
    for _ in range(25):
        params = PolarizationParams(
            r1=rng.uniform(1e-5, 3e-4), r2=rng.uniform(0.0, 1e-6), r3=rng.uniform(0.0, 1e-6),
            s=rng.uniform(0.05, 0.3), t1=rng.uniform(0.01, 0.5), t2=rng.uniform(0.0, 30.0), t3=0.0,
        )
        voltages = [cell_voltage(params, OperatingPoint(i, 343.15, 16.0), 1.229) for i in currents]
        assert np.all(np.diff(voltages) > 0)


def test_vectorized_curve_agrees_with_scalar(plant, polarization_params):
    i = np.array([0.0, 500.0, 2000.0, 4000.0])
    temp = np.array([323.15, 333.15, 343.15, 353.15])
    pressure = np.array([10.0, 12.0, 16.0, 20.0])
    vector = polarization_curve(polarization_params, i, temp, pressure, plant)
    scalar = [cell_voltage(polarization_params, OperatingPoint(*row), plant.u_rev, plant)
              for row in zip(i, temp, pressure)]
    np.testing.assert_allclose(vector, scalar, rtol=0, atol=1e-14)


def test_curve_unit_conventions_rescale_inputs(plant):
    params = replace(SIMPLE_CURVE, r2=1e-7, t2=2.0)
    per_cm2 = replace(plant, current_density_unit='A/cm2')
    kelvin = replace(plant, polarization_temperature='kelvin')
    natural = replace(plant, log_base='e')
    i, temp, pressure = np.array([0.1, 0.3]), np.array([353.15, 353.15]), np.array([16.0, 16.0])

    base = polarization_curve(params, i, temp, pressure, plant)
    np.testing.assert_allclose(polarization_curve(params, i * 1e4, temp, pressure, per_cm2), base, atol=1e-14)
    np.testing.assert_allclose(polarization_curve(params, i, temp - 273.15, pressure, kelvin), base, atol=1e-12)

    log_term = base - plant.u_rev - (params.r1 + params.r2 * 80.0) * i
    natural_u = polarization_curve(params, i, temp, pressure, natural)
    np.testing.assert_allclose(natural_u - plant.u_rev - (params.r1 + params.r2 * 80.0) * i,
                               log_term * math.log(10.0), rtol=1e-10)


def test_reference_curve_stays_in_log_domain_over_operating_window(plant, polarization_params):
    i = np.repeat(np.linspace(100.0, 4500.0, 20), 3)
    temp = np.tile([323.15, 338.15, 353.15], 20)
    u = polarization_curve(polarization_params, i, temp, np.full(60, 16.0), plant)
    assert np.all(np.isfinite(u))
    assert np.all(u > plant.u_rev)


def test_simulate_polarization_needs_temperature_column(plant, polarization_params):
    sched = InputSchedule(t=np.array([0.0, 1.0]), i_cell=np.array([1000.0, 2000.0]), pressure=np.array([16.0, 16.0]))
    with pytest.raises(ValueError):
        simulate_polarization(polarization_params, plant, sched, [0.0, 1.0])
    sched = replace(sched, temperature=np.array([343.15, 343.15]))
    u = simulate_polarization(polarization_params, plant, sched, [0.0, 1.0])
    assert u[1] > u[0]


# -- inputs ----------------------------------------------------------------

def test_schedule_previous_and_linear_interpolation():
    sched = InputSchedule(t=np.array([0.0, 10.0, 20.0]), i_cell=np.array([0.0, 100.0, 100.0]),
                          pressure=np.array([10.0, 20.0, 20.0]))
    held = sched.values_at([0.0, 5.0, 10.0, 25.0], t_operating=353.15, t_c_in=293.15)
    np.testing.assert_array_equal(held['i_cell'], [0.0, 0.0, 100.0, 100.0])
    np.testing.assert_array_equal(held['temperature'], [353.15] * 4)

    linear = replace(sched, interpolation='linear').values_at([5.0], 353.15, 293.15)
    assert linear['i_cell'][0] == pytest.approx(50.0)
    assert linear['pressure'][0] == pytest.approx(15.0)
    segment = replace(sched, interpolation='linear').segment_inputs(0, 353.15, 293.15)
    assert segment(5.0)[0] == pytest.approx(50.0)


def test_schedule_validation():
    with pytest.raises(ValueError):
        InputSchedule(t=np.array([0.0]), i_cell=np.array([1.0]), pressure=np.array([1.0]))
    with pytest.raises(ValueError):
        InputSchedule(t=np.array([0.0, 0.0]), i_cell=np.array([1.0, 1.0]), pressure=np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        InputSchedule(t=np.array([0.0, 1.0]), i_cell=np.array([-1.0, 1.0]), pressure=np.array([1.0, 1.0]))


def test_plant_constant_validation(plant):
    assert plant.stack_area == pytest.approx(0.196 * 26)
    with pytest.raises(ValueError):
        replace(plant, c_p_lye=0.0)
    with pytest.raises(ValueError):
        replace(plant, log_base='2')
    with pytest.raises(ValueError):
        replace(plant, eta_f=1.2)
    assert replace(plant, p_flow=0.0, delta_p=0.0).p_flow == 0.0


# -- thermal ---------------------------------------------------------------

def test_thermal_rhs_vanishes_at_global_equilibrium(plant, thermal_params):
    c = replace(plant, t_c_in=plant.t_ambient)
    state = ThermalState(c.t_ambient, c.t_ambient, c.t_ambient)
    rhs = thermal_rhs(state, OperatingPoint(0.0, c.t_ambient, 16.0), thermal_params, c, u_cell=c.u_rev)
    np.testing.assert_allclose(rhs, 0.0, atol=1e-12)


def test_thermal_rhs_heat_flows_down_gradient(plant, thermal_params):
    op = OperatingPoint(0.0, 330.0, 16.0)
    base = thermal_rhs(ThermalState(330.0, 320.0, 320.0), op, thermal_params, plant, plant.u_rev)
    warmer = thermal_rhs(ThermalState(330.0, 320.0, 325.0), op, thermal_params, plant, plant.u_rev)
    assert warmer[1] > base[1]
    assert warmer[2] < base[2]
    assert warmer[0] == base[0]


def test_free_cooling_matches_analytic_exponential(plant, thermal_params, polarization_params, tight_integrator):
    c = replace(plant, p_flow=0.0, v_dot_sep=0.0, v_dot_c=0.0, t_c_in=plant.t_ambient)
    time_constant = thermal_params.c_s * thermal_params.r_hs
    assert time_constant == pytest.approx(2.378e4, rel=1e-3)

    sched = InputSchedule.from_steps([0.0], [0.0], pressure=16.0, t_end=50000.0, t_c_in=c.t_ambient)
    grid = np.linspace(0.0, 50000.0, 51)
    init = ThermalState(340.0, c.t_ambient, c.t_ambient)
    states = simulate_thermal(thermal_params, c, sched, init, grid, tight_integrator, polarization_params)

    expected = c.t_ambient + (340.0 - c.t_ambient) * np.exp(-grid / time_constant)
    np.testing.assert_allclose(states[:, 0], expected, rtol=1e-6)
    np.testing.assert_allclose(states[:, 1:], c.t_ambient, atol=1e-8)


def test_thermal_steady_state_input_gives_flat_trajectory(plant, thermal_params, polarization_params,
                                                          tight_integrator):
    op = OperatingPoint(3000.0, plant.t_operating, 16.0)
    init = thermal_steady_state(thermal_params, plant, op, polarization_params)
    sched = InputSchedule.from_steps([0.0], [3000.0], pressure=16.0, t_end=3600.0, t_c_in=plant.t_c_in)
    states = simulate_thermal(thermal_params, plant, sched, init, np.linspace(0.0, 3600.0, 13),
                              tight_integrator, polarization_params)
    np.testing.assert_allclose(states, np.tile(init.to_vector(), (13, 1)), atol=1e-6)


def test_current_step_rises_monotonically_to_new_steady_state(plant, thermal_params, polarization_params,
                                                              tight_integrator):
    low = thermal_steady_state(thermal_params, plant, OperatingPoint(1500.0, 330.0, 16.0), polarization_params)
    high = thermal_steady_state(thermal_params, plant, OperatingPoint(3000.0, 340.0, 16.0), polarization_params)
    sched = InputSchedule.from_steps([0.0], [3000.0], pressure=16.0, t_end=40000.0, t_c_in=plant.t_c_in)
    grid = np.linspace(0.0, 40000.0, 401)
    states = simulate_thermal(thermal_params, plant, sched, low, grid, tight_integrator, polarization_params)

    assert np.all(np.diff(states[:, 0]) >= -1e-9)
    np.testing.assert_allclose(states[-1], high.to_vector(), atol=1e-6)
    residual = thermal_rhs(high, OperatingPoint(3000.0, high.t_s_out, 16.0), thermal_params, plant,
                           cell_voltage(polarization_params, OperatingPoint(3000.0, high.t_s_out, 16.0),
                                        plant.u_rev, plant))
    np.testing.assert_allclose(residual, 0.0, atol=1e-9)
    assert high.t_s_out > low.t_s_out


def test_thermal_state_sanity_bounds():
    with pytest.raises(ModelDomainError):
        ThermalState(500.0, 300.0, 300.0)
    with pytest.raises(ValueError):
        ThermalParams(c_s=-1.0, r_hs=0.1, k_hx=1.0)


# -- HTO -------------------------------------------------------------------

def test_gas_production_rate_at_rated_current(plant):
    assert gas_production_rate(RATED_CURRENT_DENSITY, plant) == pytest.approx(820.0 * 26 / (4 * 96485.33), rel=1e-12)
    assert gas_production_rate(RATED_CURRENT_DENSITY, plant) == pytest.approx(0.055242, abs=1e-6)
    assert gas_production_rate(0.0, plant) == 0.0
    assert gas_production_rate(2000.0, plant) == pytest.approx(2 * gas_production_rate(1000.0, plant))


def test_crossover_fluxes_per_unit_area():
    unit = PlantConstants(a_cell=1.0, n_cell=1)
    assert diffusion_flux(unit, 1.025e-4, 32.0) == pytest.approx(1e-9 * 3.28 / 5e-4, rel=1e-12)
    assert convection_flux(unit, 1.025e-4, 32.0) == pytest.approx(1e-6 * 3.28, rel=1e-12)
    assert diffusion_flux(unit, 1.025e-4, 64.0) == pytest.approx(2 * diffusion_flux(unit, 1.025e-4, 32.0))
    assert convection_flux(replace(unit, delta_p=0.0), 1.025e-4, 32.0) == 0.0
    assert convection_flux(replace(unit, delta_p=200.0), 1.025e-4, 32.0) == pytest.approx(
        2 * convection_flux(unit, 1.025e-4, 32.0))
    with pytest.raises(ModelDomainError):
        diffusion_flux(unit, 1.025e-4, 0.0)


def test_crossover_flux_scales_with_stack_area(plant):
    unit = replace(plant, a_cell=1.0, n_cell=1)
    assert crossover_flux(plant, 1.025e-4, 16.0) == pytest.approx(plant.stack_area * crossover_flux(unit, 1.025e-4, 16.0))


def test_gas_lye_ratio(plant):
    op = OperatingPoint(RATED_CURRENT_DENSITY, 368.0, 32.0)
    assert gas_lye_ratio(0.0, op, 5.145, plant) == 0.0
    phi = gas_lye_ratio(0.0552, op, 5.145, plant)
    gas = 0.0552 * 8.314 * 368.0 / 3.2e6
    assert phi == pytest.approx(gas / (5.145e-3 / 60.0), rel=1e-12)
    assert gas_lye_ratio(0.1104, op, 5.145, plant) == pytest.approx(2 * phi)
    with pytest.raises(ModelDomainError):
        gas_lye_ratio(0.0552, op, 0.0, plant)


def test_hto_time_constants(plant, hto_params):
    op = OperatingPoint(RATED_CURRENT_DENSITY, 368.0, 32.0)
    tau1, tau2, tau3 = hto_time_constants(hto_params, plant, op)
    assert tau3 == pytest.approx(946.6, rel=1e-3)
    assert tau2 == plant.tau_sep
    plain = hto_time_constants(hto_params, replace(plant, tau1_form='plain'), op)[0]
    assert plain == pytest.approx(2 * 7.835 / 5.145 * 60.0)
    phi = gas_lye_ratio(gas_production_rate(op.i_cell, plant), op, hto_params.v_lye, plant)
    assert tau1 == pytest.approx(plain / (1 + phi))
    with pytest.raises(ModelDomainError):
        hto_time_constants(hto_params, plant, OperatingPoint(0.0, 368.0, 32.0))


def test_steady_state_hto_is_impurity_over_production(plant, hto_params):
    op = OperatingPoint(4000.0, 353.15, 16.0)
    hto = hto_transfer_steady_state(hto_params, plant, op)
    assert hto == pytest.approx(crossover_flux(plant, hto_params.s_h2, 16.0) / gas_production_rate(4000.0, plant))
    assert hto_transfer_steady_state(hto_params, plant, replace(op, i_cell=2000.0)) == pytest.approx(2 * hto)
    with pytest.raises(ModelDomainError):
        hto_transfer_steady_state(hto_params, plant, replace(op, i_cell=0.0))


def test_simulated_hto_converges_to_steady_state_for_random_parameters(plant, hto_params):
    rng = np.random.default_rng(11)
    integ = IntegratorConfig(rel_tol=1e-11, abs_tol=1e-16)
    sched = InputSchedule.from_steps([0.0], [4000.0], pressure=16.0, t_end=60000.0)
    for _ in range(20):
        hp = HtoParams.from_vector(hto_params.to_vector() * rng.uniform(0.8, 1.2, size=3))
        trajectory = simulate_hto(hp, plant, sched, HtoState(), [0.0, 30000.0, 60000.0], integ)
        expected = hto_transfer_steady_state(hp, plant, OperatingPoint(4000.0, plant.t_operating, 16.0))
        assert trajectory.hto[-1] == pytest.approx(expected, rel=1e-6)
        assert np.all(trajectory.states >= 0.0)


def test_hto_rises_after_current_step_down(plant, hto_params, hto_schedule, tight_integrator):
    init = initial_hto_state(hto_params, plant, OperatingPoint(4000.0, plant.t_operating, 16.0))
    grid = np.linspace(0.0, 7200.0, 201)
    trajectory = simulate_hto(hto_params, plant, hto_schedule, init, grid, tight_integrator)
    before = hto_transfer_steady_state(hto_params, plant, OperatingPoint(4000.0, plant.t_operating, 16.0))
    assert trajectory.hto[0] == pytest.approx(before, rel=1e-9)
    assert trajectory.hto[100] == pytest.approx(before, rel=1e-6)
    assert trajectory.hto[-1] > 1.5 * before
    assert np.all(trajectory.defined)


def test_zero_production_samples_hold_last_value(plant, hto_params, tight_integrator):
    sched = InputSchedule.from_steps([0.0, 100.0], [4000.0, 0.0], pressure=16.0, t_end=400.0)
    init = initial_hto_state(hto_params, plant, OperatingPoint(4000.0, plant.t_operating, 16.0))
    trajectory = simulate_hto(hto_params, plant, sched, init, [0.0, 50.0, 100.0, 200.0, 400.0], tight_integrator)
    np.testing.assert_array_equal(trajectory.defined, [True, True, False, False, False])
    assert trajectory.hto[2] == trajectory.hto[1]
    assert trajectory.hto[4] == trajectory.hto[1]
    assert set(trajectory.to_dict()) == {'t', 'hto', 'defined', 'states'}


def test_initial_hto_state_is_empty_without_production(plant, hto_params):
    assert initial_hto_state(hto_params, plant, OperatingPoint(0.0, 353.15, 16.0)) == HtoState()


# -- units -----------------------------------------------------------------

AUDIT_PLANT = PlantConstants()
AUDIT_POINT = OperatingPoint(2000.0, 353.15, 16.0)
AUDIT_HTO = HtoParams(1.025e-4, 7.835, 5.145)


@pytest.mark.parametrize('quantity, scaled, ratio', [
    (lambda: gas_production_rate(2000.0, AUDIT_PLANT),
     lambda: gas_production_rate(20000.0, AUDIT_PLANT), 10.0),
    (lambda: diffusion_flux(AUDIT_PLANT, 1e-4, 16.0),
     lambda: diffusion_flux(AUDIT_PLANT, 1e-4, 160.0), 10.0),
    (lambda: diffusion_flux(AUDIT_PLANT, 1e-4, 16.0),
     lambda: diffusion_flux(AUDIT_PLANT, 1e-3, 16.0), 10.0),
    (lambda: convection_flux(AUDIT_PLANT, 1e-4, 16.0),
     lambda: convection_flux(replace(AUDIT_PLANT, delta_p=1000.0), 1e-4, 16.0), 10.0),
    (lambda: gas_lye_ratio(0.05, AUDIT_POINT, 5.0, AUDIT_PLANT),
     lambda: gas_lye_ratio(0.05, AUDIT_POINT, 50.0, AUDIT_PLANT), 0.1),
    (lambda: gas_lye_ratio(0.05, AUDIT_POINT, 5.0, AUDIT_PLANT),
     lambda: gas_lye_ratio(0.05, replace(AUDIT_POINT, pressure=160.0), 5.0, AUDIT_PLANT), 0.1),
    (lambda: hto_time_constants(AUDIT_HTO, AUDIT_PLANT, AUDIT_POINT)[2],
     lambda: hto_time_constants(AUDIT_HTO, replace(AUDIT_PLANT, v_sep_gas=0.5), AUDIT_POINT)[2], 10.0),
    (lambda: hto_time_constants(AUDIT_HTO, replace(AUDIT_PLANT, tau1_form='plain'), AUDIT_POINT)[0],
     lambda: hto_time_constants(replace(AUDIT_HTO, v_an_lye=78.35), replace(AUDIT_PLANT, tau1_form='plain'),
                                AUDIT_POINT)[0], 10.0),
    (lambda: hto_transfer_steady_state(AUDIT_HTO, AUDIT_PLANT, AUDIT_POINT),
     lambda: hto_transfer_steady_state(replace(AUDIT_HTO, s_h2=1.025e-3), AUDIT_PLANT, AUDIT_POINT), 10.0),
    (lambda: cell_voltage(replace(SIMPLE_CURVE, s=0.0), AUDIT_POINT, u_rev=0.0),
     lambda: cell_voltage(replace(SIMPLE_CURVE, s=0.0), replace(AUDIT_POINT, i_cell=20000.0), u_rev=0.0), 10.0),
], ids=['production-current', 'diffusion-pressure', 'diffusion-solubility', 'convection-pressure-difference',
        'gas-lye-lye-flow', 'gas-lye-pressure', 'separator-gas-lag-volume', 'anode-lag-volume',
        'steady-hto-solubility', 'ohmic-current'])
def test_tenfold_input_gives_analytic_output_scaling(quantity, scaled, ratio):
    assert scaled() == pytest.approx(ratio * quantity(), rel=1e-12)


def test_stack_heating_rate_scales_inversely_with_heat_capacity(thermal_params):
    state = ThermalState(340.0, 330.0, 320.0)
    op = OperatingPoint(2000.0, 340.0, 16.0)
    base = thermal_rhs(state, op, thermal_params, AUDIT_PLANT, u_cell=1.9)
    heavy = thermal_rhs(state, op, replace(thermal_params, c_s=10 * thermal_params.c_s), AUDIT_PLANT, u_cell=1.9)
    assert heavy[0] == pytest.approx(base[0] / 10, rel=1e-12)
    np.testing.assert_array_equal(heavy[1:], base[1:])


# -- observable registry ---------------------------------------------------

def test_simulate_observables_per_model(context, thermal_schedule, hto_schedule, observation_grid,
                                        thermal_params, hto_params):
    thermal = simulate_observables('thermal', thermal_params.to_vector(), context, thermal_schedule, observation_grid)
    assert set(thermal) == {'t_s_out_K', 't_sep_out_K', 't_c_out_K'}
    assert all(len(v) == 200 for v in thermal.values())
    assert all(np.all((v > 250.0) & (v < 450.0)) for v in thermal.values())
    assert thermal['t_s_out_K'][150] > thermal['t_s_out_K'][0]

    hto = simulate_observables('hto', hto_params.to_vector(), context, hto_schedule, observation_grid)
    expected = 100.0 * hto_transfer_steady_state(hto_params, context.plant,
                                                 OperatingPoint(4000.0, context.plant.t_operating, 16.0))
    assert hto['hto_pct'][0] == pytest.approx(expected, rel=1e-9)


def test_thermal_observables_need_polarization(thermal_schedule, thermal_params):
    with pytest.raises(ValueError):
        simulate_observables('thermal', thermal_params.to_vector(), ForwardContext(), thermal_schedule, [0.0])
    with pytest.raises(ValueError):
        simulate_observables('stack', [1.0], ForwardContext(), thermal_schedule, [0.0])
