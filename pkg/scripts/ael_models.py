#!/usr/bin/env python3
"""
Forward Models of the Alkaline Electrolysis (AEL) System

Algebraic polarization curve, three-body thermal dynamics (stack, gas-lye
separator, heat exchanger) and the three-stage HTO gas-impurity crossover
balance. All types are immutable and every function is pure.
"""

import math
from dataclasses import asdict, dataclass, fields
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import root

from scripts.errors import ModelDomainError, NumericError
from scripts.ode_integrator import IntegratorConfig, integrate_piecewise

POLARIZATION_PARAMETERS = ('r1', 'r2', 'r3', 's', 't1', 't2', 't3')
THERMAL_PARAMETERS = ('c_s', 'r_hs', 'k_hx')
HTO_PARAMETERS = ('s_h2', 'v_an_lye', 'v_lye')

THERMAL_STATE_COLUMNS = ('t_s_out_K', 't_sep_out_K', 't_c_out_K')
HTO_STATE_COLUMNS = ('n_an', 'n_sep_liq', 'n_sep_gas')

CELSIUS_OFFSET = 273.15
PA_PER_BAR = 1e5
M3_PER_L = 1e-3
MAX_TEMPERATURE = 450.0

# flow rates and pressure differential may legitimately be switched off
_NONNEGATIVE_PLANT_FIELDS = ('p_flow', 'v_dot_sep', 'v_dot_c', 'delta_p', 'n_lye_crossover')
_CHOICE_PLANT_FIELDS = {
    'log_base': ('10', 'e'),
    'polarization_temperature': ('celsius', 'kelvin'),
    'current_density_unit': ('A/m2', 'A/cm2'),
    'tau1_form': ('full', 'plain'),
}


@dataclass(frozen=True)
class PlantConstants:
    """Fixed physical constants of the AEL plant (SI units unless noted)."""

    u_th: float = 1.48
    u_rev: float = 1.229
    eta_f: float = 0.95
    a_cell: float = 0.196
    n_cell: int = 26
    p_rated: float = 32.0
    t_ambient: float = 298.15
    # stack-side lye
    c_p_lye: float = 3100.0
    rho_lye: float = 1280.0
    p_flow: float = 0.192
    # gas-lye separator
    v_sep: float = 0.05
    v_sep_gas: float = 0.05
    rho_sep: float = 1280.0
    c_p_sep: float = 3100.0
    v_dot_sep: float = 1.5e-4
    # heat exchanger, coolant side
    a_c: float = 1.244
    v_c: float = 0.0056
    rho_c: float = 1000.0
    c_p_c: float = 4180.0
    v_dot_c: float = 2.0e-4
    t_c_in: float = 293.15
    # crossover
    tau_sep: float = 60.0
    d_eff_h2: float = 1e-9
    delta_diaphragm: float = 5e-4
    permeability_k: float = 5e-15
    mu_lye: float = 1e-3
    delta_p: float = 100.0
    n_lye_crossover: float = 0.0
    t_operating: float = 353.15
    faraday: float = 96485.33
    gas_const: float = 8.314
    # conventions
    log_base: str = '10'
    polarization_temperature: str = 'celsius'
    current_density_unit: str = 'A/m2'
    tau1_form: str = 'full'

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in _CHOICE_PLANT_FIELDS:
                if value not in _CHOICE_PLANT_FIELDS[f.name]:
                    raise ValueError(f"{f.name} must be one of {_CHOICE_PLANT_FIELDS[f.name]}, got {value!r}")
            elif f.name in _NONNEGATIVE_PLANT_FIELDS:
                if not value >= 0:
                    raise ValueError(f"{f.name} must be >= 0, got {value}")
            elif not value > 0:
                raise ValueError(f"{f.name} must be > 0, got {value}")
        if self.eta_f > 1:
            raise ValueError(f"eta_f must be <= 1, got {self.eta_f}")
        if not self.u_th > self.u_rev:
            raise ValueError(f"u_th ({self.u_th}) must exceed u_rev ({self.u_rev})")

    @property
    def stack_area(self) -> float:
        """Total reaction area A_cell * N_cell in m2."""
        return self.a_cell * self.n_cell


@dataclass(frozen=True)
class PolarizationParams:
    r1: float
    r2: float
    r3: float
    s: float
    t1: float
    t2: float
    t3: float = 0.0

    @classmethod
    def from_vector(cls, values: Sequence[float]) -> 'PolarizationParams':
        return cls(*(float(v) for v in values))

    def to_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in POLARIZATION_PARAMETERS])


def _require_positive(obj, names: Sequence[str]) -> None:
    for name in names:
        value = getattr(obj, name)
        if not value > 0:
            raise ValueError(f"{type(obj).__name__}.{name} must be > 0, got {value}")


@dataclass(frozen=True)
class ThermalParams:
    c_s: float
    r_hs: float
    k_hx: float

    def __post_init__(self):
        _require_positive(self, THERMAL_PARAMETERS)

    @classmethod
    def from_vector(cls, values: Sequence[float]) -> 'ThermalParams':
        return cls(*(float(v) for v in values))

    def to_vector(self) -> np.ndarray:
        return np.array([self.c_s, self.r_hs, self.k_hx])


@dataclass(frozen=True)
class HtoParams:
    s_h2: float
    v_an_lye: float
    v_lye: float

    def __post_init__(self):
        _require_positive(self, HTO_PARAMETERS)

    @classmethod
    def from_vector(cls, values: Sequence[float]) -> 'HtoParams':
        return cls(*(float(v) for v in values))

    def to_vector(self) -> np.ndarray:
        return np.array([self.s_h2, self.v_an_lye, self.v_lye])


@dataclass(frozen=True)
class ThermalState:
    t_s_out: float
    t_sep_out: float
    t_c_out: float

    def __post_init__(self):
        for name in ('t_s_out', 't_sep_out', 't_c_out'):
            value = getattr(self, name)
            if not 0 < value < MAX_TEMPERATURE:
                raise ModelDomainError(f"{name} = {value} K outside the sanity range (0, {MAX_TEMPERATURE}) K")

    def to_vector(self) -> np.ndarray:
        return np.array([self.t_s_out, self.t_sep_out, self.t_c_out])


@dataclass(frozen=True)
class HtoState:
    n_an: float = 0.0
    n_sep_liq: float = 0.0
    n_sep_gas: float = 0.0

    def __post_init__(self):
        for name in HTO_STATE_COLUMNS:
            if getattr(self, name) < 0:
                raise ModelDomainError(f"{name} must be >= 0, got {getattr(self, name)}")

    def to_vector(self) -> np.ndarray:
        return np.array([self.n_an, self.n_sep_liq, self.n_sep_gas])


@dataclass(frozen=True)
class OperatingPoint:
    i_cell: float
    temperature: float
    pressure: float

    def __post_init__(self):
        if self.i_cell < 0:
            raise ModelDomainError(f"current density must be >= 0, got {self.i_cell}")
        if not self.pressure > 0:
            raise ModelDomainError(f"pressure must be > 0, got {self.pressure}")


@dataclass(frozen=True)
class InputSchedule:
    """
    Time series of plant inputs.

    ``interpolation='previous'`` holds each value until the next time stamp
    (piecewise-constant); ``'linear'`` interpolates between time stamps.
    Temperature (K) and coolant inlet temperature (K) are optional columns.
    """

    t: np.ndarray
    i_cell: np.ndarray
    pressure: np.ndarray
    temperature: Optional[np.ndarray] = None
    t_c_in: Optional[np.ndarray] = None
    interpolation: str = 'previous'

    def __post_init__(self):
        n = len(self.t)
        if n < 2:
            raise ValueError("schedule needs at least two time stamps (one segment)")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("schedule times must be strictly increasing")
        for name in ('i_cell', 'pressure', 'temperature', 't_c_in'):
            column = getattr(self, name)
            if column is not None and len(column) != n:
                raise ValueError(f"schedule column {name} has {len(column)} values, expected {n}")
        if np.any(np.asarray(self.i_cell) < 0):
            raise ValueError("schedule current density must be >= 0")
        if np.any(np.asarray(self.pressure) <= 0):
            raise ValueError("schedule pressure must be > 0")
        if self.interpolation not in ('previous', 'linear'):
            raise ValueError(f"interpolation must be 'previous' or 'linear', got {self.interpolation!r}")

    @classmethod
    def from_steps(cls, times: Sequence[float], i_cell: Sequence[float], pressure: float,
                   t_end: float, t_c_in: Optional[float] = None,
                   temperature: Optional[float] = None) -> 'InputSchedule':
        """Piecewise-constant current steps at ``times`` held until ``t_end``."""
        t = np.append(np.asarray(times, dtype=float), t_end)
        current = np.append(np.asarray(i_cell, dtype=float), i_cell[-1])
        n = len(t)
        return cls(
            t=t,
            i_cell=current,
            pressure=np.full(n, float(pressure)),
            temperature=None if temperature is None else np.full(n, float(temperature)),
            t_c_in=None if t_c_in is None else np.full(n, float(t_c_in)),
        )

    @property
    def span(self) -> Tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    def _column(self, name: str, default: float) -> np.ndarray:
        column = getattr(self, name)
        if column is None:
            return np.full(len(self.t), default)
        return np.asarray(column, dtype=float)

    def values_at(self, times: Sequence[float], t_operating: float, t_c_in: float) -> Dict[str, np.ndarray]:
        """Inputs at ``times``; missing optional columns fall back to the given constants."""
        times = np.asarray(times, dtype=float)
        columns = {
            'i_cell': np.asarray(self.i_cell, dtype=float),
            'pressure': np.asarray(self.pressure, dtype=float),
            'temperature': self._column('temperature', t_operating),
            't_c_in': self._column('t_c_in', t_c_in),
        }
        if self.interpolation == 'linear':
            return {name: np.interp(times, self.t, col) for name, col in columns.items()}
        idx = np.clip(np.searchsorted(self.t, times, side='right') - 1, 0, len(self.t) - 1)
        return {name: col[idx] for name, col in columns.items()}

    def segment_inputs(self, k: int, t_operating: float,
                       t_c_in: float) -> Callable[[float], Tuple[float, float, float, float]]:
        """Inputs valid on [t[k], t[k+1]] as (i_cell, pressure, temperature, t_c_in)."""
        columns = (
            np.asarray(self.i_cell, dtype=float),
            np.asarray(self.pressure, dtype=float),
            self._column('temperature', t_operating),
            self._column('t_c_in', t_c_in),
        )
        start = tuple(float(col[k]) for col in columns)
        if self.interpolation == 'previous':
            return lambda t: start
        end = tuple(float(col[k + 1]) for col in columns)
        t0, t1 = float(self.t[k]), float(self.t[k + 1])

        def linear(t: float) -> Tuple[float, float, float, float]:
            w = (t - t0) / (t1 - t0)
            return tuple(a + w * (b - a) for a, b in zip(start, end))

        return linear


# ---------------------------------------------------------------------------
# Polarization curve
# ---------------------------------------------------------------------------

def _curve_inputs(i_cell, temperature, c: PlantConstants):
    if c.polarization_temperature == 'celsius':
        temperature = temperature - CELSIUS_OFFSET
    if c.current_density_unit == 'A/cm2':
        i_cell = i_cell / 1e4
    return i_cell, temperature


def _log(x, base: str):
    return np.log10(x) if base == '10' else np.log(x)


def cell_voltage(p: PolarizationParams, op: OperatingPoint, u_rev: float,
                 c: Optional[PlantConstants] = None) -> float:
    """
    Cell voltage of the polarization curve

        U = U_rev + (r1 + r2 T + r3 P) I + s log[(t1 + t2/T + t3/T^2) I + 1]

    Unit conventions (log base, curve temperature scale, current density
    unit) come from ``c``; defaults are base 10, degC and A/m2.

    Raises:
        ModelDomainError: non-positive logarithm argument at ``op``.
    """
    if op.i_cell == 0:
        return u_rev
    c = c or PlantConstants()
    i, temp = _curve_inputs(op.i_cell, op.temperature, c)
    if temp == 0 and (p.t2 != 0 or p.t3 != 0):
        raise ModelDomainError(f"curve temperature is zero at {op}")
    t = p.t1
    if p.t2 != 0 or p.t3 != 0:
        t += p.t2 / temp + p.t3 / temp ** 2
    arg = t * i + 1.0
    if not arg > 0:
        raise ModelDomainError(f"non-positive log argument {arg} at {op}")
    r = p.r1 + p.r2 * temp + p.r3 * op.pressure
    log = math.log10(arg) if c.log_base == '10' else math.log(arg)
    return u_rev + r * i + p.s * log


def polarization_curve(p: PolarizationParams, i_cell: np.ndarray, temperature: np.ndarray,
                       pressure: np.ndarray, c: PlantConstants) -> np.ndarray:
    """Vectorized ``cell_voltage`` over arrays of operating points."""
    i_raw = np.asarray(i_cell, dtype=float)
    i, temp = _curve_inputs(i_raw, np.asarray(temperature, dtype=float), c)
    pressure = np.asarray(pressure, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        t = p.t1 + p.t2 / temp + p.t3 / temp ** 2
        arg = t * i + 1.0
    bad = ~(arg > 0) & (i_raw != 0)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise ModelDomainError(
            f"non-positive log argument {arg[k]} at operating point "
            f"(i_cell={i_raw[k]}, temperature={np.asarray(temperature)[k]}, pressure={pressure[k]})"
        )
    arg = np.where(i_raw == 0, 1.0, arg)
    r = p.r1 + p.r2 * temp + p.r3 * pressure
    return c.u_rev + np.where(i_raw == 0, 0.0, r * i) + p.s * _log(arg, c.log_base)


def simulate_polarization(p: PolarizationParams, c: PlantConstants, sched: InputSchedule,
                          t_grid: Sequence[float]) -> np.ndarray:
    """Cell voltage along a schedule; the schedule's temperature column is the stack temperature."""
    if sched.temperature is None:
        raise ValueError("polarization schedule needs a temperature column")
    inputs = sched.values_at(t_grid, c.t_operating, c.t_c_in)
    return polarization_curve(p, inputs['i_cell'], inputs['temperature'], inputs['pressure'], c)


# ---------------------------------------------------------------------------
# Thermal dynamics
# ---------------------------------------------------------------------------

def _thermal_derivatives(t_s: float, t_sep: float, t_c: float, i_cell: float, u_cell: float,
                         t_c_in: float, p: ThermalParams, c: PlantConstants) -> Tuple[float, float, float]:
    area = c.stack_area
    heat = ((u_cell - c.u_th) * i_cell * c.eta_f + u_cell * i_cell * (1.0 - c.eta_f)) * area
    # T_s,in = T_sep,out and T_sep,in = T_s,out
    d_stack = (heat
               - (t_s - c.t_ambient) / p.r_hs
               - (t_s - t_sep) * c.c_p_lye * c.p_flow) / p.c_s
    exchange = p.k_hx * c.a_c * (t_c - t_sep)
    sep_capacity = c.v_sep * c.rho_sep * c.c_p_sep
    d_sep = (c.v_dot_sep * c.rho_sep * c.c_p_sep * (t_s - t_sep)
             + exchange
             - (t_sep - c.t_ambient) / p.r_hs) / sep_capacity
    coolant_capacity = c.v_c * c.rho_c * c.c_p_c
    d_coolant = (c.v_dot_c * c.rho_c * c.c_p_c * (t_c_in - t_c) - exchange) / coolant_capacity
    return d_stack, d_sep, d_coolant


def thermal_rhs(state: ThermalState, op: OperatingPoint, p: ThermalParams, c: PlantConstants,
                u_cell: float, t_c_in: Optional[float] = None) -> np.ndarray:
    """
    Temperature derivatives (K/s) of stack outlet, separator outlet and
    coolant outlet. Stack heat generation scales the per-cell voltage and
    current density by the total reaction area.
    """
    t_c_in = c.t_c_in if t_c_in is None else t_c_in
    return np.array(_thermal_derivatives(state.t_s_out, state.t_sep_out, state.t_c_out,
                                         op.i_cell, u_cell, t_c_in, p, c))


def _stack_voltage_fn(polarization: PolarizationParams, c: PlantConstants):
    def voltage(i_cell: float, t_s: float, pressure: float) -> float:
        return cell_voltage(polarization, OperatingPoint(i_cell, t_s, pressure), c.u_rev, c)
    return voltage


def simulate_thermal(p: ThermalParams, c: PlantConstants, sched: InputSchedule, init: ThermalState,
                     t_grid: Sequence[float], integ: IntegratorConfig,
                     polarization: PolarizationParams) -> np.ndarray:
    """
    Integrate the thermal model from ``init`` at the schedule start.

    The cell voltage is re-evaluated from ``polarization`` at every
    right-hand-side call using the current stack outlet temperature.

    Returns:
        Array (len(t_grid), 3) ordered as THERMAL_STATE_COLUMNS.
    """
    voltage = _stack_voltage_fn(polarization, c)

    def rhs_for_segment(k: int):
        inputs = sched.segment_inputs(k, c.t_operating, c.t_c_in)

        def rhs(t: float, y: np.ndarray) -> np.ndarray:
            i_cell, pressure, _, t_c_in = inputs(t)
            t_s, t_sep, t_c = y
            if not (0 < t_s < MAX_TEMPERATURE and 0 < t_sep < MAX_TEMPERATURE and 0 < t_c < MAX_TEMPERATURE):
                raise ModelDomainError(f"thermal state {tuple(y)} K left the sanity range at t = {t} s")
            u_cell = voltage(i_cell, t_s, pressure)
            return np.array(_thermal_derivatives(t_s, t_sep, t_c, i_cell, u_cell, t_c_in, p, c))

        return rhs

    return integrate_piecewise(rhs_for_segment, sched.t, init.to_vector(), integ, t_grid)


def thermal_steady_state(p: ThermalParams, c: PlantConstants, op: OperatingPoint,
                         polarization: PolarizationParams, t_c_in: Optional[float] = None) -> ThermalState:
    """Steady state of the thermal model at a constant operating point."""
    t_c_in = c.t_c_in if t_c_in is None else t_c_in
    voltage = _stack_voltage_fn(polarization, c)

    def residual(y: np.ndarray) -> np.ndarray:
        u_cell = voltage(op.i_cell, y[0], op.pressure)
        return np.array(_thermal_derivatives(y[0], y[1], y[2], op.i_cell, u_cell, t_c_in, p, c))

    guess = np.array([c.t_ambient + 20.0, c.t_ambient + 10.0, t_c_in + 5.0])
    solution = root(residual, guess, method='hybr', options={'xtol': 1e-12})
    if not solution.success:
        raise NumericError(f"thermal steady state not found at {op}: {solution.message}")
    return ThermalState(*(float(v) for v in solution.x))


# ---------------------------------------------------------------------------
# HTO gas-impurity crossover
# ---------------------------------------------------------------------------

def gas_production_rate(i_cell: float, c: PlantConstants) -> float:
    """Oxygen production of the stack in mol/s."""
    if i_cell < 0:
        raise ModelDomainError(f"current density must be >= 0, got {i_cell}")
    return i_cell * c.stack_area / (4.0 * c.faraday)


def _dissolved_concentration(s_h2: float, pressure: float) -> float:
    """Dissolved hydrogen concentration in mol/m3 for S in mol/(L bar) and P in bar."""
    return s_h2 * pressure / M3_PER_L


def diffusion_flux(c: PlantConstants, s_h2: float, pressure: float) -> float:
    """Fickian hydrogen crossover through the diaphragms of the whole stack (mol/s)."""
    if not pressure > 0:
        raise ModelDomainError(f"pressure must be > 0, got {pressure}")
    return c.d_eff_h2 * _dissolved_concentration(s_h2, pressure) / c.delta_diaphragm * c.stack_area


def convection_flux(c: PlantConstants, s_h2: float, pressure: float) -> float:
    """Darcy (pressure-driven) hydrogen crossover of the whole stack (mol/s)."""
    if not pressure > 0:
        raise ModelDomainError(f"pressure must be > 0, got {pressure}")
    velocity = c.permeability_k / c.mu_lye * c.delta_p / c.delta_diaphragm
    return velocity * _dissolved_concentration(s_h2, pressure) * c.stack_area


def crossover_flux(c: PlantConstants, s_h2: float, pressure: float) -> float:
    """Total impurity inflow to the anode half-cell (mol/s)."""
    return diffusion_flux(c, s_h2, pressure) + convection_flux(c, s_h2, pressure) + c.n_lye_crossover


def gas_lye_ratio(n_pro_o2: float, op: OperatingPoint, v_lye: float, c: Optional[PlantConstants] = None) -> float:
    """Volumetric ratio of produced oxygen (ideal gas at T, P) to lye flow in L/min."""
    if not v_lye > 0:
        raise ModelDomainError(f"lye flow must be > 0, got {v_lye}")
    c = c or PlantConstants()
    gas_flow = n_pro_o2 * c.gas_const * op.temperature / (op.pressure * PA_PER_BAR)
    lye_flow = v_lye * M3_PER_L / 60.0
    return gas_flow / lye_flow


def _tau1(hp: HtoParams, phi: float, c: PlantConstants) -> float:
    plain = 2.0 * hp.v_an_lye / hp.v_lye * 60.0
    if c.tau1_form == 'plain':
        return plain
    return plain / (1.0 + phi)


def _tau3(c: PlantConstants, op: OperatingPoint, n_pro: float) -> float:
    return op.pressure * PA_PER_BAR * c.v_sep_gas / (c.gas_const * op.temperature * n_pro)


def hto_time_constants(hp: HtoParams, c: PlantConstants, op: OperatingPoint) -> Tuple[float, float, float]:
    """
    (tau1, tau2, tau3) in seconds of the anode, separator-liquid and
    separator-gas stages.

    Raises:
        ModelDomainError: zero current, where tau3 diverges.
    """
    n_pro = gas_production_rate(op.i_cell, c)
    if not n_pro > 0:
        raise ModelDomainError(f"HTO time constants undefined at zero production ({op})")
    phi = gas_lye_ratio(n_pro, op, hp.v_lye, c)
    return _tau1(hp, phi, c), c.tau_sep, _tau3(c, op, n_pro)


def hto_transfer_steady_state(hp: HtoParams, c: PlantConstants, op: OperatingPoint) -> float:
    """Steady-state HTO fraction n_im / n_pro (the three lags have unity DC gain)."""
    n_pro = gas_production_rate(op.i_cell, c)
    if not n_pro > 0:
        raise ModelDomainError(f"steady-state HTO undefined at zero production ({op})")
    return crossover_flux(c, hp.s_h2, op.pressure) / n_pro


@dataclass(frozen=True)
class HtoTrajectory:
    t: np.ndarray
    hto: np.ndarray
    defined: np.ndarray
    states: np.ndarray

    def to_dict(self) -> Dict[str, list]:
        return {k: np.asarray(v).tolist() for k, v in asdict(self).items()}


def simulate_hto(hp: HtoParams, c: PlantConstants, sched: InputSchedule, init: HtoState,
                 t_grid: Sequence[float], integ: IntegratorConfig) -> HtoTrajectory:
    """
    Integrate the three-stage hydrogen balance and report HTO = n_out / n_pro.

    Where production is zero the gas-phase outflow stops and the reported HTO
    holds the last defined value with ``defined`` set to False.
    """
    def rhs_for_segment(k: int):
        inputs = sched.segment_inputs(k, c.t_operating, c.t_c_in)

        def rhs(t: float, y: np.ndarray) -> np.ndarray:
            i_cell, pressure, temperature, _ = inputs(t)
            n_im = crossover_flux(c, hp.s_h2, pressure)
            n_pro = i_cell * c.stack_area / (4.0 * c.faraday)
            op = OperatingPoint(i_cell, temperature, pressure)
            if n_pro > 0:
                tau1 = _tau1(hp, gas_lye_ratio(n_pro, op, hp.v_lye, c), c)
                n_out = y[2] / _tau3(c, op, n_pro)
            else:
                tau1 = _tau1(hp, 0.0, c)
                n_out = 0.0
            n_1 = y[0] / tau1
            n_2 = y[1] / c.tau_sep
            return np.array([n_im - n_1, n_1 - n_2, n_2 - n_out])

        return rhs

    t_grid = np.asarray(t_grid, dtype=float)
    states = integrate_piecewise(rhs_for_segment, sched.t, init.to_vector(), integ, t_grid)
    if np.min(states) < -10 * integ.abs_tol:
        raise NumericError(f"negative hydrogen inventory {np.min(states)} mol in HTO integration")
    states = np.maximum(states, 0.0)

    inputs = sched.values_at(t_grid, c.t_operating, c.t_c_in)
    # HTO = N_gas / N_O2,gas with the separator gas inventory from the ideal gas law
    o2_inventory = inputs['pressure'] * PA_PER_BAR * c.v_sep_gas / (c.gas_const * inputs['temperature'])
    defined = inputs['i_cell'] > 0
    raw = states[:, 2] / o2_inventory
    hto = np.empty_like(raw)
    last = 0.0
    for k in range(len(raw)):
        if defined[k]:
            last = raw[k]
        hto[k] = last
    return HtoTrajectory(t=t_grid, hto=hto, defined=defined, states=states)


# ---------------------------------------------------------------------------
# Observable forward models
# ---------------------------------------------------------------------------

MODELS = ('polarization', 'thermal', 'hto')

MODEL_PARAMETERS = {
    'polarization': POLARIZATION_PARAMETERS,
    'thermal': THERMAL_PARAMETERS,
    'hto': HTO_PARAMETERS,
}

MODEL_OBSERVABLES = {
    'polarization': ('u_cell_V',),
    'thermal': ('t_s_out_K', 't_sep_out_K', 't_c_out_K'),
    'hto': ('hto_pct',),
}


@dataclass(frozen=True)
class ForwardContext:
    """
    Everything besides the estimated parameters that a forward simulation
    needs. ``None`` initial states start from the steady state at the first
    schedule point.
    """

    plant: PlantConstants = PlantConstants()
    integrator: IntegratorConfig = IntegratorConfig()
    polarization: Optional[PolarizationParams] = None
    thermal_init: Optional[ThermalState] = None
    hto_init: Optional[HtoState] = None


def initial_hto_state(hp: HtoParams, c: PlantConstants, op: OperatingPoint) -> HtoState:
    """Steady inventories n_im * tau_k of the three stages; empty at zero production."""
    if gas_production_rate(op.i_cell, c) <= 0:
        return HtoState()
    n_im = crossover_flux(c, hp.s_h2, op.pressure)
    tau1, tau2, tau3 = hto_time_constants(hp, c, op)
    return HtoState(n_im * tau1, n_im * tau2, n_im * tau3)


def simulate_observables(model: str, values: Sequence[float], ctx: ForwardContext,
                         sched: InputSchedule, t_grid: Sequence[float]) -> Dict[str, np.ndarray]:
    """
    Forward-simulate ``model`` with parameter vector ``values`` (ordered as
    MODEL_PARAMETERS[model]) and return every observable at ``t_grid``.
    """
    c = ctx.plant
    t_grid = np.asarray(t_grid, dtype=float)
    if model == 'polarization':
        p = PolarizationParams.from_vector(values)
        return {'u_cell_V': simulate_polarization(p, c, sched, t_grid)}

    first = sched.values_at([sched.t[0]], c.t_operating, c.t_c_in)
    op0 = OperatingPoint(float(first['i_cell'][0]), float(first['temperature'][0]), float(first['pressure'][0]))
    if model == 'thermal':
        if ctx.polarization is None:
            raise ValueError("thermal simulation needs the polarization curve parameters")
        p = ThermalParams.from_vector(values)
        init = ctx.thermal_init or thermal_steady_state(p, c, op0, ctx.polarization, float(first['t_c_in'][0]))
        states = simulate_thermal(p, c, sched, init, t_grid, ctx.integrator, ctx.polarization)
        return {name: states[:, k] for k, name in enumerate(THERMAL_STATE_COLUMNS)}
    if model == 'hto':
        hp = HtoParams.from_vector(values)
        init = ctx.hto_init or initial_hto_state(hp, c, op0)
        trajectory = simulate_hto(hp, c, sched, init, t_grid, ctx.integrator)
        return {'hto_pct': 100.0 * trajectory.hto}
    raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
