#!/usr/bin/env python3
"""
Observation Data, Job Configuration and Result Files

Reads and validates observation time series (CSV or Excel), generates
synthetic observations with a ground-truth sidecar, parses strict JSON job
files into frozen dataclasses and writes result bundles.

CSV column vocabulary:
    t_s, i_cell_A_m2, p_bar, t_c_in_K            time and inputs
    u_cell_V, t_s_out_K, t_sep_out_K, t_c_out_K, hto_pct   observables
"""

import copy
import json
import logging
from dataclasses import MISSING, asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from scripts.ael_models import (
    MODEL_OBSERVABLES,
    MODEL_PARAMETERS,
    MODELS,
    HtoState,
    InputSchedule,
    PlantConstants,
    PolarizationParams,
    ThermalParams,
    ThermalState,
    simulate_observables,
    ForwardContext,
)
from scripts.errors import ConfigError, DataError, ModelDomainError
from scripts.inference import ChainConfig, ParameterPrior, PriorSpec
from scripts.ode_integrator import IntegratorConfig

TIME_COLUMN = 't_s'
INPUT_COLUMNS = ('i_cell_A_m2', 'p_bar', 't_c_in_K')
OBSERVABLE_COLUMNS = ('u_cell_V', 't_s_out_K', 't_sep_out_K', 't_c_out_K', 'hto_pct')
VOCABULARY = (TIME_COLUMN,) + INPUT_COLUMNS + OBSERVABLE_COLUMNS

# columns each model consumes as inputs; t_s_out_K doubles as the stack
# temperature input of the polarization and HTO models
MODEL_INPUTS = {
    'polarization': ('i_cell_A_m2', 'p_bar', 't_s_out_K'),
    'thermal': ('i_cell_A_m2', 'p_bar', 't_c_in_K'),
    'hto': ('i_cell_A_m2', 'p_bar'),
}
MODEL_OPTIONAL_INPUTS = {'hto': ('t_s_out_K',)}

DEFAULT_NOISE = {
    'polarization': {'u_cell_V': 0.01},
    'thermal': {'t_s_out_K': 0.5, 't_sep_out_K': 0.5, 't_c_out_K': 0.5},
    'hto': {'hto_pct': 0.002},
}

# point estimates of the reference plant, kept in schemas/reference_parameters.json
REFERENCE_PARAMETERS_FILE = Path(__file__).resolve().parent.parent / 'schemas' / 'reference_parameters.json'
with open(REFERENCE_PARAMETERS_FILE, 'r', encoding='utf-8') as _handle:
    _REFERENCE = json.load(_handle)
REFERENCE_POLARIZATION = PolarizationParams(**_REFERENCE['polarization'])
REFERENCE_THERMAL = ThermalParams(**_REFERENCE['thermal'])
REFERENCE_HTO = tuple(float(_REFERENCE['hto'][name]) for name in MODEL_PARAMETERS['hto'])

DEFAULT_PRIOR_WIDTH = {'polarization': 0.1, 'thermal': 0.2, 'hto': 0.2}
T3_PRIOR_RANGE = (-50.0, 50.0)


# ---------------------------------------------------------------------------
# Observation series
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ObservationSeries:
    t: np.ndarray
    inputs: Dict[str, np.ndarray]
    observables: Dict[str, np.ndarray]
    sigma: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.t)
        for name, column in list(self.inputs.items()) + list(self.observables.items()):
            if name not in VOCABULARY:
                raise DataError("unknown column", column=name)
            if len(column) != n:
                raise DataError(f"has {len(column)} values, expected {n}", column=name)

    @property
    def n(self) -> int:
        return len(self.t)

    def to_frame(self) -> pd.DataFrame:
        columns = {TIME_COLUMN: self.t}
        for name in VOCABULARY[1:]:
            if name in self.inputs:
                columns[name] = self.inputs[name]
            elif name in self.observables:
                columns[name] = self.observables[name]
        return pd.DataFrame(columns)

    def column(self, name: str) -> np.ndarray:
        if name in self.inputs:
            return self.inputs[name]
        if name in self.observables:
            return self.observables[name]
        raise DataError("required column missing", column=name)

    def schedule(self, interpolation: str = 'previous') -> InputSchedule:
        """Input schedule sampled at the observation times."""
        return InputSchedule(
            t=self.t,
            i_cell=self.column('i_cell_A_m2'),
            pressure=self.column('p_bar'),
            temperature=self.inputs.get('t_s_out_K'),
            t_c_in=self.inputs.get('t_c_in_K'),
            interpolation=interpolation,
        )

    def observation_vector(self, observed: Sequence[str]) -> np.ndarray:
        """Observed columns concatenated in the given order."""
        return np.concatenate([self.column(name) for name in observed])


def observation_labels(observed: Sequence[str], t: Sequence[float]) -> List[str]:
    return [f"{name}@{float(ti)!r}" for name in observed for ti in t]


def _validate_frame(df: pd.DataFrame, required: Sequence[str]) -> None:
    for name in df.columns:
        if name not in VOCABULARY:
            raise DataError("unknown column", column=str(name))
    for name in required:
        if name not in df.columns:
            raise DataError("required column missing", column=name)
    for name in df.columns:
        values = pd.to_numeric(df[name], errors='coerce').to_numpy(dtype=float)
        bad = ~np.isfinite(values)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise DataError(f"non-finite value {df[name].iloc[k]!r}", row=k + 2, column=name)
    t = df[TIME_COLUMN].to_numpy(dtype=float)
    steps = np.diff(t)
    if np.any(steps <= 0):
        k = int(np.argmax(steps <= 0)) + 1
        raise DataError(f"time {t[k]} does not increase (previous {t[k - 1]})", row=k + 2, column=TIME_COLUMN)


def read_observations(path: Path, model: Optional[str] = None,
                      observed: Optional[Sequence[str]] = None,
                      sigma: Optional[Dict[str, float]] = None) -> ObservationSeries:
    """
    Load and validate an observation file (.csv, or .xlsx first sheet).

    Raises:
        DataError: unknown or missing column, non-finite cell or
            non-increasing time; row numbers count the header as row 1.
    """
    path = Path(path)
    try:
        if path.suffix.lower() in ('.xlsx', '.xlsm'):
            df = pd.read_excel(path, sheet_name=0, engine='openpyxl')
        else:
            df = pd.read_csv(path)
    except FileNotFoundError:
        logging.error(f"Observation file not found: {path}")
        raise DataError(f"observation file not found: {path}")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as e:
        logging.error(f"Could not parse observation file {path}: {e}")
        raise DataError(f"could not parse {path}: {e}")

    required = [TIME_COLUMN]
    if model is not None:
        required += list(MODEL_INPUTS[model])
        required += list(observed if observed is not None else MODEL_OBSERVABLES[model][:1])
    _validate_frame(df, required)
    if len(df) < 2:
        raise DataError(f"{path} needs at least two observation rows")

    model_inputs = MODEL_INPUTS.get(model, INPUT_COLUMNS) + MODEL_OPTIONAL_INPUTS.get(model, ())
    inputs, observables = {}, {}
    for name in df.columns:
        if name == TIME_COLUMN:
            continue
        values = df[name].to_numpy(dtype=float)
        if name in INPUT_COLUMNS or name in model_inputs:
            inputs[name] = values
        else:
            observables[name] = values
    logging.info(f"Loaded {len(df)} observations with columns {list(df.columns)} from {path}")
    return ObservationSeries(
        t=df[TIME_COLUMN].to_numpy(dtype=float),
        inputs=inputs,
        observables=observables,
        sigma=dict(sigma or {}),
    )


def write_observations(series: ObservationSeries, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    series.to_frame().to_csv(path, index=False)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

def truth_sidecar_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}.truth.json")


def generate_synthetic(model: str, true_params: Dict[str, float], ctx: ForwardContext,
                       schedule: InputSchedule, t_grid: Sequence[float],
                       noise: Dict[str, float], seed: int) -> Tuple[ObservationSeries, Dict[str, Any]]:
    """
    Simulate ``model`` at ``true_params`` and add i.i.d. Gaussian noise per
    observable (sigma 0 leaves the clean simulation untouched).

    Returns the series and the ground-truth sidecar document.
    """
    names = MODEL_PARAMETERS[model]
    missing = [n for n in names if n not in true_params]
    if missing:
        raise ModelDomainError(f"true parameters missing for {model} model: {missing}")
    values = [float(true_params[n]) for n in names]
    t_grid = np.asarray(t_grid, dtype=float)
    clean = simulate_observables(model, values, ctx, schedule, t_grid)

    rng = np.random.default_rng(seed)
    observables = {}
    for name in MODEL_OBSERVABLES[model]:
        if name not in noise:
            continue
        sigma = float(noise[name])
        observables[name] = clean[name] + sigma * rng.standard_normal(len(t_grid)) if sigma > 0 else clean[name]

    c = ctx.plant
    sampled = schedule.values_at(t_grid, c.t_operating, c.t_c_in)
    inputs = {'i_cell_A_m2': sampled['i_cell'], 'p_bar': sampled['pressure']}
    if model == 'thermal':
        inputs['t_c_in_K'] = sampled['t_c_in']
    if model in ('polarization', 'hto') and schedule.temperature is not None:
        inputs['t_s_out_K'] = sampled['temperature']

    truth = {
        'model': model,
        'true_params': {n: v for n, v in zip(names, values)},
        'seed': seed,
        'noise': {k: float(v) for k, v in noise.items()},
    }
    series = ObservationSeries(t=t_grid, inputs=inputs, observables=observables, sigma=dict(noise))
    logging.info(f"Generated {len(t_grid)} synthetic {model} observations (seed {seed})")
    return series, truth


def write_synthetic(series: ObservationSeries, truth: Dict[str, Any], path: Path) -> Path:
    """Write the CSV and its ``<stem>.truth.json`` sidecar; returns the sidecar path."""
    write_observations(series, path)
    sidecar = truth_sidecar_path(path)
    write_json(truth, sidecar)
    return sidecar


# ---------------------------------------------------------------------------
# Job configuration
# ---------------------------------------------------------------------------

_REQUIRED = object()


@dataclass(frozen=True)
class SurrogateSettings:
    level: int = 2
    max_level: int = 5
    target: float = 1e-2
    n_test: int = 100

    def __post_init__(self):
        if not 0 <= self.level <= self.max_level:
            raise ValueError(f"need 0 <= level <= max_level, got {self.level}, {self.max_level}")
        if not self.target > 0:
            raise ValueError(f"target must be > 0, got {self.target}")
        if self.n_test < 1:
            raise ValueError(f"n_test must be >= 1, got {self.n_test}")


@dataclass(frozen=True)
class ScheduleSpec:
    t_s: Tuple[float, ...]
    i_cell_A_m2: Tuple[float, ...]
    p_bar: Tuple[float, ...]
    t_c_in_K: Optional[Tuple[float, ...]] = None
    t_s_out_K: Optional[Tuple[float, ...]] = None
    interpolation: str = 'previous'

    def build(self) -> InputSchedule:
        def arr(v):
            return None if v is None else np.asarray(v, dtype=float)

        return InputSchedule(
            t=arr(self.t_s),
            i_cell=arr(self.i_cell_A_m2),
            pressure=arr(self.p_bar),
            temperature=arr(self.t_s_out_K),
            t_c_in=arr(self.t_c_in_K),
            interpolation=self.interpolation,
        )


@dataclass(frozen=True)
class ObservationTimes:
    start: float
    stop: float
    num: int

    def grid(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.num)


@dataclass(frozen=True)
class InitialStateSpec:
    thermal: Optional[Tuple[float, float, float]] = None
    hto: Optional[Tuple[float, float, float]] = None


@dataclass(frozen=True)
class PathsSpec:
    data: Optional[str] = None
    out_dir: Optional[str] = None
    surrogate: Optional[str] = None


@dataclass(frozen=True)
class EstimationJob:
    model: str
    seed: int
    forward: str
    plant: PlantConstants
    polarization: PolarizationParams
    thermal: ThermalParams
    prior: PriorSpec
    noise: Dict[str, float]
    surrogate: SurrogateSettings
    chain: ChainConfig
    n_chains: int
    integrator: IntegratorConfig
    schedule: Optional[ScheduleSpec]
    observation_times: Optional[ObservationTimes]
    initial_state: InitialStateSpec
    max_rmse: Optional[float]
    n_bins: int
    paths: PathsSpec

    @property
    def parameter_names(self) -> Tuple[str, ...]:
        return MODEL_PARAMETERS[self.model]

    @property
    def observed(self) -> Tuple[str, ...]:
        """Observables fitted by this job, in vocabulary order."""
        return tuple(name for name in MODEL_OBSERVABLES[self.model] if name in self.noise)

    def forward_context(self) -> ForwardContext:
        thermal_init = self.initial_state.thermal
        hto_init = self.initial_state.hto
        return ForwardContext(
            plant=self.plant,
            integrator=self.integrator,
            polarization=self.polarization,
            thermal_init=None if thermal_init is None else ThermalState(*thermal_init),
            hto_init=None if hto_init is None else HtoState(*hto_init),
        )


def _kind_ok(value: Any, kind: str) -> bool:
    if kind == 'float':
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == 'int':
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == 'str':
        return isinstance(value, str)
    if kind == 'bool':
        return isinstance(value, bool)
    if kind == 'float_list':
        return isinstance(value, list) and all(_kind_ok(v, 'float') for v in value)
    raise ValueError(f"unknown kind {kind}")


class _Section:
    """Strict reader of one JSON object; records resolved values including defaults."""

    def __init__(self, data: Any, path: str):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(path, f"expected an object, got {type(data).__name__}")
        self.data = data
        self.path = path
        self.used = set()

    def get(self, key: str, kind: str, default: Any = _REQUIRED, nullable: bool = False) -> Any:
        self.used.add(key)
        if key not in self.data:
            if default is _REQUIRED:
                raise ConfigError(f"{self.path}.{key}", "required key missing")
            return default
        value = self.data[key]
        if value is None and nullable:
            return None
        if not _kind_ok(value, kind):
            raise ConfigError(f"{self.path}.{key}", f"expected {kind}, got {json.dumps(value)}")
        if kind == 'float':
            return float(value)
        if kind == 'float_list':
            return tuple(float(v) for v in value)
        return value

    def finish(self) -> None:
        unknown = sorted(set(self.data) - self.used)
        if unknown:
            raise ConfigError(f"{self.path}.{unknown[0]}", "unknown key")


def _construct(cls, path: str, **kwargs):
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as e:
        raise ConfigError(path, str(e)) from e


def _dataclass_section(data: Any, path: str, cls, kinds: Dict[str, str], nullable: Sequence[str] = ()):
    section = _Section(data, path)
    defaults = {f.name: f.default for f in fields(cls) if f.default is not MISSING}
    kwargs = {}
    for name, kind in kinds.items():
        kwargs[name] = section.get(name, kind, defaults.get(name, _REQUIRED), nullable=name in nullable)
    section.finish()
    return _construct(cls, path, **kwargs)


_PLANT_KINDS = {
    f.name: ('str' if isinstance(f.default, str) else 'int' if f.name == 'n_cell' else 'float')
    for f in fields(PlantConstants)
}


def default_prior(model: str) -> PriorSpec:
    """Box of +-10 % (polarization) or +-20 % around the reference plant values."""
    if model == 'polarization':
        centre = dict(zip(MODEL_PARAMETERS[model], REFERENCE_POLARIZATION.to_vector()))
    elif model == 'thermal':
        centre = dict(zip(MODEL_PARAMETERS[model], REFERENCE_THERMAL.to_vector()))
    else:
        centre = dict(zip(MODEL_PARAMETERS[model], REFERENCE_HTO))
    width = DEFAULT_PRIOR_WIDTH[model]
    parameters = []
    for name, value in centre.items():
        if name == 't3':
            lo, hi = T3_PRIOR_RANGE
        else:
            lo, hi = sorted((value * (1 - width), value * (1 + width)))
        parameters.append(ParameterPrior(name=name, lo=float(lo), hi=float(hi)))
    return PriorSpec(tuple(parameters))


def _parse_prior(data: Any, model: str) -> PriorSpec:
    if data is None:
        return default_prior(model)
    section = _Section(data, '$.prior')
    entries = section.data.get('parameters')
    section.used.add('parameters')
    section.finish()
    if not isinstance(entries, list):
        raise ConfigError('$.prior.parameters', "expected a list of parameter priors")
    expected = MODEL_PARAMETERS[model]
    if len(entries) != len(expected):
        raise ConfigError('$.prior.parameters',
                          f"{model} model has {len(expected)} parameters {list(expected)}, prior lists {len(entries)}")
    parameters = []
    for k, entry in enumerate(entries):
        path = f"$.prior.parameters[{k}]"
        p = _Section(entry, path)
        name = p.get('name', 'str')
        if name != expected[k]:
            raise ConfigError(f"{path}.name", f"expected '{expected[k]}', got '{name}'")
        kwargs = dict(
            name=name,
            lo=p.get('lo', 'float'),
            hi=p.get('hi', 'float'),
            distribution=p.get('distribution', 'str', 'uniform'),
            mean=p.get('mean', 'float', None, nullable=True),
            sd=p.get('sd', 'float', None, nullable=True),
        )
        p.finish()
        parameters.append(_construct(ParameterPrior, path, **kwargs))
    return _construct(PriorSpec, '$.prior', parameters=tuple(parameters))


def _parse_noise(data: Any, model: str) -> Dict[str, float]:
    if data is None:
        return dict(DEFAULT_NOISE[model])
    section = _Section(data, '$.noise')
    sigma = section.data.get('sigma')
    section.used.add('sigma')
    section.finish()
    if not isinstance(sigma, dict) or not sigma:
        raise ConfigError('$.noise.sigma', "expected an object mapping observable names to sigma")
    noise = {}
    for name, value in sigma.items():
        path = f"$.noise.sigma.{name}"
        if name not in MODEL_OBSERVABLES[model]:
            raise ConfigError(path, f"not an observable of the {model} model {list(MODEL_OBSERVABLES[model])}")
        if not _kind_ok(value, 'float') or value < 0:
            raise ConfigError(path, f"expected a number >= 0, got {json.dumps(value)}")
        noise[name] = float(value)
    return {name: noise[name] for name in MODEL_OBSERVABLES[model] if name in noise}


def _broadcast(section: _Section, key: str, n: int, required: bool) -> Optional[Tuple[float, ...]]:
    value = section.data.get(key)
    section.used.add(key)
    path = f"{section.path}.{key}"
    if value is None:
        if required:
            raise ConfigError(path, "required key missing")
        return None
    if _kind_ok(value, 'float'):
        return tuple([float(value)] * n)
    if _kind_ok(value, 'float_list'):
        if len(value) != n:
            raise ConfigError(path, f"has {len(value)} values, expected {n}")
        return tuple(float(v) for v in value)
    raise ConfigError(path, f"expected a number or a list of numbers, got {json.dumps(value)}")


def _parse_schedule(data: Any) -> Optional[ScheduleSpec]:
    """
    Explicit arrays keyed by the CSV vocabulary, or a ``grid`` object whose
    value lists are combined as a Cartesian product at one point per second.
    Scalars broadcast.
    """
    if data is None:
        return None
    section = _Section(data, '$.schedule')
    interpolation = section.get('interpolation', 'str', 'previous')
    if 'grid' in section.data:
        section.used.add('grid')
        grid = _Section(section.data['grid'], '$.schedule.grid')
        axes = {}
        for key in ('i_cell_A_m2', 't_s_out_K', 'p_bar', 't_c_in_K'):
            value = grid.get(key, 'float_list', None)
            if value is not None:
                axes[key] = value
        grid.finish()
        section.finish()
        if 'i_cell_A_m2' not in axes or 'p_bar' not in axes:
            raise ConfigError('$.schedule.grid', "needs i_cell_A_m2 and p_bar value lists")
        keys = list(axes)
        mesh = np.array(np.meshgrid(*(axes[k] for k in keys), indexing='ij')).reshape(len(keys), -1)
        columns = {k: tuple(float(v) for v in mesh[j]) for j, k in enumerate(keys)}
        n = mesh.shape[1]
        return _construct(ScheduleSpec, '$.schedule', t_s=tuple(float(k) for k in range(n)),
                          interpolation=interpolation,
                          **{k: columns.get(k) for k in ('i_cell_A_m2', 'p_bar', 't_c_in_K', 't_s_out_K')})

    t = section.get('t_s', 'float_list')
    n = len(t)
    spec = dict(
        t_s=t,
        i_cell_A_m2=_broadcast(section, 'i_cell_A_m2', n, True),
        p_bar=_broadcast(section, 'p_bar', n, True),
        t_c_in_K=_broadcast(section, 't_c_in_K', n, False),
        t_s_out_K=_broadcast(section, 't_s_out_K', n, False),
        interpolation=interpolation,
    )
    section.finish()
    result = _construct(ScheduleSpec, '$.schedule', **spec)
    try:
        result.build()
    except ValueError as e:
        raise ConfigError('$.schedule', str(e)) from e
    return result


def _parse_initial_state(data: Any) -> InitialStateSpec:
    section = _Section(data, '$.initial_state')
    states = {}
    for key in ('thermal', 'hto'):
        value = section.data.get(key, 'steady')
        section.used.add(key)
        if value == 'steady' or value is None:
            states[key] = None
        elif _kind_ok(value, 'float_list') and len(value) == 3:
            states[key] = tuple(float(v) for v in value)
        else:
            raise ConfigError(f"$.initial_state.{key}", f"expected \"steady\" or three numbers, got {json.dumps(value)}")
    section.finish()
    return InitialStateSpec(**states)


_TOP_LEVEL_KEYS = (
    'model', 'seed', 'forward', 'plant', 'polarization', 'thermal', 'prior', 'noise', 'surrogate',
    'chain', 'integrator', 'schedule', 'observation_times', 'initial_state', 'acceptance', 'summary', 'paths',
)


def job_from_dict(data: Dict[str, Any]) -> EstimationJob:
    """
    Build an EstimationJob from a parsed JSON document.

    Raises:
        ConfigError: unknown key, wrong type or constraint violation; the
            message starts with the JSON path.
    """
    top = _Section(data, '$')
    model = top.get('model', 'str')
    if model not in MODELS:
        raise ConfigError('$.model', f"expected one of {list(MODELS)}, got '{model}'")
    seed = top.get('seed', 'int', 0)
    if not 0 <= seed < 2 ** 64:
        raise ConfigError('$.seed', f"expected an unsigned 64-bit integer, got {seed}")
    forward = top.get('forward', 'str', 'surrogate')
    if forward not in ('surrogate', 'direct'):
        raise ConfigError('$.forward', f"expected 'surrogate' or 'direct', got '{forward}'")
    for key in _TOP_LEVEL_KEYS:
        top.used.add(key)
    top.finish()

    plant = _dataclass_section(data.get('plant'), '$.plant', PlantConstants, _PLANT_KINDS)
    polarization = _dataclass_section(
        data.get('polarization', asdict(REFERENCE_POLARIZATION)), '$.polarization', PolarizationParams,
        {name: 'float' for name in MODEL_PARAMETERS['polarization']},
    )
    thermal = _dataclass_section(
        data.get('thermal', asdict(REFERENCE_THERMAL)), '$.thermal', ThermalParams,
        {name: 'float' for name in MODEL_PARAMETERS['thermal']},
    )
    prior = _parse_prior(data.get('prior'), model)
    noise = _parse_noise(data.get('noise'), model)
    surrogate = _dataclass_section(data.get('surrogate'), '$.surrogate', SurrogateSettings,
                                   {'level': 'int', 'max_level': 'int', 'target': 'float', 'n_test': 'int'})

    chain_section = _Section(data.get('chain'), '$.chain')
    n_chains = chain_section.get('n_chains', 'int', 1)
    if n_chains < 1:
        raise ConfigError('$.chain.n_chains', f"must be >= 1, got {n_chains}")
    chain_kwargs = dict(
        n_steps=chain_section.get('n_steps', 'int', 100000),
        burn_in=chain_section.get('burn_in', 'int', None, nullable=True),
        epsilon=chain_section.get('epsilon', 'float', 0.05),
        proposal=chain_section.get('proposal', 'str', 'mala'),
        thinning=chain_section.get('thinning', 'int', 1),
        init=chain_section.get('init', 'float_list', None, nullable=True),
        adapt_epsilon=chain_section.get('adapt_epsilon', 'bool', False),
        omit_hastings_correction=chain_section.get('omit_hastings_correction', 'bool', False),
        precondition=chain_section.get('precondition', 'str', 'identity'),
        seed=seed,
    )
    chain_section.finish()
    chain = _construct(ChainConfig, '$.chain', **chain_kwargs)
    if chain.init is not None:
        if len(chain.init) != prior.dimension:
            raise ConfigError('$.chain.init', f"has {len(chain.init)} values, prior has {prior.dimension}")
        if not prior.bounds.contains(chain.init):
            raise ConfigError('$.chain.init', "initial point lies outside the prior bounds")

    integ_section = _Section(data.get('integrator'), '$.integrator')
    integ_kwargs = dict(
        method=integ_section.get('method', 'str', 'rk45_adaptive'),
        rel_tol=integ_section.get('rel_tol', 'float', 1e-6),
        abs_tol=integ_section.get('abs_tol', 'float', 1e-9),
        initial_step=integ_section.get('initial_step', 'float', None, nullable=True),
        max_steps=integ_section.get('max_steps', 'int', 1_000_000),
    )
    max_step = integ_section.get('max_step', 'float', None, nullable=True)
    integ_section.finish()
    integrator = _construct(IntegratorConfig, '$.integrator',
                            max_step=float('inf') if max_step is None else max_step, **integ_kwargs)

    schedule = _parse_schedule(data.get('schedule'))
    times = data.get('observation_times')
    observation_times = None
    if times is not None:
        observation_times = _dataclass_section(times, '$.observation_times', ObservationTimes,
                                               {'start': 'float', 'stop': 'float', 'num': 'int'})
        if observation_times.num < 1 or observation_times.stop < observation_times.start:
            raise ConfigError('$.observation_times', "need num >= 1 and stop >= start")
    initial_state = _parse_initial_state(data.get('initial_state'))

    acceptance = _Section(data.get('acceptance'), '$.acceptance')
    max_rmse = acceptance.get('max_rmse', 'float', None, nullable=True)
    acceptance.finish()
    summary = _Section(data.get('summary'), '$.summary')
    n_bins = summary.get('n_bins', 'int', 30)
    summary.finish()
    if n_bins < 2:
        raise ConfigError('$.summary.n_bins', f"must be >= 2, got {n_bins}")
    paths = _dataclass_section(data.get('paths'), '$.paths', PathsSpec,
                               {'data': 'str', 'out_dir': 'str', 'surrogate': 'str'},
                               nullable=('data', 'out_dir', 'surrogate'))

    return EstimationJob(
        model=model, seed=seed, forward=forward, plant=plant, polarization=polarization, thermal=thermal,
        prior=prior, noise=noise, surrogate=surrogate, chain=chain, n_chains=n_chains,
        integrator=integrator, schedule=schedule, observation_times=observation_times,
        initial_state=initial_state, max_rmse=max_rmse, n_bins=n_bins, paths=paths,
    )


def job_to_dict(job: EstimationJob) -> Dict[str, Any]:
    """Resolved configuration with every default made explicit."""
    chain = asdict(job.chain)
    chain.pop('seed')
    chain['init'] = None if job.chain.init is None else list(job.chain.init)
    chain['n_chains'] = job.n_chains
    integrator = asdict(job.integrator)
    if integrator['max_step'] == float('inf'):
        integrator['max_step'] = None
    schedule = None
    if job.schedule is not None:
        schedule = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(job.schedule).items()}
        schedule = {k: v for k, v in schedule.items() if v is not None}
    initial_state = {k: ('steady' if v is None else list(v)) for k, v in asdict(job.initial_state).items()}
    return {
        'model': job.model,
        'seed': job.seed,
        'forward': job.forward,
        'plant': asdict(job.plant),
        'polarization': asdict(job.polarization),
        'thermal': asdict(job.thermal),
        'prior': {'parameters': [asdict(p) for p in job.prior.parameters]},
        'noise': {'sigma': dict(job.noise)},
        'surrogate': asdict(job.surrogate),
        'chain': chain,
        'integrator': integrator,
        'schedule': schedule,
        'observation_times': None if job.observation_times is None else asdict(job.observation_times),
        'initial_state': initial_state,
        'acceptance': {'max_rmse': job.max_rmse},
        'summary': {'n_bins': job.n_bins},
        'paths': asdict(job.paths),
    }


def _coerce_override(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: Dict[str, Any], overrides: Sequence[Tuple[str, str]]) -> Dict[str, Any]:
    """Apply ``section.key=value`` overrides (values parsed as JSON when possible)."""
    data = copy.deepcopy(data)
    for dotted, raw in overrides:
        keys = dotted.split('.')
        target = data
        for key in keys[:-1]:
            node = target.get(key)
            if node is None:
                node = {}
                target[key] = node
            if not isinstance(node, dict):
                raise ConfigError(f"$.{dotted}", f"cannot override inside non-object '{key}'")
            target = node
        target[keys[-1]] = _coerce_override(raw)
    return data


def load_json(path: Path) -> Any:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except FileNotFoundError:
        logging.error(f"File not found: {path}")
        raise
    except json.JSONDecodeError as e:
        logging.error(f"Invalid JSON in {path}: {e}")
        raise


def read_job(path: Path, overrides: Sequence[Tuple[str, str]] = ()) -> EstimationJob:
    try:
        data = load_json(path)
    except FileNotFoundError:
        raise ConfigError('$', f"job file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError('$', f"invalid JSON in {path}: {e}")
    job = job_from_dict(apply_overrides(data, overrides))
    logging.info(f"Loaded {job.model} job from {path}")
    return job


def write_json(data: Any, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2)
        f.write('\n')


def write_job(job: EstimationJob, path: Path) -> None:
    write_json(job_to_dict(job), path)


# ---------------------------------------------------------------------------
# Result bundle
# ---------------------------------------------------------------------------

def write_samples(names: Sequence[str], samples: np.ndarray, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(samples, columns=list(names)).to_csv(path, index=False)


def read_samples(path: Path) -> pd.DataFrame:
    try:
        df = pd.read_csv(path)
    except FileNotFoundError:
        logging.error(f"Samples file not found: {path}")
        raise DataError(f"samples file not found: {path}")
    if df.empty:
        raise DataError(f"samples file {path} holds no samples")
    return df


def write_results(job: EstimationJob, names: Sequence[str], samples: np.ndarray,
                  summary: Dict[str, Any], histograms: Dict[str, Any], out_dir: Path) -> Dict[str, Path]:
    """
    Write samples.csv, summary.json, histograms.json and resolved_job.json
    into ``out_dir``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {
        'samples': out_dir / 'samples.csv',
        'summary': out_dir / 'summary.json',
        'histograms': out_dir / 'histograms.json',
        'resolved_job': out_dir / 'resolved_job.json',
    }
    write_samples(names, samples, files['samples'])
    write_json(summary, files['summary'])
    write_json(histograms, files['histograms'])
    write_job(job, files['resolved_job'])
    logging.info(f"Wrote results bundle to {out_dir}")
    return files


def with_paths(job: EstimationJob, **paths: Optional[str]) -> EstimationJob:
    """Job copy with the given non-None path entries replaced."""
    updates = {k: v for k, v in paths.items() if v is not None}
    return replace(job, paths=replace(job.paths, **updates)) if updates else job
