"""Shared fixtures: plant constants, reference parameters, schedules and small surrogates."""

import json
from pathlib import Path

import numpy as np
import pytest

from scripts.ael_models import ForwardContext, HtoParams, InputSchedule, PlantConstants
from scripts.data_io import REFERENCE_HTO, REFERENCE_POLARIZATION, REFERENCE_THERMAL
from scripts.inference import ParameterPrior, PriorSpec
from scripts.ode_integrator import IntegratorConfig
from scripts.surrogate import Bounds, SurrogateModel

SCHEMAS = Path(__file__).resolve().parent.parent / 'schemas'


@pytest.fixture
def plant():
    return PlantConstants()


@pytest.fixture
def polarization_params():
    return REFERENCE_POLARIZATION


@pytest.fixture
def thermal_params():
    return REFERENCE_THERMAL


@pytest.fixture
def hto_params():
    return HtoParams(*REFERENCE_HTO)


@pytest.fixture
def tight_integrator():
    return IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12)


@pytest.fixture
def context(plant, polarization_params):
    return ForwardContext(plant=plant, integrator=IntegratorConfig(rel_tol=1e-8, abs_tol=1e-10),
                          polarization=polarization_params)


@pytest.fixture
def thermal_schedule():
    """Current steps on multiples of 36 s, held for two hours."""
    return InputSchedule.from_steps([0.0, 1800.0, 3600.0, 5400.0], [1500.0, 3000.0, 4000.0, 2500.0],
                                    pressure=16.0, t_end=7200.0, t_c_in=293.15)


@pytest.fixture
def hto_schedule():
    return InputSchedule.from_steps([0.0, 3600.0], [4000.0, 2000.0], pressure=16.0, t_end=7200.0)


@pytest.fixture
def observation_grid():
    return np.linspace(0.0, 7164.0, 200)


@pytest.fixture
def identity_surrogate():
    """f*(m) = m on [-20, 20]^2."""
    return SurrogateModel(
        dimension=2,
        bounds=Bounds((-20.0, -20.0), (20.0, 20.0)),
        indices=((0, 0), (1, 0), (0, 1)),
        coefficients=np.array([[0.0, 0.0], [20.0, 0.0], [0.0, 20.0]]),
        output_labels=('y0', 'y1'),
    )


@pytest.fixture
def wide_uniform_prior():
    return PriorSpec((ParameterPrior('a', -20.0, 20.0), ParameterPrior('b', -20.0, 20.0)))


@pytest.fixture
def job_file(tmp_path):
    """Copy of a bundled job with chosen sections replaced; returns its path."""

    def make(name, **sections):
        with open(SCHEMAS / name, 'r', encoding='utf-8') as f:
            data = json.load(f)
        data.update(sections)
        path = tmp_path / name
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=2)
        return path

    return make


SMALL_POLARIZATION_JOB = {
    'model': 'polarization',
    'seed': 5,
    'forward': 'surrogate',
    'noise': {'sigma': {'u_cell_V': 0.01}},
    'surrogate': {'level': 1, 'max_level': 2, 'target': 0.5, 'n_test': 10},
    'chain': {'n_steps': 400, 'epsilon': 0.05, 'proposal': 'mala'},
    'schedule': {'grid': {'i_cell_A_m2': [500, 1500, 2500, 3500], 't_s_out_K': [333.15, 353.15], 'p_bar': [16]}},
}


@pytest.fixture
def small_job(tmp_path):
    """Fast polarization job written to disk; keyword sections replace the defaults."""

    def make(**sections):
        data = json.loads(json.dumps(SMALL_POLARIZATION_JOB))
        data.update(sections)
        path = tmp_path / 'small_job.json'
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=2)
        return path

    return make
