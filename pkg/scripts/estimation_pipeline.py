#!/usr/bin/env python3
"""
AEL Parameter Estimation Pipeline

Runs the estimation procedure end to end for one job:
1. Load observations (or take the job's input schedule for synthesis)
2. Build and validate the polynomial surrogate of the forward model
3. Sample the posterior with one or more Metropolis-Hastings chains
4. Summarize the chains (statistics, histograms, ESS, predictive RMSE)
5. Write the results bundle
"""

import json
import logging
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from scripts.ael_models import MODEL_OBSERVABLES, MODEL_PARAMETERS, InputSchedule, simulate_observables
from scripts.data_io import (
    EstimationJob,
    ObservationSeries,
    generate_synthetic,
    load_json,
    observation_labels,
    read_observations,
    read_samples,
    write_json,
    write_results,
    write_synthetic,
)
from scripts.errors import AcceptanceError, ConfigError, DataError
from scripts.inference import (
    ChainResult,
    LeastSquaresResult,
    NoiseModel,
    PosteriorProblem,
    PosteriorSummary,
    effective_sample_size,
    least_squares_fit,
    log_posterior,
    marginal_density,
    marginal_density_2d,
    posterior_summary,
    run_chains,
)
from scripts.surrogate import (
    SurrogateModel,
    ValidationReport,
    build_adaptive_surrogate,
    load_surrogate as read_surrogate,
    save_surrogate,
)

TIMING_REPEATS = 5


@dataclass(frozen=True, eq=False)
class EstimationResult:
    chain: ChainResult
    summary: PosteriorSummary
    ess: List[float]
    histograms: Dict[str, Any]
    rmse: float
    rmse_by_observable: Dict[str, float]
    timings: Dict[str, float]
    validation: Optional[ValidationReport] = None


def load_parameter_file(path: Path, model: str) -> Dict[str, float]:
    """
    Parameter values for ``model`` from a JSON file holding either a flat
    {name: value} object, a truth sidecar ({"true_params": {...}}) or one
    section per model.
    """
    try:
        data = load_json(path)
    except FileNotFoundError:
        raise ConfigError('$', f"parameter file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError('$', f"invalid JSON in {path}: {e}")
    if isinstance(data, dict) and 'true_params' in data:
        data = data['true_params']
    if isinstance(data, dict) and model in data:
        data = data[model]
    names = MODEL_PARAMETERS[model]
    if not isinstance(data, dict):
        raise ConfigError('$', f"{path} does not hold a parameter object")
    missing = [n for n in names if n not in data]
    if missing:
        raise ConfigError(f"$.{missing[0]}", f"missing {model} parameter in {path}")
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"$.{unknown[0]}", f"not a {model} parameter")
    return {n: float(data[n]) for n in names}


class AelEstimationPipeline:
    def __init__(self, job: EstimationJob):
        self.job = job
        self.ctx = job.forward_context()
        self.series: Optional[ObservationSeries] = None
        self.schedule: Optional[InputSchedule] = None
        self.t_obs: Optional[np.ndarray] = None
        self.surrogate: Optional[SurrogateModel] = None
        self.validation: Optional[ValidationReport] = None
        self.timings: Dict[str, float] = {}

    # -- inputs ------------------------------------------------------------

    def load_data(self, path: Path) -> ObservationSeries:
        """Read observations; their sampled inputs become the simulation schedule."""
        start_time = time.time()
        interpolation = self.job.schedule.interpolation if self.job.schedule else 'previous'
        self.series = read_observations(path, self.job.model, self.job.observed, self.job.noise)
        self.schedule = self.series.schedule(interpolation)
        self.t_obs = self.series.t
        logging.info(f"Completed data loading in {time.time() - start_time:.1f}s")
        return self.series

    def use_job_schedule(self) -> InputSchedule:
        if self.job.schedule is None:
            raise ConfigError('$.schedule', f"the {self.job.model} job needs an input schedule")
        self.schedule = self.job.schedule.build()
        if self.job.observation_times is not None:
            self.t_obs = self.job.observation_times.grid()
        else:
            self.t_obs = np.asarray(self.schedule.t, dtype=float)
        return self.schedule

    def use_schedule_file(self, path: Path) -> InputSchedule:
        interpolation = self.job.schedule.interpolation if self.job.schedule else 'previous'
        series = read_observations(path, self.job.model, observed=())
        self.schedule = series.schedule(interpolation)
        self.t_obs = series.t
        return self.schedule

    def _require_inputs(self) -> None:
        if self.schedule is None:
            raise RuntimeError("no schedule loaded; call load_data or use_job_schedule first")

    # -- forward model -----------------------------------------------------

    def simulate(self, values: Sequence[float]) -> Dict[str, np.ndarray]:
        self._require_inputs()
        return simulate_observables(self.job.model, values, self.ctx, self.schedule, self.t_obs)

    def forward_evaluator(self) -> Callable[[np.ndarray], np.ndarray]:
        """Physical parameter vector -> observed outputs concatenated in job order."""
        self._require_inputs()
        observed = self.job.observed

        def evaluate(m: np.ndarray) -> np.ndarray:
            outputs = self.simulate(m)
            return np.concatenate([outputs[name] for name in observed])

        return evaluate

    def output_labels(self) -> List[str]:
        self._require_inputs()
        return observation_labels(self.job.observed, self.t_obs)

    # -- surrogate ---------------------------------------------------------

    def build_surrogate(self) -> Tuple[SurrogateModel, ValidationReport]:
        settings = self.job.surrogate
        logging.info(f"Building surrogate for the {self.job.model} model "
                     f"(levels {settings.level}..{settings.max_level}, target {settings.target:.1e})")
        start_time = time.time()
        self.surrogate, self.validation = build_adaptive_surrogate(
            self.forward_evaluator(),
            self.job.prior.bounds,
            target=settings.target,
            start_level=settings.level,
            max_level=settings.max_level,
            n_test=settings.n_test,
            seed=self.job.seed,
            output_labels=self.output_labels(),
        )
        self.timings['surrogate_build_s'] = time.time() - start_time
        logging.info(f"Completed surrogate build in {self.timings['surrogate_build_s']:.1f}s")
        return self.surrogate, self.validation

    def load_surrogate(self, path: Path) -> SurrogateModel:
        try:
            model = read_surrogate(path)
        except FileNotFoundError:
            raise ConfigError('$.paths.surrogate', f"surrogate file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError('$.paths.surrogate', f"invalid JSON in {path}: {e}")
        if model.bounds != self.job.prior.bounds:
            raise ConfigError('$.paths.surrogate', f"surrogate {path} was built for different prior bounds")
        if list(model.output_labels) != self.output_labels():
            raise ConfigError('$.paths.surrogate', f"surrogate {path} outputs do not match the observations")
        self.surrogate = model
        return model

    def surrogate_summary(self) -> Dict[str, Any]:
        if self.surrogate is None:
            return {}
        info = {'max_degree': self.surrogate.max_degree, 'n_basis': len(self.surrogate.indices)}
        if self.validation is not None:
            info.update(self.validation.to_dict())
        return info

    # -- inference ---------------------------------------------------------

    def posterior_problem(self, forward: str) -> PosteriorProblem:
        if self.series is None:
            raise RuntimeError("no observations loaded; call load_data first")
        observed = self.job.observed
        zero = [name for name in observed if self.job.noise[name] <= 0]
        if zero:
            raise ConfigError(f"$.noise.sigma.{zero[0]}", "must be > 0 for fitting")
        sigma = np.concatenate([np.full(self.series.n, self.job.noise[name]) for name in observed])
        if forward == 'surrogate':
            if self.surrogate is None:
                self.build_surrogate()
            model = self.surrogate
        else:
            model = self.forward_evaluator()
        return PosteriorProblem(
            forward=model,
            observations=self.series.observation_vector(observed),
            prior=self.job.prior,
            noise=NoiseModel(sigma),
            labels=tuple(self.output_labels()),
        )

    def _time_posterior(self, prob: PosteriorProblem) -> float:
        m = self.job.prior.mean()
        start_time = time.perf_counter()
        for _ in range(TIMING_REPEATS):
            log_posterior(prob, m)
        return (time.perf_counter() - start_time) / TIMING_REPEATS

    def predictive_rmse(self, values: Sequence[float]) -> Tuple[float, Dict[str, float]]:
        """RMSE of the direct simulation at ``values`` against the observations."""
        outputs = self.simulate(values)
        by_observable = {}
        squared = []
        for name in self.job.observed:
            residual = outputs[name] - self.series.column(name)
            by_observable[name] = float(np.sqrt(np.mean(residual ** 2)))
            squared.append(residual ** 2)
        return float(np.sqrt(np.mean(np.concatenate(squared)))), by_observable

    def run_estimation(self, forward: Optional[str] = None, n_chains: Optional[int] = None) -> EstimationResult:
        """Surrogate (or direct forward), chains, summary, diagnostics and timings."""
        forward = forward or self.job.forward
        n_chains = n_chains or self.job.n_chains
        if forward == 'direct' and self.job.chain.proposal == 'mala':
            raise ConfigError('$.chain.proposal', "mala needs the surrogate forward model; use random_walk")

        prob = self.posterior_problem(forward)
        self.timings['posterior_eval_s'] = self._time_posterior(prob)
        if forward == 'surrogate':
            direct = PosteriorProblem(self.forward_evaluator(), prob.observations, prob.prior, prob.noise)
            self.timings['posterior_eval_direct_s'] = self._time_posterior(direct)
            self.timings['speedup'] = self.timings['posterior_eval_direct_s'] / self.timings['posterior_eval_s']

        logging.info(f"Sampling {n_chains} chain(s) of {self.job.chain.n_steps} {self.job.chain.proposal} steps "
                     f"with the {forward} forward model")
        start_time = time.time()
        chain = run_chains(prob, self.job.chain, n_chains)
        self.timings['sampling_s'] = time.time() - start_time
        logging.info(f"Completed sampling in {self.timings['sampling_s']:.1f}s")

        names = self.job.parameter_names
        summary = posterior_summary(chain, names)
        ess = [effective_sample_size(chain, j) for j in range(len(names))]
        histograms = posterior_histograms(chain.samples, names, self.job.n_bins)
        rmse, rmse_by_observable = self.predictive_rmse(summary.mean)
        logging.info(f"Posterior mean RMSE {rmse:.6g}, acceptance {chain.acceptance_rate:.3f}")
        return EstimationResult(
            chain=chain,
            summary=summary,
            ess=ess,
            histograms=histograms,
            rmse=rmse,
            rmse_by_observable=rmse_by_observable,
            timings=dict(self.timings),
            validation=self.validation,
        )

    def summary_document(self, result: EstimationResult, forward: str, n_chains: int) -> Dict[str, Any]:
        document = result.summary.to_dict()
        config = asdict(self.job.chain)
        config['init'] = None if self.job.chain.init is None else list(self.job.chain.init)
        config['resolved_burn_in'] = self.job.chain.resolved_burn_in
        config['n_chains'] = n_chains
        config['forward'] = forward
        document.update({
            'acceptance_rate': result.chain.acceptance_rate,
            'chain_acceptance': list(result.chain.chain_acceptance),
            'ess': result.ess,
            'n_samples': result.chain.n_samples,
            'epsilon': result.chain.epsilon,
            'rmse': result.rmse,
            'rmse_by_observable': result.rmse_by_observable,
            'seed': self.job.seed,
            'config': config,
            'surrogate': self.surrogate_summary(),
        })
        return document

    def run_fit(self, data_path: Path, out_dir: Path, surrogate_path: Optional[Path] = None,
                forward: Optional[str] = None, n_chains: Optional[int] = None) -> EstimationResult:
        """Full fit: load data, surrogate, chains, results bundle, acceptance check."""
        start_time = time.time()
        logging.info(f"Starting {self.job.model} parameter estimation")
        forward = forward or self.job.forward
        n_chains = n_chains or self.job.n_chains
        self.load_data(data_path)
        if surrogate_path is not None and forward == 'surrogate':
            self.load_surrogate(surrogate_path)
        result = self.run_estimation(forward, n_chains)

        out_dir = Path(out_dir)
        write_results(self.job, self.job.parameter_names, result.chain.samples,
                      self.summary_document(result, forward, n_chains), result.histograms, out_dir)
        if self.surrogate is not None and surrogate_path is None and forward == 'surrogate':
            save_surrogate(self.surrogate, out_dir / 'surrogate.json')
        self.timings['total_s'] = time.time() - start_time
        write_json(self.timings, out_dir / 'timings.json')
        logging.info(f"Estimation completed successfully in {self.timings['total_s']:.1f} seconds")

        if self.job.max_rmse is not None and result.rmse > self.job.max_rmse:
            raise AcceptanceError(
                f"posterior-mean RMSE {result.rmse:.6g} exceeds acceptance.max_rmse {self.job.max_rmse:.6g}",
                achieved=result.rmse,
            )
        return result

    def run_least_squares(self, data_path: Path, forward: Optional[str] = None,
                          surrogate_path: Optional[Path] = None) -> LeastSquaresResult:
        """LM baseline; the reported RMSE is that of the direct simulation, as for ``run_fit``."""
        self.load_data(data_path)
        forward = forward or self.job.forward
        if surrogate_path is not None and forward == 'surrogate':
            self.load_surrogate(surrogate_path)
        prob = self.posterior_problem(forward)
        result = least_squares_fit(prob, self.job.chain.init)
        rmse, _ = self.predictive_rmse(result.params.values)
        logging.info(f"Least-squares RMSE of the direct simulation {rmse:.6g} (fitted model {result.rmse:.6g})")
        result = replace(result, rmse=rmse)
        if self.job.max_rmse is not None and result.rmse > self.job.max_rmse:
            raise AcceptanceError(
                f"least-squares RMSE {result.rmse:.6g} exceeds acceptance.max_rmse {self.job.max_rmse:.6g}",
                achieved=result.rmse,
            )
        return result

    # -- synthesis and simulation -------------------------------------------

    def synthesize(self, true_params: Dict[str, float], out_path: Path) -> Path:
        self.use_job_schedule()
        series, truth = generate_synthetic(self.job.model, true_params, self.ctx, self.schedule,
                                           self.t_obs, self.job.noise, self.job.seed)
        sidecar = write_synthetic(series, truth, out_path)
        logging.info(f"Wrote synthetic data to {out_path} and ground truth to {sidecar}")
        return sidecar

    def trajectory(self, params: Dict[str, float]) -> pd.DataFrame:
        """Plot-ready frame of inputs and every observable of the model."""
        self._require_inputs()
        values = [params[n] for n in self.job.parameter_names]
        outputs = self.simulate(values)
        c = self.job.plant
        inputs = self.schedule.values_at(self.t_obs, c.t_operating, c.t_c_in)
        frame = {'t_s': self.t_obs, 'i_cell_A_m2': inputs['i_cell'], 'p_bar': inputs['pressure']}
        if self.job.model == 'thermal':
            frame['t_c_in_K'] = inputs['t_c_in']
        elif self.schedule.temperature is not None:
            frame['t_s_out_K'] = inputs['temperature']
        for name in MODEL_OBSERVABLES[self.job.model]:
            frame[name] = outputs[name]
        return pd.DataFrame(frame)


def posterior_histograms(samples: np.ndarray, names: Sequence[str], n_bins: int) -> Dict[str, Any]:
    marginals = {name: marginal_density(samples, j, n_bins).to_dict() for j, name in enumerate(names)}
    pairs = {}
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            pairs[f"{names[i]}|{names[j]}"] = marginal_density_2d(samples, i, j, n_bins).to_dict()
    return {'n_bins': n_bins, 'marginal': marginals, 'pairs': pairs}


def summarize_samples(samples_path: Path, out_dir: Path, n_bins: int = 30) -> Dict[str, Any]:
    """Recompute summary statistics, ESS and histograms from a samples CSV."""
    df = read_samples(samples_path)
    names = list(df.columns)
    samples = df.to_numpy(dtype=float)
    if samples.shape[0] < 10:
        raise DataError(f"{samples_path} holds {samples.shape[0]} samples, need at least 10")
    document = posterior_summary(samples, names).to_dict()
    document['ess'] = [effective_sample_size(samples, j) for j in range(len(names))]
    document['n_samples'] = int(samples.shape[0])
    out_dir = Path(out_dir)
    write_json(document, out_dir / 'summary.json')
    write_json(posterior_histograms(samples, names, n_bins), out_dir / 'histograms.json')
    logging.info(f"Summarized {samples.shape[0]} samples of {names} into {out_dir}")
    return document


def run_estimation(job: EstimationJob, data_path: Path, out_dir: Path,
                   surrogate_path: Optional[Path] = None, forward: Optional[str] = None,
                   n_chains: Optional[int] = None) -> EstimationResult:
    """Run the complete estimation for ``job`` on the observations at ``data_path``."""
    return AelEstimationPipeline(job).run_fit(data_path, out_dir, surrogate_path, forward, n_chains)


def write_trajectory(frame: pd.DataFrame, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    logging.info(f"Wrote {len(frame)} trajectory rows to {path}")
