#!/usr/bin/env python3
"""
Bayesian Parameter Inference

Priors, Gaussian likelihood, log posterior and its gradient, a
gradient-informed (MALA) or random-walk Metropolis-Hastings chain, posterior
summaries and diagnostics, and a Levenberg-Marquardt least-squares baseline.

Chains move in the reference space [-1, 1]^d of the prior bounds, so one step
length serves every parameter whatever its physical scale. Samples are stored
in physical units.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.optimize import least_squares

from scripts.errors import ModelDomainError, NumericError
from scripts.surrogate import (
    Bounds,
    SurrogateModel,
    affine_to_reference,
    eval_reference,
    eval_surrogate,
    grad_reference,
    grad_surrogate,
    reference_to_physical,
)

ForwardModel = Union[SurrogateModel, Callable[[np.ndarray], np.ndarray]]

PROPOSALS = ('mala', 'random_walk')
PRECONDITIONERS = ('identity', 'laplace')
TARGET_ACCEPTANCE = {'mala': 0.574, 'random_walk': 0.234}

# reference-space step of the central-difference Jacobian of a direct model
FD_STEP = 1e-5


@dataclass(frozen=True, eq=False)
class ParameterVector:
    names: Tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        if len(self.names) != len(self.values):
            raise ValueError(f"{len(self.names)} names for {len(self.values)} values")

    def as_dict(self) -> Dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.values)}


@dataclass(frozen=True)
class ParameterPrior:
    name: str
    lo: float
    hi: float
    distribution: str = 'uniform'
    mean: Optional[float] = None
    sd: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise ValueError(f"prior '{self.name}': need finite lo < hi, got [{self.lo}, {self.hi}]")
        if self.distribution not in ('uniform', 'gaussian'):
            raise ValueError(f"prior '{self.name}': unknown distribution {self.distribution!r}")
        if self.distribution == 'gaussian':
            if self.mean is None or self.sd is None:
                raise ValueError(f"prior '{self.name}': gaussian needs mean and sd")
            if not self.sd > 0:
                raise ValueError(f"prior '{self.name}': sd must be > 0, got {self.sd}")


@dataclass(frozen=True)
class PriorSpec:
    parameters: Tuple[ParameterPrior, ...]

    def __post_init__(self):
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise ValueError(f"prior parameter names must be unique, got {names}")
        if not names:
            raise ValueError("prior needs at least one parameter")

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(p.name for p in self.parameters)

    @property
    def dimension(self) -> int:
        return len(self.parameters)

    @property
    def bounds(self) -> Bounds:
        return Bounds.from_arrays([p.lo for p in self.parameters], [p.hi for p in self.parameters])

    def mean(self) -> np.ndarray:
        """Prior mean; box midpoint for uniform, clipped location for gaussian."""
        values = []
        for p in self.parameters:
            if p.distribution == 'gaussian':
                values.append(min(max(p.mean, p.lo), p.hi))
            else:
                values.append(0.5 * (p.lo + p.hi))
        return np.array(values)


@dataclass(frozen=True, eq=False)
class NoiseModel:
    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.ndim != 1 or not np.all(np.isfinite(sigma)) or not np.all(sigma > 0):
            raise ValueError("noise standard deviations must be a vector of finite values > 0")

    @classmethod
    def constant(cls, sigma: float, n: int) -> 'NoiseModel':
        return cls(np.full(n, float(sigma)))


@dataclass(frozen=True, eq=False)
class PosteriorProblem:
    """
    forward is a SurrogateModel or a callable mapping a physical parameter
    vector to the model outputs at the observations.
    """

    forward: ForwardModel
    observations: np.ndarray
    prior: PriorSpec
    noise: NoiseModel
    labels: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        n = len(self.observations)
        if len(self.noise.sigma) != n:
            raise ValueError(f"noise model has {len(self.noise.sigma)} entries for {n} observations")
        if isinstance(self.forward, SurrogateModel):
            if self.forward.dimension != self.prior.dimension:
                raise ValueError(
                    f"surrogate dimension {self.forward.dimension} != prior dimension {self.prior.dimension}"
                )
            if self.forward.n_outputs != n:
                raise ValueError(f"surrogate has {self.forward.n_outputs} outputs for {n} observations")
            if self.labels is not None and tuple(self.labels) != tuple(self.forward.output_labels):
                raise ValueError("surrogate output labels do not match the observation labels")

    @property
    def has_gradient(self) -> bool:
        return isinstance(self.forward, SurrogateModel)

    def evaluate(self, m: np.ndarray) -> np.ndarray:
        if isinstance(self.forward, SurrogateModel):
            return eval_surrogate(self.forward, m)
        return np.asarray(self.forward(m), dtype=float)


@dataclass(frozen=True)
class ChainConfig:
    n_steps: int = 100000
    burn_in: Optional[int] = None
    epsilon: float = 0.05
    proposal: str = 'mala'
    thinning: int = 1
    seed: int = 0
    init: Optional[Tuple[float, ...]] = None
    adapt_epsilon: bool = False
    omit_hastings_correction: bool = False
    precondition: str = 'identity'

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if not 0 <= self.resolved_burn_in < self.n_steps:
            raise ValueError(f"burn_in must satisfy 0 <= burn_in < n_steps, got {self.burn_in}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.proposal not in PROPOSALS:
            raise ValueError(f"proposal must be one of {PROPOSALS}, got {self.proposal!r}")
        if self.precondition not in PRECONDITIONERS:
            raise ValueError(f"precondition must be one of {PRECONDITIONERS}, got {self.precondition!r}")
        if self.thinning < 1:
            raise ValueError(f"thinning must be >= 1, got {self.thinning}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def resolved_burn_in(self) -> int:
        return self.n_steps // 5 if self.burn_in is None else self.burn_in


@dataclass(frozen=True, eq=False)
class ChainResult:
    names: Tuple[str, ...]
    samples: np.ndarray
    log_post_trace: np.ndarray
    acceptance_rate: float
    seed: int
    config: ChainConfig
    epsilon: float
    chain_acceptance: Tuple[float, ...] = field(default=())

    def __post_init__(self):
        if not 0.0 <= self.acceptance_rate <= 1.0:
            raise ValueError(f"acceptance rate {self.acceptance_rate} outside [0, 1]")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.samples, columns=list(self.names))


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------

def log_prior(prior: PriorSpec, m: Sequence[float]) -> float:
    """Sum of per-parameter log densities (uniform contributes 0); -inf outside bounds."""
    m = np.asarray(m, dtype=float)
    total = 0.0
    for p, v in zip(prior.parameters, m):
        if not p.lo <= v <= p.hi:
            return -math.inf
        if p.distribution == 'gaussian':
            total -= 0.5 * ((v - p.mean) / p.sd) ** 2
    return total


def grad_log_prior(prior: PriorSpec, m: Sequence[float]) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    grad = np.zeros(prior.dimension)
    for j, p in enumerate(prior.parameters):
        if p.distribution == 'gaussian':
            grad[j] = -(m[j] - p.mean) / p.sd ** 2
    return grad


def log_likelihood(response: Sequence[float], d: Sequence[float], noise: NoiseModel) -> float:
    """Gaussian log-likelihood -1/2 sum ((d_i - f_i) / sigma_i)^2."""
    response = np.asarray(response, dtype=float)
    d = np.asarray(d, dtype=float)
    if response.shape != d.shape or len(d) != len(noise.sigma):
        raise ValueError(
            f"length mismatch: {len(response)} model outputs, {len(d)} observations, "
            f"{len(noise.sigma)} noise entries"
        )
    z = (d - response) / noise.sigma
    return -0.5 * float(z @ z)


def log_posterior(prob: PosteriorProblem, m: Sequence[float]) -> float:
    lp = log_prior(prob.prior, m)
    if lp == -math.inf:
        return lp
    return log_likelihood(prob.evaluate(np.asarray(m, dtype=float)), prob.observations, prob.noise) + lp


def grad_log_posterior(prob: PosteriorProblem, m: Sequence[float]) -> np.ndarray:
    """
    J^T (d - f(m)) / sigma^2 + grad log prior, with J from the surrogate.

    Raises:
        NumericError: the forward model is a direct simulation without gradients.
    """
    if not prob.has_gradient:
        raise NumericError("gradient needs a surrogate forward model; use the random_walk proposal")
    m = np.asarray(m, dtype=float)
    f = eval_surrogate(prob.forward, m)
    jac = grad_surrogate(prob.forward, m)
    return jac.T @ ((prob.observations - f) / prob.noise.sigma ** 2) + grad_log_prior(prob.prior, m)


class _ReferenceTarget:
    """Log posterior and its gradient in reference coordinates of the prior bounds."""

    def __init__(self, prob: PosteriorProblem):
        self.prob = prob
        self.bounds = prob.prior.bounds
        self.half_width = 0.5 * self.bounds.width
        self.surrogate = prob.forward if prob.has_gradient else None
        if self.surrogate is not None and self.surrogate.bounds != self.bounds:
            self.surrogate = None

    def log_density(self, x: np.ndarray) -> float:
        if not np.all(np.abs(x) <= 1.0):
            return -math.inf
        m = reference_to_physical(self.bounds, x)
        lp = log_prior(self.prob.prior, m)
        if lp == -math.inf:
            return lp
        f = eval_reference(self.surrogate, x) if self.surrogate is not None else self.prob.evaluate(m)
        return log_likelihood(f, self.prob.observations, self.prob.noise) + lp

    def gradient(self, x: np.ndarray) -> np.ndarray:
        if self.surrogate is None:
            m = reference_to_physical(self.bounds, x)
            return grad_log_posterior(self.prob, m) * self.half_width
        m = reference_to_physical(self.bounds, x)
        f = eval_reference(self.surrogate, x)
        jac = grad_reference(self.surrogate, x)
        g = jac.T @ ((self.prob.observations - f) / self.prob.noise.sigma ** 2)
        return g + grad_log_prior(self.prob.prior, m) * self.half_width

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """d f / d x (n_outputs x d); central differences for a direct model."""
        if self.surrogate is not None:
            return grad_reference(self.surrogate, x)
        return central_jacobian(lambda z: self.prob.evaluate(reference_to_physical(self.bounds, z)), x)

    def prior_precision(self) -> np.ndarray:
        """Diagonal precision of the prior in reference coordinates; uniform counts as variance 1/3."""
        precision = np.empty(self.prob.prior.dimension)
        for j, p in enumerate(self.prob.prior.parameters):
            precision[j] = (self.half_width[j] / p.sd) ** 2 if p.distribution == 'gaussian' else 3.0
        return precision


def central_jacobian(fun: Callable[[np.ndarray], np.ndarray], x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian of ``fun`` on [-1, 1]^d, one-sided at the faces."""
    x = np.asarray(x, dtype=float)
    columns = []
    for j in range(len(x)):
        hi, lo = x.copy(), x.copy()
        hi[j] = min(x[j] + step, 1.0)
        lo[j] = max(x[j] - step, -1.0)
        columns.append((np.asarray(fun(hi), dtype=float) - np.asarray(fun(lo), dtype=float)) / (hi[j] - lo[j]))
    return np.column_stack(columns)


# ---------------------------------------------------------------------------
# Metropolis-Hastings chain
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Preconditioner:
    """Proposal covariance M in reference coordinates with its Cholesky factor and inverse."""

    covariance: np.ndarray
    chol: np.ndarray
    precision: np.ndarray

    @classmethod
    def from_precision(cls, precision: np.ndarray) -> 'Preconditioner':
        precision = 0.5 * (precision + precision.T)
        try:
            covariance = np.linalg.inv(precision)
            covariance = 0.5 * (covariance + covariance.T)
            chol = np.linalg.cholesky(covariance)
        except np.linalg.LinAlgError as e:
            raise NumericError(f"proposal covariance is not positive definite: {e}")
        return cls(covariance=covariance, chol=chol, precision=precision)


def laplace_preconditioner(prob: PosteriorProblem, x: np.ndarray) -> Preconditioner:
    """
    Inverse Gauss-Newton Hessian of the negative log posterior at the
    reference point x, J^T diag(1/sigma^2) J plus the prior precision.
    """
    target = _ReferenceTarget(prob)
    jac = target.jacobian(np.clip(x, -1.0 + FD_STEP, 1.0 - FD_STEP))
    weighted = jac / prob.noise.sigma[:, None]
    return Preconditioner.from_precision(weighted.T @ weighted + np.diag(target.prior_precision()))


def propose(x: np.ndarray, grad: Optional[np.ndarray], cfg: ChainConfig, rng: np.random.Generator,
            epsilon: Optional[float] = None, precond: Optional[Preconditioner] = None) -> np.ndarray:
    """
    Candidate in reference coordinates: x + (eps^2 / 2) M grad + eps L xi for
    MALA, x + eps L xi for the random walk, xi standard normal and M = L L^T
    the preconditioner covariance (identity when ``precond`` is None).
    """
    eps = cfg.epsilon if epsilon is None else epsilon
    xi = rng.standard_normal(len(x))
    step = xi if precond is None else precond.chol @ xi
    if cfg.proposal == 'mala':
        if grad is None:
            raise NumericError("MALA proposal needs the log-posterior gradient")
        drift = grad if precond is None else precond.covariance @ grad
        return x + 0.5 * eps ** 2 * drift + eps * step
    return x + eps * step


def langevin_log_q_ratio(x: np.ndarray, grad_x: np.ndarray, y: np.ndarray, grad_y: np.ndarray,
                         epsilon: float, precond: Optional[Preconditioner] = None) -> float:
    """log q(x | y) - log q(y | x) for the (preconditioned) Langevin proposal."""
    if precond is None:
        forward = y - x - 0.5 * epsilon ** 2 * grad_x
        backward = x - y - 0.5 * epsilon ** 2 * grad_y
        return float(forward @ forward - backward @ backward) / (2.0 * epsilon ** 2)
    forward = y - x - 0.5 * epsilon ** 2 * (precond.covariance @ grad_x)
    backward = x - y - 0.5 * epsilon ** 2 * (precond.covariance @ grad_y)
    quad = forward @ precond.precision @ forward - backward @ precond.precision @ backward
    return float(quad) / (2.0 * epsilon ** 2)


def accept(logpost_k: float, logpost_cand: float, proposal_correction: float,
           rng: np.random.Generator) -> bool:
    """Metropolis-Hastings test u < min(1, exp(delta + correction)); u is always drawn."""
    u = rng.random()
    if logpost_cand == -math.inf:
        return False
    log_alpha = min(0.0, logpost_cand - logpost_k + proposal_correction)
    return bool(u < math.exp(log_alpha))


def run_chain(prob: PosteriorProblem, cfg: ChainConfig) -> ChainResult:
    """
    Sample the posterior with a single Metropolis-Hastings chain.

    The chain holds its state on every rejection, discards ``burn_in``
    steps and keeps every ``thinning``-th sample after that. With
    ``adapt_epsilon`` the step length is tuned during burn-in toward the
    proposal's optimal acceptance rate and frozen afterwards. With
    ``precondition='laplace'`` the proposal is shaped by the inverse
    Gauss-Newton Hessian at the initial point.
    """
    start = time.time()
    names = prob.prior.names
    bounds = prob.prior.bounds
    init = np.asarray(cfg.init if cfg.init is not None else prob.prior.mean(), dtype=float)
    if len(init) != prob.prior.dimension:
        raise ValueError(f"initial point has {len(init)} entries, prior has {prob.prior.dimension}")
    if not bounds.contains(init):
        raise ModelDomainError(f"initial point {init.tolist()} outside the prior bounds")

    target = _ReferenceTarget(prob)
    use_grad = cfg.proposal == 'mala'
    x = affine_to_reference(bounds, init)
    lp = target.log_density(x)
    if not math.isfinite(lp):
        raise NumericError(f"log posterior at the initial point {init.tolist()} is not finite")
    grad = target.gradient(x) if use_grad else None
    precond = laplace_preconditioner(prob, x) if cfg.precondition == 'laplace' else None
    if precond is not None:
        logging.debug(f"Laplace preconditioner proposal sd {np.sqrt(np.diag(precond.covariance)).tolist()}")

    rng = np.random.default_rng(cfg.seed)
    burn_in = cfg.resolved_burn_in
    epsilon = cfg.epsilon
    log_eps = math.log(epsilon)
    target_rate = TARGET_ACCEPTANCE[cfg.proposal]
    n_keep = -(-(cfg.n_steps - burn_in) // cfg.thinning)
    samples = np.empty((n_keep, len(x)))
    trace = np.empty(n_keep)
    n_accepted = 0
    kept = 0
    report_every = max(1, cfg.n_steps // 10)

    for k in range(cfg.n_steps):
        cand = propose(x, grad, cfg, rng, epsilon, precond)
        lp_cand = target.log_density(cand)
        grad_cand = None
        correction = 0.0
        if use_grad and math.isfinite(lp_cand):
            if np.all(np.abs(cand) < 1.0):
                grad_cand = target.gradient(cand)
                if not cfg.omit_hastings_correction:
                    correction = langevin_log_q_ratio(x, grad, cand, grad_cand, epsilon, precond)
            else:
                lp_cand = -math.inf
        accepted = accept(lp, lp_cand, correction, rng)
        if accepted:
            x, lp, grad = cand, lp_cand, grad_cand
            n_accepted += 1

        if cfg.adapt_epsilon and k < burn_in:
            log_eps += (float(accepted) - target_rate) / (k + 1) ** 0.6
            epsilon = math.exp(log_eps)

        if k >= burn_in and (k - burn_in) % cfg.thinning == 0:
            samples[kept] = x
            trace[kept] = lp
            kept += 1

        if (k + 1) % report_every == 0:
            logging.debug(f"Processed {k + 1}/{cfg.n_steps} steps ({100 * (k + 1) / cfg.n_steps:.0f}%) "
                          f"in {time.time() - start:.1f}s, acceptance {n_accepted / (k + 1):.3f}")

    physical = np.array([reference_to_physical(bounds, s) for s in samples]).reshape(n_keep, len(x))
    rate = n_accepted / cfg.n_steps
    logging.info(f"Chain seed {cfg.seed}: {cfg.n_steps} steps, acceptance {rate:.3f}, "
                 f"kept {n_keep} samples in {time.time() - start:.1f}s")
    return ChainResult(
        names=names,
        samples=physical,
        log_post_trace=trace,
        acceptance_rate=rate,
        seed=cfg.seed,
        config=cfg,
        epsilon=epsilon,
        chain_acceptance=(rate,),
    )


def chain_seeds(seed: int, n_chains: int) -> List[int]:
    """Per-chain seeds; a single chain keeps the job seed."""
    if n_chains == 1:
        return [seed]
    children = np.random.SeedSequence(seed).spawn(n_chains)
    return [int(child.generate_state(1, np.uint64)[0]) for child in children]


def merge_chains(results: Sequence[ChainResult], cfg: ChainConfig) -> ChainResult:
    """Concatenate post-burn-in samples of several chains in chain order."""
    if not results:
        raise ValueError("no chains to merge")
    if len(results) == 1:
        return results[0]
    total = sum(r.config.n_steps for r in results)
    accepted = sum(r.acceptance_rate * r.config.n_steps for r in results)
    return ChainResult(
        names=results[0].names,
        samples=np.vstack([r.samples for r in results]),
        log_post_trace=np.concatenate([r.log_post_trace for r in results]),
        acceptance_rate=accepted / total,
        seed=cfg.seed,
        config=cfg,
        epsilon=float(np.mean([r.epsilon for r in results])),
        chain_acceptance=tuple(r.acceptance_rate for r in results),
    )


def run_chains(prob: PosteriorProblem, cfg: ChainConfig, n_chains: int = 1,
               max_workers: Optional[int] = None) -> ChainResult:
    """Run independent chains concurrently with derived seeds and merge them."""
    if n_chains < 1:
        raise ValueError(f"n_chains must be >= 1, got {n_chains}")
    configs = [replace(cfg, seed=s) for s in chain_seeds(cfg.seed, n_chains)]
    if n_chains == 1:
        return run_chain(prob, configs[0])
    with ThreadPoolExecutor(max_workers=max_workers or n_chains) as pool:
        results = list(pool.map(lambda c: run_chain(prob, c), configs))
    return merge_chains(results, cfg)


# ---------------------------------------------------------------------------
# Summaries and diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PosteriorSummary:
    names: Tuple[str, ...]
    mean: np.ndarray
    sd: np.ndarray
    q05: np.ndarray
    q50: np.ndarray
    q95: np.ndarray
    correlation: np.ndarray

    def to_dict(self) -> Dict:
        return {
            'parameters': [
                {
                    'name': name,
                    'mean': float(self.mean[j]),
                    'sd': float(self.sd[j]),
                    'q05': float(self.q05[j]),
                    'q50': float(self.q50[j]),
                    'q95': float(self.q95[j]),
                }
                for j, name in enumerate(self.names)
            ],
            'correlation': self.correlation.tolist(),
        }


def _samples_of(res: Union[ChainResult, np.ndarray]) -> np.ndarray:
    samples = res.samples if isinstance(res, ChainResult) else np.asarray(res, dtype=float)
    if samples.ndim == 1:
        samples = samples.reshape(-1, 1)
    if samples.shape[0] == 0:
        raise NumericError("empty chain")
    return samples


def posterior_summary(res: Union[ChainResult, np.ndarray], names: Sequence[str]) -> PosteriorSummary:
    """Per-parameter mean, sd and 5/50/95 % quantiles plus the correlation matrix."""
    samples = _samples_of(res)
    if samples.shape[0] < 2:
        raise NumericError(f"posterior summary needs at least 2 samples, got {samples.shape[0]}")
    df = pd.DataFrame(samples, columns=list(names))
    quantiles = df.quantile([0.05, 0.5, 0.95])
    corr = df.corr().to_numpy()
    # constant columns have undefined correlation
    corr = np.where(np.isnan(corr), 0.0, corr)
    np.fill_diagonal(corr, 1.0)
    return PosteriorSummary(
        names=tuple(names),
        mean=df.mean().to_numpy(),
        sd=df.std(ddof=1).to_numpy(),
        q05=quantiles.loc[0.05].to_numpy(),
        q50=quantiles.loc[0.5].to_numpy(),
        q95=quantiles.loc[0.95].to_numpy(),
        correlation=corr,
    )


@dataclass(frozen=True, eq=False)
class Histogram:
    edges: Tuple[np.ndarray, ...]
    density: np.ndarray

    def to_dict(self) -> Dict:
        return {'edges': [e.tolist() for e in self.edges], 'density': self.density.tolist()}


def marginal_density(res: Union[ChainResult, np.ndarray], dim: int, n_bins: int) -> Histogram:
    """Normalized 1-D histogram of one parameter."""
    if n_bins < 2:
        raise ValueError(f"n_bins must be >= 2, got {n_bins}")
    density, edges = np.histogram(_samples_of(res)[:, dim], bins=n_bins, density=True)
    return Histogram(edges=(edges,), density=density)


def marginal_density_2d(res: Union[ChainResult, np.ndarray], dim_i: int, dim_j: int, n_bins: int) -> Histogram:
    """Normalized 2-D histogram of a parameter pair."""
    if n_bins < 2:
        raise ValueError(f"n_bins must be >= 2, got {n_bins}")
    samples = _samples_of(res)
    density, x_edges, y_edges = np.histogram2d(samples[:, dim_i], samples[:, dim_j], bins=n_bins, density=True)
    return Histogram(edges=(x_edges, y_edges), density=density)


def autocorrelation(x: np.ndarray) -> np.ndarray:
    """Normalized autocorrelation function via FFT."""
    n = len(x)
    centered = x - np.mean(x)
    spectrum = np.fft.rfft(centered, 2 * n)
    acov = np.fft.irfft(spectrum * np.conj(spectrum))[:n] / n
    return acov / acov[0]


def ess_1d(x: Sequence[float]) -> float:
    """
    Effective sample size with initial positive (monotone) sequence
    truncation of the autocorrelation sum, clipped to [1, n].
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 10:
        raise ValueError(f"effective sample size needs at least 10 samples, got {n}")
    if np.var(x) == 0:
        return 1.0
    rho = autocorrelation(x)
    tau = -1.0
    previous = math.inf
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        pair = min(pair, previous)
        tau += 2.0 * pair
        previous = pair
    return float(min(max(n / tau, 1.0), n))


def effective_sample_size(res: Union[ChainResult, np.ndarray], dim: int) -> float:
    return ess_1d(_samples_of(res)[:, dim])


# ---------------------------------------------------------------------------
# Least squares baseline
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LeastSquaresResult:
    params: ParameterVector
    rmse: float
    iterations: int
    converged: bool
    message: str
    cost: float = math.nan
    initial_cost: float = math.nan
    optimality: float = math.nan

    def to_dict(self) -> Dict:
        return {
            'params': self.params.as_dict(),
            'rmse': self.rmse,
            'iterations': self.iterations,
            'converged': self.converged,
            'message': self.message,
            'cost': self.cost,
            'initial_cost': self.initial_cost,
            'optimality': self.optimality,
        }


def least_squares_fit(prob: PosteriorProblem, init: Optional[Sequence[float]] = None,
                      max_nfev: Optional[int] = None) -> LeastSquaresResult:
    """
    Levenberg-Marquardt fit of sum ((d_i - f_i(m)) / sigma_i)^2.

    Bounds are kept by the substitution x = sin(z) on the reference
    coordinates. The surrogate Jacobian is used when available, central
    differences of the forward model otherwise. ``cost`` is half the weighted
    sum of squares and ``optimality`` the max-norm of its gradient in z at
    the returned point. Non-convergence returns the best point found with
    ``converged=False``.
    """
    bounds = prob.prior.bounds
    init = np.asarray(init if init is not None else prob.prior.mean(), dtype=float)
    if not bounds.contains(init):
        raise ModelDomainError(f"initial point {init.tolist()} outside the prior bounds")
    surrogate = prob.forward if prob.has_gradient and prob.forward.bounds == bounds else None
    sigma = prob.noise.sigma

    def to_reference(z: np.ndarray) -> np.ndarray:
        return np.clip(np.sin(z), -1.0, 1.0)

    def model_at(x: np.ndarray) -> np.ndarray:
        if surrogate is not None:
            return eval_reference(surrogate, x)
        return prob.evaluate(reference_to_physical(bounds, x))

    def model(z: np.ndarray) -> np.ndarray:
        return model_at(to_reference(z))

    def residuals(z: np.ndarray) -> np.ndarray:
        return (model(z) - prob.observations) / sigma

    def jacobian(z: np.ndarray) -> np.ndarray:
        if surrogate is not None:
            jac = grad_reference(surrogate, np.clip(np.sin(z), -1.0 + 1e-12, 1.0 - 1e-12))
        else:
            jac = central_jacobian(model_at, to_reference(z))
        return jac * np.cos(z) / sigma[:, None]

    start = time.time()
    z0 = np.arcsin(affine_to_reference(bounds, init))
    # MINPACK scales its first step by |z0|; clear the rounding residue left at the box centre
    z0[np.abs(z0) < 1e-12] = 0.0
    initial_cost = 0.5 * float(np.sum(residuals(z0) ** 2))
    solution = least_squares(
        residuals,
        z0,
        jac=jacobian,
        method='lm',
        xtol=1e-12,
        ftol=1e-12,
        gtol=1e-12,
        max_nfev=max_nfev,
    )
    m = reference_to_physical(bounds, to_reference(solution.x))
    rmse = float(np.sqrt(np.mean((model(solution.x) - prob.observations) ** 2)))
    converged = bool(solution.status > 0)
    if not converged:
        logging.warning(f"Least squares stopped before convergence: {solution.message}")
    logging.info(f"Completed least squares in {time.time() - start:.2f}s: RMSE {rmse:.6g}, "
                 f"cost {initial_cost:.6g} -> {solution.cost:.6g}, {solution.nfev} function evaluations")
    return LeastSquaresResult(
        params=ParameterVector(prob.prior.names, m),
        rmse=rmse,
        iterations=int(solution.nfev),
        converged=converged,
        message=str(solution.message),
        cost=float(solution.cost),
        initial_cost=initial_cost,
        optimality=float(solution.optimality),
    )
