#!/usr/bin/env python3
"""
Legendre Polynomial Surrogate on Smolyak Sparse Grids

Replaces an expensive forward model (one ODE simulation per parameter
vector) with a total-degree Legendre expansion f*(m) = sum_i c_i Psi_i(x(m))
whose coefficients are fitted by collocation at Gauss-Legendre sparse-grid
nodes. Models are immutable and serialize to JSON.
"""

import itertools
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from scripts.errors import AcceptanceError, ModelDomainError, SurrogateBuildError

Evaluator = Callable[[np.ndarray], np.ndarray]

_NODE_DECIMALS = 12


@dataclass(frozen=True)
class Bounds:
    """Box [lo, hi] per dimension in physical parameter units."""

    lo: Tuple[float, ...]
    hi: Tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or not self.lo:
            raise ValueError("bounds need equal, non-zero numbers of lower and upper limits")
        for j, (a, b) in enumerate(zip(self.lo, self.hi)):
            if not (np.isfinite(a) and np.isfinite(b) and a < b):
                raise ValueError(f"bounds dimension {j}: need finite lo < hi, got [{a}, {b}]")

    @classmethod
    def from_arrays(cls, lo: Sequence[float], hi: Sequence[float]) -> 'Bounds':
        return cls(tuple(float(v) for v in lo), tuple(float(v) for v in hi))

    @property
    def dimension(self) -> int:
        return len(self.lo)

    @property
    def lo_array(self) -> np.ndarray:
        return np.asarray(self.lo)

    @property
    def hi_array(self) -> np.ndarray:
        return np.asarray(self.hi)

    @property
    def width(self) -> np.ndarray:
        return self.hi_array - self.lo_array

    def contains(self, m: Sequence[float]) -> bool:
        m = np.asarray(m, dtype=float)
        return bool(np.all(m >= self.lo_array) and np.all(m <= self.hi_array))


@dataclass(frozen=True)
class GridSpec:
    """Smolyak level; 1-D rule is Gauss-Legendre, basis is total degree <= level."""

    level: int = 3

    def __post_init__(self):
        if self.level < 0:
            raise ValueError(f"grid level must be >= 0, got {self.level}")


@dataclass(frozen=True, eq=False)
class SurrogateModel:
    dimension: int
    bounds: Bounds
    indices: Tuple[Tuple[int, ...], ...]
    coefficients: np.ndarray
    output_labels: Tuple[str, ...]
    node_residual: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("surrogate multi-indices must be unique")
        if any(len(a) != self.dimension for a in self.indices):
            raise ValueError("multi-index length must equal the surrogate dimension")
        if self.coefficients.shape != (len(self.indices), len(self.output_labels)):
            raise ValueError(
                f"coefficient matrix shape {self.coefficients.shape} does not match "
                f"{len(self.indices)} basis terms x {len(self.output_labels)} outputs"
            )
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("surrogate coefficients must be finite")
        if self.bounds.dimension != self.dimension:
            raise ValueError("bounds dimension does not match surrogate dimension")

    @property
    def index_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=int).reshape(len(self.indices), self.dimension)

    @property
    def max_degree(self) -> int:
        return int(self.index_array.max()) if self.indices else 0

    @property
    def n_outputs(self) -> int:
        return len(self.output_labels)


@dataclass(frozen=True)
class ValidationReport:
    max_rel_error: float
    mean_rel_error: float
    worst_point: Tuple[float, ...]
    n_test: int

    def to_dict(self) -> Dict:
        return {
            'max_rel_error': self.max_rel_error,
            'mean_rel_error': self.mean_rel_error,
            'worst_point': list(self.worst_point),
            'n_test': self.n_test,
        }


# ---------------------------------------------------------------------------
# Reference-space plumbing
# ---------------------------------------------------------------------------

def affine_to_reference(bounds: Bounds, m: Sequence[float]) -> np.ndarray:
    """Map physical m into [-1, 1]^d: x = 2 (m - lo) / (hi - lo) - 1."""
    m = np.asarray(m, dtype=float)
    if m.shape != (bounds.dimension,):
        raise ModelDomainError(f"expected a {bounds.dimension}-vector, got shape {m.shape}")
    lo, hi = bounds.lo_array, bounds.hi_array
    outside = (m < lo) | (m > hi) | ~np.isfinite(m)
    if np.any(outside):
        j = int(np.argmax(outside))
        raise ModelDomainError(f"dimension {j}: value {m[j]} outside bounds [{lo[j]}, {hi[j]}]")
    return np.clip(2.0 * (m - lo) / (hi - lo) - 1.0, -1.0, 1.0)


def reference_to_physical(bounds: Bounds, x: Sequence[float]) -> np.ndarray:
    """Inverse of ``affine_to_reference``."""
    x = np.asarray(x, dtype=float)
    return bounds.lo_array + (x + 1.0) * 0.5 * bounds.width


# ---------------------------------------------------------------------------
# 1-D Legendre machinery
# ---------------------------------------------------------------------------

def _legendre_table(max_degree: int, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of P_0..P_max at each entry of x, shape (len(x), max+1)."""
    x = np.asarray(x, dtype=float)
    values = np.zeros(x.shape + (max_degree + 1,))
    derivs = np.zeros_like(values)
    values[..., 0] = 1.0
    if max_degree >= 1:
        values[..., 1] = x
        derivs[..., 1] = 1.0
    for k in range(1, max_degree):
        values[..., k + 1] = ((2 * k + 1) * x * values[..., k] - k * values[..., k - 1]) / (k + 1)
        derivs[..., k + 1] = derivs[..., k - 1] + (2 * k + 1) * values[..., k]
    return values, derivs


def legendre_eval(max_degree: int, x: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Legendre polynomials P_0..P_max and their derivatives at x.

    Uses the three-term recurrence (k+1) P_{k+1} = (2k+1) x P_k - k P_{k-1}
    and P'_{k+1} = P'_{k-1} + (2k+1) P_k.

    Raises:
        ModelDomainError: |x| > 1.
    """
    if max_degree < 0:
        raise ValueError(f"max_degree must be >= 0, got {max_degree}")
    if not abs(x) <= 1.0:
        raise ModelDomainError(f"Legendre argument {x} outside [-1, 1]")
    return _legendre_table(max_degree, np.asarray(float(x)))


def gauss_legendre_rule(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre nodes (roots of P_n, ascending) and positive weights."""
    if n < 1:
        raise ValueError(f"rule size must be >= 1, got {n}")
    nodes, weights = np.polynomial.legendre.leggauss(n)
    # exact symmetry, so the odd-rule midpoint is exactly 0
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return nodes, weights


# ---------------------------------------------------------------------------
# Sparse grid and basis
# ---------------------------------------------------------------------------

def _level_multi_indices(d: int, lower: int, upper: int) -> List[Tuple[int, ...]]:
    return [levels for levels in itertools.product(range(upper + 1), repeat=d)
            if lower <= sum(levels) <= upper]


def sparse_grid_nodes(d: int, spec: GridSpec) -> np.ndarray:
    """
    Smolyak node set in [-1, 1]^d.

    Union of tensor grids built from (l_j + 1)-point Gauss-Legendre rules for
    every level multi-index with max(0, L - d + 1) <= |l| <= L, deduplicated
    and sorted lexicographically. Returns an array of shape (n_nodes, d).
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    rules = {n: gauss_legendre_rule(n)[0] for n in range(1, spec.level + 2)}
    points = {}
    for levels in _level_multi_indices(d, max(0, spec.level - d + 1), spec.level):
        for point in itertools.product(*(rules[l + 1] for l in levels)):
            key = tuple(round(float(v), _NODE_DECIMALS) + 0.0 for v in point)
            points.setdefault(key, point)
    return np.array([points[k] for k in sorted(points)], dtype=float)


def total_degree_indices(d: int, order: int) -> List[Tuple[int, ...]]:
    """All multi-indices with |alpha| <= order, graded by total degree."""
    indices = [a for a in itertools.product(range(order + 1), repeat=d) if sum(a) <= order]
    return sorted(indices, key=lambda a: (sum(a), tuple(-v for v in a)))


def _basis_matrix(indices: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Psi[n, i] = prod_j P_{alpha_ij}(x_nj) for reference points x (n, d)."""
    values, _ = _legendre_table(int(indices.max(initial=0)), x)
    d = x.shape[1]
    psi = np.ones((x.shape[0], indices.shape[0]))
    for j in range(d):
        psi *= values[:, j, indices[:, j]]
    return psi


# ---------------------------------------------------------------------------
# Build, evaluate, differentiate
# ---------------------------------------------------------------------------

def _evaluate_nodes(evaluator: Evaluator, physical: np.ndarray, max_workers: Optional[int],
                    cache: Optional[Dict[Tuple[float, ...], np.ndarray]]) -> np.ndarray:
    def run(m: np.ndarray) -> np.ndarray:
        key = tuple(m.tolist())
        if cache is not None and key in cache:
            return cache[key]
        try:
            y = np.atleast_1d(np.asarray(evaluator(m), dtype=float))
        except Exception as e:
            raise SurrogateBuildError(f"forward model failed at parameter point {m.tolist()}: {e}") from e
        if not np.all(np.isfinite(y)):
            raise SurrogateBuildError(f"forward model returned non-finite output at parameter point {m.tolist()}")
        if cache is not None:
            cache[key] = y
        return y

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outputs = list(pool.map(run, physical))
    else:
        outputs = [run(m) for m in physical]
    lengths = {len(y) for y in outputs}
    if len(lengths) != 1:
        raise SurrogateBuildError(f"forward model output length varies across nodes: {sorted(lengths)}")
    return np.vstack(outputs)


def build_surrogate(evaluator: Evaluator, bounds: Bounds, spec: GridSpec,
                    output_labels: Optional[Sequence[str]] = None,
                    max_workers: Optional[int] = None,
                    cache: Optional[Dict[Tuple[float, ...], np.ndarray]] = None) -> SurrogateModel:
    """
    Fit a total-degree Legendre surrogate by collocation on the sparse grid.

    Overdetermined systems are solved in the least-squares sense; square
    systems interpolate.

    Raises:
        SurrogateBuildError: forward failure at a node or rank-deficient system.
    """
    start = time.time()
    d = bounds.dimension
    nodes = sparse_grid_nodes(d, spec)
    physical = np.array([reference_to_physical(bounds, x) for x in nodes])
    outputs = _evaluate_nodes(evaluator, physical, max_workers, cache)

    indices = total_degree_indices(d, spec.level)
    index_array = np.asarray(indices, dtype=int).reshape(len(indices), d)
    psi = _basis_matrix(index_array, nodes)
    coefficients, _, rank, _ = np.linalg.lstsq(psi, outputs, rcond=None)
    if rank < len(indices):
        raise SurrogateBuildError(
            f"collocation matrix rank {rank} < {len(indices)} basis terms at level {spec.level}; "
            f"try a different grid level"
        )
    residual = float(np.max(np.abs(psi @ coefficients - outputs)))

    if output_labels is None:
        output_labels = [f"y{k}" for k in range(outputs.shape[1])]
    if len(output_labels) != outputs.shape[1]:
        raise SurrogateBuildError(
            f"{len(output_labels)} output labels for {outputs.shape[1]} forward-model outputs"
        )
    logging.info(f"Built level-{spec.level} surrogate: {len(nodes)} nodes, {len(indices)} basis terms, "
                 f"max node residual {residual:.3e} in {time.time() - start:.2f}s")
    return SurrogateModel(
        dimension=d,
        bounds=bounds,
        indices=tuple(tuple(int(v) for v in a) for a in indices),
        coefficients=coefficients,
        output_labels=tuple(output_labels),
        node_residual=residual,
    )


def eval_reference(model: SurrogateModel, x: np.ndarray) -> np.ndarray:
    """Surrogate output at a reference-space point x in [-1, 1]^d."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.abs(x) <= 1.0):
        raise ModelDomainError(f"reference point {x.tolist()} outside [-1, 1]^{model.dimension}")
    psi = _basis_matrix(model.index_array, x.reshape(1, -1))
    return (psi @ model.coefficients)[0]


def grad_reference(model: SurrogateModel, x: np.ndarray) -> np.ndarray:
    """Jacobian d f*/d x (n_outputs x d) at an interior reference point."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.abs(x) < 1.0):
        raise ModelDomainError(f"gradient requested at boundary point {x.tolist()}")
    indices = model.index_array
    values, derivs = _legendre_table(model.max_degree, x)
    d = model.dimension
    picked = values[np.arange(d)[:, None], indices.T]
    dpsi = np.empty((d, indices.shape[0]))
    for j in range(d):
        factors = picked.copy()
        factors[j] = derivs[j, indices[:, j]]
        dpsi[j] = np.prod(factors, axis=0)
    return (dpsi @ model.coefficients).T


def eval_surrogate(model: SurrogateModel, m: Sequence[float]) -> np.ndarray:
    """f*(m) for physical m inside the model bounds."""
    return eval_reference(model, affine_to_reference(model.bounds, m))


def grad_surrogate(model: SurrogateModel, m: Sequence[float]) -> np.ndarray:
    """
    Jacobian of f* with respect to physical m, shape (n_outputs, d).

    Raises:
        ModelDomainError: m on or outside the bounds.
    """
    x = affine_to_reference(model.bounds, m)
    return grad_reference(model, x) * (2.0 / model.bounds.width)


def validate_surrogate(model: SurrogateModel, evaluator: Evaluator, n_test: int, seed: int) -> ValidationReport:
    """
    Relative error ||f* - f||_inf / ||f||_inf over uniform random draws in the bounds.
    """
    if n_test < 1:
        raise ValueError(f"n_test must be >= 1, got {n_test}")
    rng = np.random.default_rng(seed)
    draws = rng.uniform(model.bounds.lo_array, model.bounds.hi_array, size=(n_test, model.dimension))
    errors = np.empty(n_test)
    for k, m in enumerate(draws):
        exact = np.atleast_1d(np.asarray(evaluator(m), dtype=float))
        approx = eval_surrogate(model, m)
        scale = np.max(np.abs(exact))
        diff = np.max(np.abs(approx - exact))
        errors[k] = diff / scale if scale > 0 else diff
    worst = int(np.argmax(errors))
    return ValidationReport(
        max_rel_error=float(errors[worst]),
        mean_rel_error=float(np.mean(errors)),
        worst_point=tuple(float(v) for v in draws[worst]),
        n_test=n_test,
    )


def build_adaptive_surrogate(evaluator: Evaluator, bounds: Bounds, target: float,
                             start_level: int = 1, max_level: int = 5, n_test: int = 100,
                             seed: int = 0, output_labels: Optional[Sequence[str]] = None,
                             max_workers: Optional[int] = None) -> Tuple[SurrogateModel, ValidationReport]:
    """
    Raise the grid level until the validation error meets ``target``.

    Raises:
        AcceptanceError: target missed at ``max_level``; carries the achieved error.
    """
    cache: Dict[Tuple[float, ...], np.ndarray] = {}
    report = None
    for level in range(start_level, max_level + 1):
        model = build_surrogate(evaluator, bounds, GridSpec(level), output_labels, max_workers, cache)
        report = validate_surrogate(model, evaluator, n_test, seed)
        logging.info(f"Level {level}: max relative validation error {report.max_rel_error:.3e} "
                     f"(target {target:.1e})")
        if report.max_rel_error <= target:
            return model, report
    raise AcceptanceError(
        f"surrogate target {target:.1e} not reached by level {max_level}: "
        f"max relative error {report.max_rel_error:.3e}",
        achieved=report.max_rel_error,
    )


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def surrogate_to_dict(model: SurrogateModel) -> Dict:
    return {
        'dimension': model.dimension,
        'bounds': {'lo': list(model.bounds.lo), 'hi': list(model.bounds.hi)},
        'output_labels': list(model.output_labels),
        'indices': [list(a) for a in model.indices],
        'coefficients': model.coefficients.tolist(),
    }


def surrogate_from_dict(data: Dict) -> SurrogateModel:
    try:
        coefficients = np.asarray(data['coefficients'], dtype=float)
        labels = tuple(data['output_labels'])
        return SurrogateModel(
            dimension=int(data['dimension']),
            bounds=Bounds.from_arrays(data['bounds']['lo'], data['bounds']['hi']),
            indices=tuple(tuple(int(v) for v in a) for a in data['indices']),
            coefficients=coefficients.reshape(len(data['indices']), len(labels)),
            output_labels=labels,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise SurrogateBuildError(f"invalid surrogate document: {e}") from e


def save_surrogate(model: SurrogateModel, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(surrogate_to_dict(model), f, indent=2)
    logging.info(f"Saved surrogate model to {path}")


def load_surrogate(path: Path) -> SurrogateModel:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except FileNotFoundError:
        logging.error(f"Surrogate file not found: {path}")
        raise
    except json.JSONDecodeError as e:
        logging.error(f"Invalid JSON in surrogate file {path}: {e}")
        raise
    return surrogate_from_dict(data)
