"""
One-class SVM with an RBF kernel, trained by a two-coordinate (SMO) dual solver.

Dual problem::

    minimize    1/2 sum_ij a_i a_j K(x_i, x_j)
    subject to  0 <= a_i <= 1 / (nu n),  sum_i a_i = 1

Decision function ``f(x) = sum_i a_i K(x_i, x) - rho``; a point is NORMAL iff f(x) >= 0.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from gaitbench.domain import BinaryLabel
from gaitbench.exceptions import InfeasibleParameterError, SolverError

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-6
DEFAULT_MAX_ITERATIONS = 100000
DEFAULT_MAX_GRAM_SIZE = 5000
# Curvature floor for pairs of (near) identical points.
TAU = 1e-12
# Alphas within this distance of a box edge are snapped onto it.
BOUND_EPSILON = 1e-12


def rbf_kernel(x: np.ndarray, y: np.ndarray, gamma: float) -> float:
    """exp(-gamma * ||x - y||^2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f'Kernel arguments differ in shape: {x.shape} vs {y.shape}')
    if gamma <= 0:
        raise ValueError(f'gamma must be > 0, got {gamma}')
    return float(np.exp(-gamma * np.sum((x - y) ** 2)))


def rbf_gram(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """Kernel matrix between the rows of a and the rows of b."""
    return np.exp(-gamma * cdist(np.atleast_2d(a), np.atleast_2d(b), 'sqeuclidean'))


class _KernelColumns:
    """Kernel columns from a full Gram matrix, or computed on demand above the size bound."""

    def __init__(self, vectors: np.ndarray, gamma: float, max_gram_size: int) -> None:
        """Build the Gram matrix when n is within the bound."""
        self.vectors = vectors
        self.gamma = gamma
        self.gram = rbf_gram(vectors, vectors, gamma) if len(vectors) <= max_gram_size else None

    def column(self, index: int) -> np.ndarray:
        """K(x_j, x_index) for every j."""
        if self.gram is not None:
            return self.gram[:, index]
        return rbf_gram(self.vectors, self.vectors[index], self.gamma)[:, 0]


@dataclass(frozen=True)
class OcsvmModel:
    """A trained one-class SVM; only points with a_i > 0 are kept."""

    support_vectors: np.ndarray
    alphas: np.ndarray
    support_indices: Tuple[int, ...]
    gamma: float
    nu: float
    rho: float
    n_train: int
    iterations: int
    objective: float
    kkt_residual: float
    trace: Tuple[float, ...] = field(default=(), repr=False)

    def decision(self, x: np.ndarray) -> float:
        """f(x) = sum_i a_i K(x_i, x) - rho."""
        return float(self.decision_many(np.asarray(x, dtype=float)[np.newaxis, :])[0])

    def decision_many(self, queries: np.ndarray) -> np.ndarray:
        """Decision values for a batch of row vectors."""
        return rbf_gram(queries, self.support_vectors, self.gamma) @ self.alphas - self.rho

    def predict(self, x: np.ndarray) -> BinaryLabel:
        """NORMAL iff f(x) >= 0."""
        return BinaryLabel.NORMAL if self.decision(x) >= 0 else BinaryLabel.NOT_NORMAL

    def predict_many(self, queries: np.ndarray) -> List[BinaryLabel]:
        """Binary labels for a batch of row vectors."""
        return [BinaryLabel.NORMAL if value >= 0 else BinaryLabel.NOT_NORMAL for value in self.decision_many(queries)]

    def to_dict(self) -> Dict[str, Any]:
        """JSON-friendly dump for debugging and cross-checks."""
        return {
            'gamma': self.gamma,
            'nu': self.nu,
            'rho': self.rho,
            'n_train': self.n_train,
            'support_indices': list(self.support_indices),
            'alphas': [float(alpha) for alpha in self.alphas],
            'iterations': self.iterations,
            'objective': self.objective,
            'kkt_residual': self.kkt_residual,
        }


def ocsvm_decision(model: OcsvmModel, x: np.ndarray) -> float:
    """Decision value of one vector."""
    return model.decision(x)


def ocsvm_predict(model: OcsvmModel, x: np.ndarray) -> BinaryLabel:
    """Binary label of one vector."""
    return model.predict(x)


def check_feasible(n: int, nu: float) -> None:
    """
    Reject sample counts and nu values for which the box and the sum constraint cannot both hold.

    :raises InfeasibleParameterError:
    """
    if n < 2:
        raise InfeasibleParameterError(f'need at least 2 training vectors, got {n}')
    if not 0 < nu <= 1:
        raise InfeasibleParameterError(f'nu must be in (0, 1], got {nu}')
    if nu * n < 1 - 1e-12:
        raise InfeasibleParameterError(f'nu * n must be >= 1, got {nu} * {n} = {nu * n:.4g}')


def _initial_alphas(n: int, upper: float) -> np.ndarray:
    alphas = np.zeros(n)
    n_full = min(n, int(math.floor(1.0 / upper + 1e-9)))
    alphas[:n_full] = upper
    if n_full < n:
        alphas[n_full] = max(0.0, 1.0 - n_full * upper)
    return alphas


def _violation(alphas: np.ndarray, gradient: np.ndarray, upper: float) -> Tuple[float, int]:
    """Maximal KKT violation and the index i that attains it on the 'up' side, or (0, -1)."""
    up = alphas < upper - BOUND_EPSILON
    low = alphas > BOUND_EPSILON
    if not up.any() or not low.any():
        return 0.0, -1
    up_indices = np.flatnonzero(up)
    i = int(up_indices[np.argmin(gradient[up_indices])])
    return float(gradient[low].max() - gradient[i]), i


def _select_second(
    i: int, alphas: np.ndarray, gradient: np.ndarray, column_i: np.ndarray, diagonal: float,
) -> int:
    """Second-order choice of j among the points that can give mass to i."""
    low = alphas > BOUND_EPSILON
    gains = gradient - gradient[i]
    candidates = np.flatnonzero(low & (gains > 0))
    if candidates.size == 0:
        return -1
    curvature = np.maximum(2.0 * diagonal - 2.0 * column_i[candidates], TAU)
    scores = -(gains[candidates] ** 2) / curvature
    return int(candidates[np.argmin(scores)])


def _compute_rho(alphas: np.ndarray, gradient: np.ndarray, upper: float) -> float:
    interior = (alphas > BOUND_EPSILON) & (alphas < upper - BOUND_EPSILON)
    if interior.any():
        return float(gradient[interior].mean())
    at_upper = alphas >= upper - BOUND_EPSILON
    at_zero = alphas <= BOUND_EPSILON
    bounds = []
    if at_upper.any():
        bounds.append(float(gradient[at_upper].max()))
    if at_zero.any():
        bounds.append(float(gradient[at_zero].min()))
    return sum(bounds) / len(bounds)


def ocsvm_train(
    train: np.ndarray,
    gamma: float,
    nu: float,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    max_gram_size: int = DEFAULT_MAX_GRAM_SIZE,
    trace: bool = False,
) -> OcsvmModel:
    """
    Train on NORMAL vectors only.

    :raises InfeasibleParameterError: when n < 2 or nu * n < 1.
    :raises SolverError: when the KKT violation is still above tolerance after max_iterations.
    """
    vectors = np.asarray(train, dtype=float)
    n = vectors.shape[0]
    check_feasible(n, nu)
    if gamma <= 0:
        raise InfeasibleParameterError(f'gamma must be > 0, got {gamma}')

    upper = 1.0 / (nu * n)
    kernel = _KernelColumns(vectors, gamma, max_gram_size)
    alphas = _initial_alphas(n, upper)
    gradient = np.zeros(n)
    for index in np.flatnonzero(alphas):
        gradient += alphas[index] * kernel.column(index)

    objectives: List[float] = []
    iterations = 0
    violation, i = _violation(alphas, gradient, upper)
    while violation > tolerance:
        if iterations >= max_iterations:
            raise SolverError(f'OCSVM solver did not converge in {max_iterations} iterations', violation)
        if trace:
            objectives.append(0.5 * float(alphas @ gradient))

        column_i = kernel.column(i)
        j = _select_second(i, alphas, gradient, column_i, diagonal=1.0)
        if j < 0:
            break
        column_j = kernel.column(j)
        curvature = max(2.0 - 2.0 * column_i[j], TAU)
        step = min((gradient[j] - gradient[i]) / curvature, upper - alphas[i], alphas[j])

        old_i, old_j = alphas[i], alphas[j]
        new_i, new_j = old_i + step, old_j - step
        if new_i >= upper - BOUND_EPSILON:
            new_i = upper
        if new_j <= BOUND_EPSILON:
            new_j = 0.0
        alphas[i], alphas[j] = new_i, new_j
        gradient += (new_i - old_i) * column_i + (new_j - old_j) * column_j

        iterations += 1
        violation, i = _violation(alphas, gradient, upper)

    if trace:
        objectives.append(0.5 * float(alphas @ gradient))
    rho = _compute_rho(alphas, gradient, upper)
    support = np.flatnonzero(alphas > 0)
    logger.debug(
        'OCSVM trained: n=%d gamma=%.4g nu=%.3g iterations=%d support=%d', n, gamma, nu, iterations, support.size,
    )
    return OcsvmModel(
        support_vectors=vectors[support],
        alphas=alphas[support].copy(),
        support_indices=tuple(int(index) for index in support),
        gamma=float(gamma),
        nu=float(nu),
        rho=rho,
        n_train=n,
        iterations=iterations,
        objective=0.5 * float(alphas @ gradient),
        kkt_residual=max(violation, 0.0),
        trace=tuple(objectives),
    )


def training_decisions(model: OcsvmModel, train: np.ndarray) -> np.ndarray:
    """Decision values on the training vectors, for KKT and nu-property checks."""
    return model.decision_many(np.asarray(train, dtype=float))


def full_alphas(model: OcsvmModel) -> np.ndarray:
    """Alphas expanded back to one entry per training vector."""
    alphas = np.zeros(model.n_train)
    alphas[list(model.support_indices)] = model.alphas
    return alphas