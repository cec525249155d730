"""
Nested stratified grid search for the one-class SVM (gamma, nu) on binary MCC.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from gaitbench.domain import BinaryLabel
from gaitbench.exceptions import ConfigError, DatasetError, InfeasibleParameterError, SolverError
from gaitbench.metrics import ConfusionMatrix, mcc
from gaitbench.ocsvm import (
    DEFAULT_MAX_GRAM_SIZE,
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_TOLERANCE,
    OcsvmModel,
    check_feasible,
    ocsvm_train,
)
from gaitbench.preprocess import Standardizer, fit_standardizer

logger = logging.getLogger(__name__)

DEFAULT_GAMMA_FACTORS = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0)
DEFAULT_NU_VALUES = (0.01, 0.05, 0.1, 0.2, 0.3, 0.5)


@dataclass(frozen=True)
class TuningGrid:
    gamma_values: Tuple[float, ...]
    nu_values: Tuple[float, ...]
    folds: int = 3

    def __post_init__(self) -> None:
        """Reject empty grids, out-of-range values and fewer than two folds."""
        object.__setattr__(self, 'gamma_values', tuple(float(value) for value in self.gamma_values))
        object.__setattr__(self, 'nu_values', tuple(float(value) for value in self.nu_values))
        if not self.gamma_values or any(value <= 0 for value in self.gamma_values):
            raise ConfigError('gamma_values', 'expected a non-empty list of positive numbers')
        if not self.nu_values or any(not 0 < value <= 1 for value in self.nu_values):
            raise ConfigError('nu_values', 'expected a non-empty list of numbers in (0, 1]')
        if self.folds < 2:
            raise ConfigError('folds', f'must be >= 2, got {self.folds}')

    def cells(self) -> List[Tuple[float, float]]:
        """(gamma, nu) pairs, gamma-major."""
        return [(gamma, nu) for gamma in self.gamma_values for nu in self.nu_values]


def pooled_variance(vectors: np.ndarray) -> float:
    """Mean of the per-dimension variances."""
    return float(np.var(np.asarray(vectors, dtype=float), axis=0).mean())


def default_tuning_grid(
    vectors: np.ndarray,
    gamma_factors: Sequence[float] = DEFAULT_GAMMA_FACTORS,
    nu_values: Sequence[float] = DEFAULT_NU_VALUES,
    folds: int = 3,
) -> TuningGrid:
    """Scale gamma factors by 1 / (dimension * pooled variance) of the given vectors."""
    vectors = np.asarray(vectors, dtype=float)
    variance = pooled_variance(vectors) or 1.0
    scale = 1.0 / (vectors.shape[1] * variance)
    return TuningGrid(tuple(factor * scale for factor in gamma_factors), tuple(nu_values), folds)


def stratified_folds(labels: Sequence[BinaryLabel], folds: int, rng: np.random.Generator) -> List[np.ndarray]:
    """
    Assign sample indices to folds: per binary class, a seeded shuffle then round-robin.

    Returns the validation indices of each fold, sorted.
    """
    labels = list(labels)
    assignment: List[List[int]] = [[] for _ in range(folds)]
    for binary in BinaryLabel:
        members = np.array([index for index, label in enumerate(labels) if label == binary], dtype=int)
        for position, index in enumerate(rng.permutation(members)):
            assignment[position % folds].append(int(index))
    return [np.array(sorted(indices), dtype=int) for indices in assignment]


def binary_mcc(truth: Sequence[BinaryLabel], predicted: Sequence[BinaryLabel]) -> float:
    """Binary MCC straight from label sequences."""
    labels = tuple(BinaryLabel)
    index = {label: position for position, label in enumerate(labels)}
    counts = np.zeros((2, 2), dtype=np.int64)
    for actual, guess in zip(truth, predicted):
        counts[index[actual], index[guess]] += 1
    return mcc(ConfusionMatrix(labels, counts))


@dataclass
class CellScore:
    """Inner-CV outcome of one (gamma, nu) cell."""

    gamma: float
    nu: float
    fold_mcc: List[float] = field(default_factory=list)
    infeasible: bool = False
    failed: Optional[str] = None

    @property
    def usable(self) -> bool:
        """True when every fold was trained and scored."""
        return not self.infeasible and self.failed is None

    @property
    def mean_mcc(self) -> Optional[float]:
        """Mean MCC over folds, or None when the cell is unusable."""
        if not self.usable or not self.fold_mcc:
            return None
        return float(np.mean(self.fold_mcc))

    def to_dict(self) -> Dict[str, Any]:
        """JSON-friendly mapping."""
        return {
            'gamma': self.gamma,
            'nu': self.nu,
            'fold_mcc': list(self.fold_mcc),
            'mean_mcc': self.mean_mcc,
            'infeasible': self.infeasible,
            'failed': self.failed,
        }


@dataclass(frozen=True)
class TuningResult:
    """Winning cell, the model retrained with it, and the full grid report."""

    gamma: float
    nu: float
    mean_mcc: float
    model: OcsvmModel
    cells: Tuple[CellScore, ...]
    degenerate_folds: Tuple[int, ...]
    standardizer: Optional[Standardizer] = None

    @property
    def degenerate(self) -> bool:
        """True when some inner validation split held a single class."""
        return bool(self.degenerate_folds)

    def predict_many(self, vectors: np.ndarray) -> List[BinaryLabel]:
        """Predict raw vectors, standardized first when the model was trained on standardized ones."""
        if self.standardizer is not None:
            vectors = self.standardizer.apply(vectors)
        return self.model.predict_many(vectors)

    def to_dict(self) -> Dict[str, Any]:
        """JSON-friendly mapping (the model is summarized, not dumped)."""
        return {
            'gamma': self.gamma,
            'nu': self.nu,
            'mean_mcc': self.mean_mcc,
            'degenerate_folds': list(self.degenerate_folds),
            'n_support': len(self.model.support_indices),
            'rho': self.model.rho,
            'cells': [cell.to_dict() for cell in self.cells],
        }


def _inner_splits(
    vectors: np.ndarray,
    labels: List[BinaryLabel],
    validation_folds: List[np.ndarray],
    standardize: bool,
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """(training NORMAL vectors, validation vectors) of each inner fold."""
    all_indices = np.arange(len(labels))
    splits = []
    for validation in validation_folds:
        training = np.setdiff1d(all_indices, validation)
        normal = vectors[np.array([index for index in training if labels[index] == BinaryLabel.NORMAL], dtype=int)]
        held_out = vectors[validation]
        if standardize and len(normal):
            standardizer = fit_standardizer(normal)
            normal, held_out = standardizer.apply(normal), standardizer.apply(held_out)
        splits.append((normal, held_out))
    return splits


def _score_cell(
    cell: CellScore,
    splits: List[Tuple[np.ndarray, np.ndarray]],
    labels: List[BinaryLabel],
    validation_folds: List[np.ndarray],
    degenerate: set,
    solver_options: Dict[str, Any],
) -> None:
    for fold_number, ((normal, held_out), validation) in enumerate(zip(splits, validation_folds)):
        try:
            check_feasible(len(normal), cell.nu)
        except InfeasibleParameterError:
            cell.infeasible = True
            return
        try:
            model = ocsvm_train(normal, cell.gamma, cell.nu, **solver_options)
        except SolverError as exc:
            logger.warning('Tuning cell gamma=%.4g nu=%.3g failed: %s', cell.gamma, cell.nu, exc)
            cell.failed = str(exc)
            return
        if fold_number in degenerate:
            cell.fold_mcc.append(0.0)
            continue
        truth = [labels[index] for index in validation]
        cell.fold_mcc.append(binary_mcc(truth, model.predict_many(held_out)))


def tune_ocsvm(
    vectors: np.ndarray,
    labels: Sequence[BinaryLabel],
    grid: TuningGrid,
    rng: np.random.Generator,
    standardize: bool = False,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    max_gram_size: int = DEFAULT_MAX_GRAM_SIZE,
) -> TuningResult:
    """
    Pick (gamma, nu) by stratified inner cross-validation, then retrain on every NORMAL vector.

    Each fold trains on the NORMAL vectors of its training part and is scored by binary MCC on
    its whole validation part. The best mean MCC wins; ties go to the smaller nu, then the
    smaller gamma. A validation part holding a single class scores 0 and is reported as
    degenerate. Cells whose nu is infeasible for some fold's NORMAL count are skipped.

    With ``standardize``, every inner fold fits its own standardizer on its training NORMAL
    vectors, and the final model uses one fitted on all NORMAL vectors.

    :raises DatasetError: when either binary label is missing.
    :raises InfeasibleParameterError: when no grid cell could be scored.
    """
    vectors = np.asarray(vectors, dtype=float)
    labels = list(labels)
    present = set(labels)
    if present != set(BinaryLabel):
        raise DatasetError('Tuning needs both NORMAL and NOT_NORMAL training samples')

    validation_folds = stratified_folds(labels, grid.folds, rng)
    degenerate = {
        fold_number for fold_number, validation in enumerate(validation_folds)
        if len({labels[index] for index in validation}) < 2
    }
    for fold_number in sorted(degenerate):
        logger.warning('Inner fold %d has a single-class validation split; scored as MCC 0.', fold_number)

    solver_options = {'tolerance': tolerance, 'max_iterations': max_iterations, 'max_gram_size': max_gram_size}
    splits = _inner_splits(vectors, labels, validation_folds, standardize)
    cells = []
    for gamma, nu in grid.cells():
        cell = CellScore(gamma=gamma, nu=nu)
        _score_cell(cell, splits, labels, validation_folds, degenerate, solver_options)
        cells.append(cell)

    usable = [cell for cell in cells if cell.usable]
    if not usable:
        raise InfeasibleParameterError('No (gamma, nu) cell could be trained on every inner fold')
    best = min(usable, key=lambda cell: (-cell.mean_mcc, cell.nu, cell.gamma))

    normal = vectors[[index for index, label in enumerate(labels) if label == BinaryLabel.NORMAL]]
    standardizer = fit_standardizer(normal) if standardize else None
    if standardizer is not None:
        normal = standardizer.apply(normal)
    model = ocsvm_train(normal, best.gamma, best.nu, **solver_options)
    logger.info(
        'Tuned OCSVM: gamma=%.4g nu=%.3g mean MCC=%.3f (%d of %d cells usable)',
        best.gamma, best.nu, best.mean_mcc, len(usable), len(cells),
    )
    return TuningResult(
        gamma=best.gamma,
        nu=best.nu,
        mean_mcc=best.mean_mcc,
        model=model,
        cells=tuple(cells),
        degenerate_folds=tuple(sorted(degenerate)),
        standardizer=standardizer,
    )
