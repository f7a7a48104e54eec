import warnings
from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np
import pandas as pd

from lmm_deriv.derivatives.information import information_matrix
from lmm_deriv.derivatives.scores import score_matrix
from lmm_deriv.estimation.FittedModel import FittedModel
from lmm_deriv.exceptions import DataValidationError, NegativeVarianceError
from lmm_deriv.model.param_names import CLUSTERWISE_LEVEL, EXPECTED

NEGATIVE_DIAGONAL_TOL = 1e-10


@dataclass(frozen=True)
class SandwichResult:
    """Clusterwise robust covariance A^-1 B A^-1 with A the bread information and B the meat.

    `bread` holds A^-1, the model-based covariance the sandwich corrects.
    """

    vcov: np.ndarray
    robust_se: np.ndarray
    bread_kind: str
    labels: Tuple[str, ...]
    meat: np.ndarray
    bread: np.ndarray
    small_sample_correction: bool = False
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.vcov, index=list(self.labels), columns=list(self.labels))

    def se_frame(self) -> pd.Series:
        return pd.Series(self.robust_se, index=list(self.labels), name="robust_se")


def meat_from_scores(cluster_scores: np.ndarray) -> np.ndarray:
    """Sum over rows s_j of the outer products s_j^T s_j."""
    outer = cluster_scores.T @ cluster_scores
    return 0.5 * (outer + outer.T)


def meat(model: FittedModel, correction: bool = False) -> np.ndarray:
    J = model.design.J
    if J < 2:
        raise DataValidationError("The clusterwise meat needs at least two clusters; the data has one.")
    if not model.converged:
        warnings.warn("Meat computed at a model that did not converge; the scores need not sum to zero.")
    B = meat_from_scores(score_matrix(model, CLUSTERWISE_LEVEL).values)
    return B * J / (J - 1) if correction else B


def sandwich_from_meat(model: FittedModel, B: np.ndarray, bread_kind: str = EXPECTED) -> SandwichResult:
    """The sandwich built on a given meat; `sandwich` calls it with the clusterwise meat."""
    bread = information_matrix(model, bread_kind).inverse(model.boundary_parameters).values
    vcov = bread @ B @ bread
    vcov = 0.5 * (vcov + vcov.T)
    notes = []
    diagonal = np.diag(vcov).copy()
    if np.any(diagonal < -NEGATIVE_DIAGONAL_TOL):
        negative = [name for name, value in zip(model.names, diagonal) if value < -NEGATIVE_DIAGONAL_TOL]
        raise NegativeVarianceError("Sandwich covariance has negative diagonal entries for " + ", ".join(negative))
    tiny = diagonal < 0
    if np.any(tiny):
        clamped = [name for name, is_tiny in zip(model.names, tiny) if is_tiny]
        notes.append("Clamped round-off negative sandwich variances to zero: " + ", ".join(clamped))
        warnings.warn(notes[-1])
        vcov[np.diag_indices_from(vcov)] = np.clip(diagonal, 0.0, None)
    return SandwichResult(
        vcov=vcov,
        robust_se=np.sqrt(np.diag(vcov)),
        bread_kind=bread_kind,
        labels=model.names,
        meat=B,
        bread=bread,
        warnings=tuple(notes),
    )


def sandwich(model: FittedModel, bread_kind: str = EXPECTED, correction: bool = False) -> SandwichResult:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        B = meat(model, correction)
        result = sandwich_from_meat(model, B, bread_kind)
    notes = tuple(str(warning.message) for warning in caught)
    for note in notes:
        warnings.warn(note)
    return replace(result, small_sample_correction=correction, warnings=notes)
