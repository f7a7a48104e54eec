import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from lmm_deriv.estimation.FittedModel import FittedModel
from lmm_deriv.exceptions import InformationInversionError
from lmm_deriv.model.param_names import EXPECTED, INFORMATION_KINDS, OBSERVED

HESSIAN = "hessian"
INFORMATION = "information"
COVARIANCE = "covariance"


@dataclass(frozen=True)
class InfoMatrix:
    """A labelled (p + K) square matrix: the Hessian, an information matrix or its inverse (a covariance)."""

    values: np.ndarray
    kind: str
    scale: str
    labels: Tuple[str, ...]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=list(self.labels), columns=list(self.labels))

    def inverse(self, boundary_parameters: Optional[Sequence[str]] = None) -> "InfoMatrix":
        """Covariance from the information; a failure lists `boundary_parameters` in the error."""
        assert self.scale == INFORMATION, "Only information matrices are inverted."
        values = _invert_positive_definite(self.values, self.kind, boundary_parameters)
        return InfoMatrix(values, self.kind, COVARIANCE, self.labels)

    def block(self, size: int) -> "InfoMatrix":
        """The leading size x size block (the fixed effects when size = p)."""
        return InfoMatrix(self.values[:size, :size].copy(), self.kind, self.scale, self.labels[:size])


def _invert_positive_definite(
    matrix: np.ndarray, kind: str, boundary_parameters: Optional[Sequence[str]] = None
) -> np.ndarray:
    try:
        factor = cho_factor(matrix, lower=True)
    except LinAlgError:
        advice = "Use the expected information instead." if kind == OBSERVED else ""
        raise InformationInversionError(
            f"The {kind} information is singular or not positive definite. {advice}".strip(), boundary_parameters
        )
    inverse = cho_solve(factor, np.eye(matrix.shape[0]))
    return 0.5 * (inverse + inverse.T)


def hessian(model: FittedModel) -> InfoMatrix:
    """Second derivatives of the log-likelihood at the estimates (minus the observed information)."""
    if model.boundary_parameters:
        warnings.warn(
            "Observed information at a boundary estimate ("
            + ", ".join(model.boundary_parameters)
            + ") may be indefinite; it is reported as is."
        )
    likelihood, terms = model.likelihood, model.terms
    p = model.params.p
    values = np.zeros((model.n_parameters, model.n_parameters))
    values[:p, :p] = -terms.information_beta
    values[:p, p:] = likelihood.hessian_beta_sigma2(terms)
    values[p:, :p] = values[:p, p:].T
    values[p:, p:] = likelihood.hessian_sigma2(terms)
    return InfoMatrix(values, OBSERVED, HESSIAN, model.names)


def expected_info(model: FittedModel) -> InfoMatrix:
    """Fisher information; the fixed-effect/variance-component cross blocks are exactly zero."""
    likelihood, terms = model.likelihood, model.terms
    p = model.params.p
    values = np.zeros((model.n_parameters, model.n_parameters))
    values[:p, :p] = terms.information_beta
    values[p:, p:] = likelihood.expected_information_sigma2(terms)
    return InfoMatrix(values, EXPECTED, INFORMATION, model.names)


def observed_info(model: FittedModel) -> InfoMatrix:
    negated = hessian(model)
    return InfoMatrix(-negated.values, OBSERVED, INFORMATION, negated.labels)


def information_matrix(model: FittedModel, information: str = EXPECTED) -> InfoMatrix:
    if information not in INFORMATION_KINDS:
        raise ValueError(f"information must be one of {', '.join(INFORMATION_KINDS)}, got '{information}'.")
    return expected_info(model) if information == EXPECTED else observed_info(model)


def vcov_full(model: FittedModel, full: bool = True, information: str = EXPECTED) -> InfoMatrix:
    """Inverse of the selected information matrix. With full = False only the fixed-effect block is returned."""
    info = information_matrix(model, information)
    p = model.params.p
    boundary = model.boundary_parameters
    if information == EXPECTED:
        values = np.zeros_like(info.values)
        values[:p, :p] = _invert_positive_definite(info.values[:p, :p], EXPECTED)
        values[p:, p:] = _invert_positive_definite(info.values[p:, p:], EXPECTED, boundary)
    else:
        values = _invert_positive_definite(info.values, OBSERVED, boundary)
    covariance = InfoMatrix(values, info.kind, COVARIANCE, info.labels)
    return covariance if full else covariance.block(p)
