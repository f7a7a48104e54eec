from typing import Optional, Sequence


class LmmDerivError(Exception):
    """Base class of every error raised by lmm_deriv."""


class DataValidationError(LmmDerivError, ValueError):
    pass


class SingularCovarianceError(LmmDerivError):
    """A marginal covariance block V_j could not be factorized."""

    def __init__(self, cluster_label: str, detail: str = ""):
        self.cluster_label = cluster_label
        message = f"Marginal covariance block of cluster '{cluster_label}' is not positive definite."
        super().__init__(message + (f" {detail}" if detail else ""))


class RankDeficiencyError(LmmDerivError):
    pass


class InformationInversionError(LmmDerivError):
    def __init__(self, message: str, boundary_parameters: Optional[Sequence[str]] = None):
        self.boundary_parameters = list(boundary_parameters or [])
        if self.boundary_parameters:
            message += " Parameters at the boundary: " + ", ".join(self.boundary_parameters) + "."
        super().__init__(message)


class NegativeVarianceError(LmmDerivError):
    pass
