from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from lmm_deriv.data.DesignMatrices import DesignMatrices
from lmm_deriv.model.ParamVector import ParamVector, lower_triangle_positions
from lmm_deriv.model.cluster_terms import ClusterTerms
from lmm_deriv.model.likelihoods import LogLikelihood, get_likelihood
from lmm_deriv.model.param_names import ML

LBFGSB = "L-BFGS-B"
NELDER_MEAD = "Nelder-Mead"
NOT_OPTIMIZED = "none"


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 500
    ftol: float = 1e-10
    gtol: float = 1e-6
    optimizer: str = LBFGSB
    polish_steps: int = 10
    boundary_tol: float = 1e-8

    def __post_init__(self):
        assert self.max_iter >= 1, "max_iter must be at least 1."
        assert self.optimizer in (LBFGSB, NELDER_MEAD), f"Unknown optimizer {self.optimizer}."
        assert self.ftol > 0 and self.gtol > 0 and self.boundary_tol >= 0, "Tolerances must be positive."


def boundary_flags_for(sigma2: np.ndarray, q_c: int, boundary_tol: float) -> Tuple[bool, ...]:
    """Per sigma2 entry: a G_c variance within boundary_tol of zero, or a covariance involving such a variance."""
    at_zero = [sigma2[k] <= boundary_tol for k, (a, b) in enumerate(lower_triangle_positions(q_c)) if a == b]
    flags = [bool(at_zero[a] or at_zero[b]) for a, b in lower_triangle_positions(q_c)]
    return tuple(flags) + (False,)


@dataclass(frozen=True)
class FittedModel:
    params: ParamVector
    objective: float
    method: str
    design: DesignMatrices
    converged: bool
    grad_norm: float
    iterations: int
    boundary_flags: Tuple[bool, ...]
    optimizer: str = NOT_OPTIMIZED
    message: str = ""
    history: Tuple[float, ...] = field(default_factory=tuple)

    @property
    def names(self) -> Tuple[str, ...]:
        return self.params.names

    @property
    def likelihood(self) -> LogLikelihood:
        return get_likelihood(self.method, self.design)

    @cached_property
    def terms(self) -> ClusterTerms:
        """Factorizations and per-cluster quantities at the stored estimates."""
        return self.likelihood.terms(self.params)

    @property
    def boundary_parameters(self) -> List[str]:
        p = self.params.p
        return [self.names[p + k] for k, flag in enumerate(self.boundary_flags) if flag]

    @property
    def n_parameters(self) -> int:
        return self.params.p + self.params.K

    @property
    def aic(self) -> float:
        return -2.0 * self.objective + 2.0 * self.n_parameters

    @property
    def bic(self) -> float:
        n = self.design.n if self.method == ML else self.design.n - self.design.p
        return -2.0 * self.objective + np.log(n) * self.n_parameters

    def fixef(self) -> pd.Series:
        return pd.Series(self.params.beta, index=list(self.design.fixed_names))

    def varcorr(self) -> Dict[str, pd.DataFrame]:
        """Random-effect covariance, standard deviations and correlations, plus the residual variance."""
        names = list(self.design.random_names)
        G = self.params.covariance_block()
        sd = np.sqrt(np.clip(np.diag(G), 0.0, None))
        with np.errstate(divide="ignore", invalid="ignore"):
            correlation = np.where(np.outer(sd, sd) > 0, G / np.outer(sd, sd), np.nan)
        np.fill_diagonal(correlation, 1.0)
        return {
            "covariance": pd.DataFrame(G, index=names, columns=names),
            "sd": pd.DataFrame({"sd": np.r_[sd, np.sqrt(self.params.resid_var)]}, index=names + ["residual"]),
            "correlation": pd.DataFrame(correlation, index=names, columns=names),
        }


@dataclass(frozen=True)
class ConvergenceReport:
    method: str
    objective: float
    converged: bool
    iterations: int
    grad_norm: float
    boundary_parameters: Tuple[str, ...]
    optimizer: str
    message: str

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "objective": self.objective,
            "converged": self.converged,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "boundary_parameters": list(self.boundary_parameters),
            "optimizer": self.optimizer,
            "message": self.message,
        }

    def __str__(self) -> str:
        status = "converged" if self.converged else "NOT converged"
        summary = (
            f"{self.method} fit {status} after {self.iterations} iterations ({self.optimizer}): "
            + f"log-likelihood {self.objective:.6f}, gradient sup-norm {self.grad_norm:.3e}"
        )
        if self.boundary_parameters:
            summary += "; at the boundary: " + ", ".join(self.boundary_parameters)
        return summary + (f". {self.message}" if self.message else ".")


def converge_report(model: FittedModel) -> ConvergenceReport:
    return ConvergenceReport(
        method=model.method,
        objective=model.objective,
        converged=model.converged,
        iterations=model.iterations,
        grad_norm=model.grad_norm,
        boundary_parameters=tuple(model.boundary_parameters),
        optimizer=model.optimizer,
        message=model.message,
    )
