from functools import cached_property
from typing import Optional, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from lmm_deriv.data.DesignMatrices import DesignMatrices
from lmm_deriv.exceptions import RankDeficiencyError
from lmm_deriv.model.MarginalCovariance import MarginalCov, build_V, cluster_derivative_blocks
from lmm_deriv.model.ParamVector import ParamVector


class ClusterTerms:
    """Per-cluster building blocks shared by the likelihoods and their derivatives, at one (sigma2, beta).

    For cluster j (canonical order): V_inv[j] = V_j^-1, W[j] = V_j^-1 X_j, residuals[j] = y_j - X_j beta,
    u[j] = V_j^-1 r_j and dV[j][k] = dV_j/dsigma2_k. When beta is not given it is the GLS solution at sigma2.
    """

    def __init__(
        self,
        sigma2: Union[ParamVector, np.ndarray],
        design: DesignMatrices,
        beta: Optional[np.ndarray] = None,
        cov: Optional[MarginalCov] = None,
    ):
        if isinstance(sigma2, ParamVector):
            beta = sigma2.beta if beta is None else beta
            sigma2 = sigma2.sigma2
        self.sigma2 = np.asarray(sigma2, dtype=np.float64)
        self.design = design
        self.cov = cov if cov is not None else build_V(self.sigma2, design)
        self.X = tuple(design.X[design.cluster_rows(j)] for j in range(design.J))
        self.y = tuple(design.y[design.cluster_rows(j)] for j in range(design.J))
        self.V_inv = tuple(self.cov.inverse_block(j) for j in range(design.J))
        self.W = tuple(V_inv @ X_j for V_inv, X_j in zip(self.V_inv, self.X))
        information_beta = sum(X_j.T @ W_j for X_j, W_j in zip(self.X, self.W))
        self.information_beta = 0.5 * (information_beta + information_beta.T)
        self.profiled = beta is None
        if beta is None:
            beta = self.solve_beta(sum(W_j.T @ y_j for W_j, y_j in zip(self.W, self.y)))
        self.beta = np.asarray(beta, dtype=np.float64)
        self.residuals = tuple(y_j - X_j @ self.beta for y_j, X_j in zip(self.y, self.X))
        self.u = tuple(V_inv @ r_j for V_inv, r_j in zip(self.V_inv, self.residuals))

    @property
    def J(self) -> int:
        return self.design.J

    @property
    def K(self) -> int:
        return self.sigma2.size

    @cached_property
    def beta_factor(self) -> Tuple[np.ndarray, bool]:
        try:
            return cho_factor(self.information_beta, lower=True)
        except LinAlgError as error:
            raise RankDeficiencyError(f"X^T V^-1 X is singular: {error}")

    @cached_property
    def M(self) -> np.ndarray:
        """(X^T V^-1 X)^-1."""
        return cho_solve(self.beta_factor, np.eye(self.information_beta.shape[0]))

    @cached_property
    def dV(self) -> Tuple[Tuple[np.ndarray, ...], ...]:
        return tuple(cluster_derivative_blocks(self.design.Z_rows[self.design.cluster_rows(j)]) for j in range(self.J))

    @cached_property
    def T(self) -> Tuple[Tuple[np.ndarray, ...], ...]:
        """T[j][k] = V_j^-1 dV_j/dsigma2_k."""
        return tuple(tuple(V_inv @ A for A in blocks) for V_inv, blocks in zip(self.V_inv, self.dV))

    @cached_property
    def A_u(self) -> Tuple[np.ndarray, ...]:
        """(dV_j/dsigma2_k) u_j stacked as n_j x K per cluster."""
        return tuple(np.column_stack([A @ u_j for A in blocks]) for blocks, u_j in zip(self.dV, self.u))

    @cached_property
    def C(self) -> np.ndarray:
        """C[k] = X^T V^-1 (dV/dsigma2_k) V^-1 X, shape K x p x p."""
        return np.array([sum(W_j.T @ blocks[k] @ W_j for W_j, blocks in zip(self.W, self.dV)) for k in range(self.K)])

    @cached_property
    def log_det_information_beta(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self.beta_factor[0]))))

    def solve_beta(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve(self.beta_factor, rhs)

    def quadratic_form(self) -> float:
        """r^T V^-1 r."""
        return float(sum(r_j @ u_j for r_j, u_j in zip(self.residuals, self.u)))

    def to_rows(self, per_cluster: Tuple[np.ndarray, ...]) -> np.ndarray:
        """Scatters per-cluster row blocks back to the row order of the data."""
        first = per_cluster[0]
        stacked = np.zeros((self.design.n,) + first.shape[1:])
        for j, block in enumerate(per_cluster):
            stacked[self.design.cluster_rows(j)] = block
        return stacked
