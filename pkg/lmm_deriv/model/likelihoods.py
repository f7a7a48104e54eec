import abc
from typing import Optional, Tuple, Union

import numpy as np

from lmm_deriv.data.DesignMatrices import DesignMatrices
from lmm_deriv.exceptions import SingularCovarianceError
from lmm_deriv.model.MarginalCovariance import cluster_block
from lmm_deriv.model.ParamVector import ParamVector, fill_symmetric
from lmm_deriv.model.cluster_terms import ClusterTerms
from lmm_deriv.model.param_names import ML, REML

LOG_2PI = np.log(2.0 * np.pi)


class LogLikelihood(metaclass=abc.ABCMeta):
    """Marginal log-likelihood of the LMM and its sigma2 calculus. Subclasses give the method-specific pieces; the
    beta parts are shared (for REML they are evaluated at the GLS estimate)."""

    method: str

    def __init__(self, design: DesignMatrices):
        self.design = design

    def terms(self, sigma2: Union[ParamVector, np.ndarray], beta: Optional[np.ndarray] = None) -> ClusterTerms:
        return ClusterTerms(sigma2, self.design, beta=beta)

    def evaluate(self, sigma2: np.ndarray, beta: Optional[np.ndarray] = None) -> Tuple[float, np.ndarray, ClusterTerms]:
        """(log-likelihood, sigma2 gradient, terms) from a single factorization."""
        terms = self.terms(sigma2, beta)
        return self.value(terms), self.casewise_sigma2_scores(terms).sum(axis=0), terms

    def calculate(self, sigma2: np.ndarray, beta: Optional[np.ndarray] = None) -> float:
        return self.value(self.terms(sigma2, beta))

    def gradient_sigma2(self, sigma2: np.ndarray, beta: Optional[np.ndarray] = None) -> np.ndarray:
        return self.casewise_sigma2_scores(self.terms(sigma2, beta)).sum(axis=0)

    @abc.abstractmethod
    def value(self, terms: ClusterTerms) -> float:
        pass

    @abc.abstractmethod
    def trace_terms(self, terms: ClusterTerms, j: int) -> np.ndarray:
        """n_j x K matrix whose row i is the diagonal entry i of the trace term of each sigma2 gradient."""
        pass

    @abc.abstractmethod
    def hessian_sigma2(self, terms: ClusterTerms) -> np.ndarray:
        pass

    @abc.abstractmethod
    def expected_information_sigma2(self, terms: ClusterTerms) -> np.ndarray:
        pass

    def casewise_sigma2_scores(self, terms: ClusterTerms) -> np.ndarray:
        """n x K: -1/2 diag(trace term) + 1/2 (V^-1 dV_k V^-1 r) * r, rows in the order of the data."""
        per_cluster = []
        for j in range(terms.J):
            quadratic = terms.V_inv[j] @ terms.A_u[j] * terms.residuals[j][:, None]
            per_cluster.append(-0.5 * self.trace_terms(terms, j) + 0.5 * quadratic)
        return terms.to_rows(tuple(per_cluster))

    def casewise_beta_scores(self, terms: ClusterTerms) -> np.ndarray:
        """n x p: (V^-1 X) * r."""
        return terms.to_rows(tuple(W_j * r_j[:, None] for W_j, r_j in zip(terms.W, terms.residuals)))

    def gradient(self, terms: ClusterTerms) -> np.ndarray:
        """Full (beta, sigma2) gradient."""
        beta_part = sum(W_j.T @ r_j for W_j, r_j in zip(terms.W, terms.residuals))
        return np.concatenate([beta_part, self.casewise_sigma2_scores(terms).sum(axis=0)])

    def hessian_beta_sigma2(self, terms: ClusterTerms) -> np.ndarray:
        """p x K: -X^T V^-1 (dV/dsigma2_k) V^-1 r."""
        return -sum(W_j.T @ A_u_j for W_j, A_u_j in zip(terms.W, terms.A_u))

    def _trace_products(self, terms: ClusterTerms) -> np.ndarray:
        """sum_j tr(T_kj T_lj)."""
        K = terms.K
        products = np.zeros((K, K))
        for T_j in terms.T:
            for k in range(K):
                for m in range(k, K):
                    products[k, m] += np.sum(T_j[k] * T_j[m].T)
        return products + np.triu(products, 1).T

    def _quadratic_products(self, terms: ClusterTerms) -> np.ndarray:
        """sum_j (dV_k u)_j^T V_j^-1 (dV_l u)_j."""
        return sum(A_u_j.T @ V_inv @ A_u_j for A_u_j, V_inv in zip(terms.A_u, terms.V_inv))


class MlLogLikelihood(LogLikelihood):
    method = ML

    def value(self, terms: ClusterTerms) -> float:
        return float(-0.5 * (self.design.n * LOG_2PI + terms.cov.log_det + terms.quadratic_form()))

    def trace_terms(self, terms: ClusterTerms, j: int) -> np.ndarray:
        return np.column_stack([np.diag(T) for T in terms.T[j]])

    def hessian_sigma2(self, terms: ClusterTerms) -> np.ndarray:
        hessian = 0.5 * self._trace_products(terms) - self._quadratic_products(terms)
        return 0.5 * (hessian + hessian.T)

    def expected_information_sigma2(self, terms: ClusterTerms) -> np.ndarray:
        return 0.5 * self._trace_products(terms)


class RemlLogLikelihood(LogLikelihood):
    """Restricted likelihood. Trace terms use P = V^-1 - V^-1 X (X^T V^-1 X)^-1 X^T V^-1 in place of V^-1 and the
    residuals are those of the GLS fit, whatever beta is passed in."""

    method = REML

    def terms(self, sigma2: Union[ParamVector, np.ndarray], beta: Optional[np.ndarray] = None) -> ClusterTerms:
        if isinstance(sigma2, ParamVector):
            sigma2 = sigma2.sigma2
        return ClusterTerms(sigma2, self.design)

    def value(self, terms: ClusterTerms) -> float:
        n, p = self.design.n, self.design.p
        return float(
            -0.5
            * ((n - p) * LOG_2PI + terms.cov.log_det + terms.log_det_information_beta + terms.quadratic_form())
        )

    def trace_terms(self, terms: ClusterTerms, j: int) -> np.ndarray:
        """diag(P dV_k) restricted to cluster j: diag(T_kj) - rowsum((W_j M) * (dV_kj W_j))."""
        W_M = terms.W[j] @ terms.M
        return np.column_stack(
            [np.diag(T) - np.sum(W_M * (A @ terms.W[j]), axis=1) for T, A in zip(terms.T[j], terms.dV[j])]
        )

    def _projected_trace_products(self, terms: ClusterTerms) -> np.ndarray:
        """tr(P dV_k P dV_l) = sum_j tr(T_kj T_lj) - 2 tr(M G_kl) + tr(M C_k M C_l)."""
        K = terms.K
        M_C = [terms.M @ C_k for C_k in terms.C]
        products = self._trace_products(terms)
        for k in range(K):
            for m in range(k, K):
                G_km = sum(
                    X_j.T @ T_j[k] @ T_j[m] @ W_j for X_j, T_j, W_j in zip(terms.X, terms.T, terms.W)
                )
                products[k, m] += -2.0 * np.trace(terms.M @ G_km) + np.sum(M_C[k] * M_C[m].T)
                products[m, k] = products[k, m]
        return products

    def hessian_sigma2(self, terms: ClusterTerms) -> np.ndarray:
        """1/2 tr(P dV_k P dV_l) - u^T dV_k P dV_l u."""
        projected = sum(W_j.T @ A_u_j for W_j, A_u_j in zip(terms.W, terms.A_u))
        quadratic = self._quadratic_products(terms) - projected.T @ terms.M @ projected
        hessian = 0.5 * self._projected_trace_products(terms) - quadratic
        return 0.5 * (hessian + hessian.T)

    def expected_information_sigma2(self, terms: ClusterTerms) -> np.ndarray:
        return 0.5 * self._projected_trace_products(terms)


LIKELIHOODS = {ML: MlLogLikelihood, REML: RemlLogLikelihood}


def get_likelihood(method: str, design: DesignMatrices) -> LogLikelihood:
    try:
        return LIKELIHOODS[method.upper()](design)
    except KeyError:
        raise ValueError(f"Unknown estimation method '{method}'; expected one of {', '.join(LIKELIHOODS)}.")


def loglik_ml(params: ParamVector, design: DesignMatrices) -> float:
    return MlLogLikelihood(design).calculate(params.sigma2, params.beta)


def loglik_reml(params: Union[ParamVector, np.ndarray], design: DesignMatrices) -> float:
    return RemlLogLikelihood(design).calculate(params)


def gls_beta(sigma2: Union[ParamVector, np.ndarray], design: DesignMatrices) -> np.ndarray:
    if isinstance(sigma2, ParamVector):
        sigma2 = sigma2.sigma2
    return ClusterTerms(sigma2, design).beta


def cluster_loglik(params: ParamVector, design: DesignMatrices, j: int) -> float:
    """Marginal log-likelihood contribution of the j-th cluster (canonical order)."""
    y_j, X_j, Z_j = design.cluster_arrays(j)
    V_j = cluster_block(Z_j, fill_symmetric(params.sigma2[:-1], design.q_c), params.resid_var)
    sign, log_det = np.linalg.slogdet(V_j)
    if sign <= 0:
        raise SingularCovarianceError(design.cluster_labels[j], "non-positive determinant")
    r_j = y_j - X_j @ params.beta
    return float(-0.5 * (y_j.size * LOG_2PI + log_det + r_j @ np.linalg.solve(V_j, r_j)))
