from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from lmm_deriv.data.DesignMatrices import DesignMatrices
from lmm_deriv.exceptions import SingularCovarianceError
from lmm_deriv.model.ParamVector import ParamVector, fill_symmetric, lower_triangle_positions, q_c_from_K


def _as_sigma2(params: Union[ParamVector, np.ndarray]) -> np.ndarray:
    if isinstance(params, ParamVector):
        return params.sigma2
    return np.asarray(params, dtype=np.float64)


@dataclass(frozen=True)
class MarginalCov:
    """Per-cluster blocks V_j = Z_j G_c Z_j^T + sigma2_r I (canonical cluster order) and their Cholesky factors."""

    blocks: Tuple[np.ndarray, ...]
    factors: Tuple[Tuple[np.ndarray, bool], ...]
    log_dets: np.ndarray

    @property
    def log_det(self) -> float:
        return float(np.sum(self.log_dets))

    @property
    def J(self) -> int:
        return len(self.blocks)

    def solve(self, j: int, rhs: np.ndarray) -> np.ndarray:
        return cho_solve(self.factors[j], rhs)

    def inverse_block(self, j: int) -> np.ndarray:
        return self.solve(j, np.eye(self.blocks[j].shape[0]))


def cluster_block(Z_j: np.ndarray, G: np.ndarray, resid_var: float) -> np.ndarray:
    return Z_j @ G @ Z_j.T + resid_var * np.eye(Z_j.shape[0])


def build_V(params: Union[ParamVector, np.ndarray], design: DesignMatrices) -> MarginalCov:
    sigma2 = _as_sigma2(params)
    G = fill_symmetric(sigma2[:-1], design.q_c)
    blocks, factors, log_dets = [], [], []
    for j, label in enumerate(design.cluster_labels):
        V_j = cluster_block(design.Z_rows[design.cluster_rows(j)], G, sigma2[-1])
        try:
            factor = cho_factor(V_j, lower=True, check_finite=True)
        except (LinAlgError, ValueError) as error:
            raise SingularCovarianceError(label, str(error))
        blocks.append(V_j)
        factors.append(factor)
        log_dets.append(2.0 * np.sum(np.log(np.diag(factor[0]))))
    return MarginalCov(blocks=tuple(blocks), factors=tuple(factors), log_dets=np.array(log_dets))


def indicator_matrix(k: int, q_c: int) -> Optional[np.ndarray]:
    """D_k such that dG_c/dsigma2_k = D_k (ones at both mirrored positions of a covariance), None for the residual."""
    positions = lower_triangle_positions(q_c)
    if not 0 <= k <= len(positions):
        raise IndexError(f"Variance component index {k} out of range 0..{len(positions)}.")
    if k == len(positions):
        return None
    a, b = positions[k]
    indicator = np.zeros((q_c, q_c))
    indicator[a, b] = 1.0
    indicator[b, a] = 1.0
    return indicator


def cluster_derivative_blocks(Z_j: np.ndarray) -> Tuple[np.ndarray, ...]:
    """dV_j/dsigma2_k for every k of one cluster (the last one is the identity)."""
    q_c = Z_j.shape[1]
    blocks = []
    for a, b in lower_triangle_positions(q_c):
        outer = np.outer(Z_j[:, a], Z_j[:, b])
        blocks.append(outer if a == b else outer + outer.T)
    blocks.append(np.eye(Z_j.shape[0]))
    return tuple(blocks)


@dataclass(frozen=True)
class CovarianceDerivative:
    """dV/dsigma2_k in block form: one block per cluster in canonical cluster order."""

    k: int
    blocks: Tuple[np.ndarray, ...]

    def to_dense(self, design: DesignMatrices) -> np.ndarray:
        """n x n matrix in the row order of the data."""
        dense = np.zeros((design.n, design.n))
        for j, block in enumerate(self.blocks):
            rows = design.cluster_rows(j)
            dense[np.ix_(rows, rows)] = block
        return dense


def dV_dsigma(k: int, design: DesignMatrices) -> CovarianceDerivative:
    """Zero-based k: 0..K-2 index G_c entries (lower triangle, row-major) and K-1 is the residual variance."""
    indicator = indicator_matrix(k, design.q_c)
    blocks = []
    for j in range(design.J):
        rows = design.cluster_rows(j)
        if indicator is None:
            blocks.append(np.eye(rows.size))
        else:
            Z_j = design.Z_rows[rows]
            blocks.append(Z_j @ indicator @ Z_j.T)
    return CovarianceDerivative(k=k, blocks=tuple(blocks))


def dense_V(params: Union[ParamVector, np.ndarray], design: DesignMatrices) -> np.ndarray:
    """Whole n x n marginal covariance Z G Z^T + sigma2_r I in the row order of the data."""
    sigma2 = _as_sigma2(params)
    q_c = q_c_from_K(sigma2.size)
    G_full = np.kron(np.eye(design.J), fill_symmetric(sigma2[:-1], q_c))
    Z = design.Z
    return Z @ G_full @ Z.T + sigma2[-1] * np.eye(design.n)
