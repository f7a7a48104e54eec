from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np

from lmm_deriv.exceptions import NegativeVarianceError
from lmm_deriv.model.param_names import COV_PREFIX, RESIDUAL_NAME


def lower_triangle_positions(q_c: int) -> List[Tuple[int, int]]:
    """(row, column) of each covariance parameter in G_c: the lower triangle in row-major order."""
    return [(a, b) for a in range(q_c) for b in range(a + 1)]


def n_variance_components(q_c: int) -> int:
    return q_c * (q_c + 1) // 2 + 1


def q_c_from_K(K: int) -> int:
    q_c = int(round((np.sqrt(8 * (K - 1) + 1) - 1) / 2))
    assert n_variance_components(q_c) == K, f"{K} is not a valid number of variance components."
    return q_c


def parameter_names(fixed_names, random_names, group_name: str) -> Tuple[str, ...]:
    cov_names = []
    for a, b in lower_triangle_positions(len(random_names)):
        if a == b:
            cov_names.append(f"{COV_PREFIX}{group_name}.{random_names[a]}")
        else:
            cov_names.append(f"{COV_PREFIX}{group_name}.{random_names[a]}.{random_names[b]}")
    return tuple(fixed_names) + tuple(cov_names) + (RESIDUAL_NAME,)


def design_parameter_names(design) -> Tuple[str, ...]:
    return parameter_names(design.fixed_names, design.random_names, design.group_name)


def fill_symmetric(lower: np.ndarray, q_c: int) -> np.ndarray:
    matrix = np.zeros((q_c, q_c))
    for value, (a, b) in zip(lower, lower_triangle_positions(q_c)):
        matrix[a, b] = value
        matrix[b, a] = value
    return matrix


@dataclass(frozen=True)
class ThetaMap:
    """Relative Cholesky factor of the random-effect covariance: G_c = Lambda_c Lambda_c^T * residual variance.

    theta_k sits in Lambda_c at the position sigma2_k occupies in G_c.
    """

    theta: np.ndarray
    q_c: int

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=np.float64))
        assert self.theta.shape == (self.q_c * (self.q_c + 1) // 2,), (
            f"theta must have {self.q_c * (self.q_c + 1) // 2} entries for q_c = {self.q_c}, "
            + f"got shape {self.theta.shape}."
        )

    @property
    def positions(self) -> List[Tuple[int, int]]:
        return lower_triangle_positions(self.q_c)

    @property
    def diagonal_indices(self) -> List[int]:
        return [k for k, (a, b) in enumerate(self.positions) if a == b]

    @property
    def Lambda(self) -> np.ndarray:
        factor = np.zeros((self.q_c, self.q_c))
        for value, (a, b) in zip(self.theta, self.positions):
            factor[a, b] = value
        return factor

    @classmethod
    def identity(cls, q_c: int) -> "ThetaMap":
        return cls.from_lambda(np.eye(q_c))

    @classmethod
    def from_lambda(cls, factor: np.ndarray) -> "ThetaMap":
        q_c = factor.shape[0]
        return cls(theta=np.array([factor[a, b] for a, b in lower_triangle_positions(q_c)]), q_c=q_c)


def theta_to_sigma2(theta: Union[ThetaMap, np.ndarray], resid_var: float) -> np.ndarray:
    if not isinstance(theta, ThetaMap):
        theta = np.asarray(theta, dtype=np.float64)
        theta = ThetaMap(theta, q_c_from_K(theta.size + 1))
    factor = theta.Lambda
    G = factor @ factor.T * resid_var
    return np.array([G[a, b] for a, b in theta.positions] + [resid_var])


def sigma2_to_theta(sigma2: np.ndarray, zero_tol: float = 1e-14) -> Tuple[ThetaMap, float]:
    """Inverse of `theta_to_sigma2`. A singular positive semidefinite G_c gives a factor with zero columns where the
    elimination hits a (numerically) zero pivot."""
    sigma2 = np.asarray(sigma2, dtype=np.float64)
    resid_var = sigma2[-1]
    if resid_var <= 0:
        raise NegativeVarianceError(f"The residual variance must be positive, got {resid_var}.")
    q_c = q_c_from_K(sigma2.size)
    relative = fill_symmetric(sigma2[:-1], q_c) / resid_var
    factor = np.zeros((q_c, q_c))
    for j in range(q_c):
        pivot = relative[j, j] - factor[j, :j] @ factor[j, :j]
        if pivot < -np.sqrt(zero_tol) * max(1.0, relative[j, j]):
            raise NegativeVarianceError("The random-effect covariance block is not positive semidefinite.")
        if pivot <= zero_tol * max(1.0, relative[j, j]):
            continue
        factor[j, j] = np.sqrt(pivot)
        for i in range(j + 1, q_c):
            factor[i, j] = (relative[i, j] - factor[i, :j] @ factor[j, :j]) / factor[j, j]
    return ThetaMap.from_lambda(factor), resid_var


def internal_jacobian(omega: np.ndarray) -> np.ndarray:
    """d sigma2 / d omega for the optimizer coordinates omega = (theta, log residual variance).

    With G_ab = s * sum_e Lambda_ae Lambda_be, dG_ab/dLambda_cd = s * (delta_ac Lambda_bd + delta_bc Lambda_ad).
    """
    omega = np.asarray(omega, dtype=np.float64)
    K = omega.size
    theta_map = ThetaMap(omega[:-1], q_c_from_K(K))
    resid_var = np.exp(omega[-1])
    factor = theta_map.Lambda
    positions = theta_map.positions
    jacobian = np.zeros((K, K))
    for k, (a, b) in enumerate(positions):
        for m, (c, d) in enumerate(positions):
            jacobian[k, m] = resid_var * ((a == c) * factor[b, d] + (b == c) * factor[a, d])
    jacobian[:-1, -1] = theta_to_sigma2(theta_map, resid_var)[:-1]
    jacobian[-1, -1] = resid_var
    return jacobian


@dataclass(frozen=True)
class ParamVector:
    """Full parameter vector xi = (beta, sigma2) in variance-covariance scale, with report labels."""

    beta: np.ndarray
    sigma2: np.ndarray
    names: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=np.float64))
        object.__setattr__(self, "sigma2", np.asarray(self.sigma2, dtype=np.float64))
        object.__setattr__(self, "names", tuple(self.names))
        assert len(self.names) == self.p + self.K, f"Expected {self.p + self.K} names, got {len(self.names)}."
        q_c_from_K(self.K)

    @property
    def p(self) -> int:
        return self.beta.size

    @property
    def K(self) -> int:
        return self.sigma2.size

    @property
    def q_c(self) -> int:
        return q_c_from_K(self.K)

    @property
    def resid_var(self) -> float:
        return float(self.sigma2[-1])

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([self.beta, self.sigma2])

    @property
    def variance_indices(self) -> List[int]:
        """Positions, within sigma2, of the diagonal entries of G_c."""
        return [k for k, (a, b) in enumerate(lower_triangle_positions(self.q_c)) if a == b]

    def covariance_block(self) -> np.ndarray:
        return fill_symmetric(self.sigma2[:-1], self.q_c)

    def theta_map(self) -> ThetaMap:
        return sigma2_to_theta(self.sigma2)[0]

    def is_valid(self, tol: float = 0.0) -> bool:
        """sigma2_r > 0 and G_c positive semidefinite (eigenvalues >= -tol * scale)."""
        if self.resid_var <= 0:
            return False
        eigenvalues = np.linalg.eigvalsh(self.covariance_block())
        return bool(eigenvalues.min() >= -tol * max(1.0, np.abs(eigenvalues).max()))

    def with_values(self, beta: np.ndarray = None, sigma2: np.ndarray = None) -> "ParamVector":
        return ParamVector(
            beta=self.beta if beta is None else beta, sigma2=self.sigma2 if sigma2 is None else sigma2, names=self.names
        )

    @classmethod
    def from_values(cls, values: np.ndarray, design) -> "ParamVector":
        values = np.asarray(values, dtype=np.float64)
        return cls(beta=values[: design.p], sigma2=values[design.p :], names=design_parameter_names(design))

    @classmethod
    def from_theta(cls, beta: np.ndarray, theta: ThetaMap, resid_var: float, design) -> "ParamVector":
        return cls(beta=beta, sigma2=theta_to_sigma2(theta, resid_var), names=design_parameter_names(design))
