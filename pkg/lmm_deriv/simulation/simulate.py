from typing import Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.random import default_rng
from tqdm import tqdm

from lmm_deriv.data.Dataset import Dataset, ModelSpec
from lmm_deriv.data.DesignMatrices import DesignMatrices, build_design
from lmm_deriv.derivatives.information import hessian
from lmm_deriv.estimation.estimator import fitted_at
from lmm_deriv.model.MarginalCovariance import build_V
from lmm_deriv.model.ParamVector import ParamVector, design_parameter_names, lower_triangle_positions
from lmm_deriv.model.param_names import ML

RANDOM_EFFECT_DISTRIBUTIONS = ("normal", "t")
COVARIATE_NAME = "x"
RESPONSE_NAME = "y"
GROUP_NAME = "g"


def simulate_dataset(
    n_clusters: int,
    cluster_size: Union[int, Sequence[int]],
    beta: Sequence[float],
    G: np.ndarray,
    resid_var: float,
    seed: int = None,
    random_effects: str = "normal",
    t_df: float = 3.0,
) -> Tuple[Dataset, ModelSpec]:
    """Long-format data from y = X beta + Z b + e with a random intercept (and a random slope on `x` when G is 2 x 2).

    beta holds the intercept and, if it has two entries, the slope on the covariate `x ~ U(0, 5)`. With
    random_effects = "t" the random effects are multivariate Student-t with `t_df` degrees of freedom, scaled to have
    covariance G.
    """
    assert random_effects in RANDOM_EFFECT_DISTRIBUTIONS, f"Unknown random-effect distribution {random_effects}."
    assert len(beta) in (1, 2), "beta holds an intercept and optionally a slope on x."
    G = np.atleast_2d(np.asarray(G, dtype=np.float64))
    assert G.shape in ((1, 1), (2, 2)), "G must be 1 x 1 (random intercept) or 2 x 2 (intercept and slope)."
    rng = default_rng(seed)
    sizes = [cluster_size] * n_clusters if isinstance(cluster_size, (int, np.integer)) else list(cluster_size)
    assert len(sizes) == n_clusters, "Need one cluster size per cluster."
    n = int(np.sum(sizes))
    groups = np.repeat(np.arange(1, n_clusters + 1), sizes)
    x = rng.uniform(0.0, 5.0, size=n)
    Z_rows = np.column_stack([np.ones(n), x])[:, : G.shape[0]]
    X = np.column_stack([np.ones(n), x])[:, : len(beta)]
    b = _draw_random_effects(rng, G, n_clusters, random_effects, t_df)
    y = X @ np.asarray(beta) + np.sum(Z_rows * b[groups - 1], axis=1) + rng.normal(0.0, np.sqrt(resid_var), size=n)
    frame = pd.DataFrame({RESPONSE_NAME: y, COVARIATE_NAME: x, GROUP_NAME: groups.astype(str)})
    spec = ModelSpec(
        response=RESPONSE_NAME,
        fixed=(COVARIATE_NAME,) if len(beta) == 2 else tuple(),
        random=(COVARIATE_NAME,) if G.shape[0] == 2 else tuple(),
        group=GROUP_NAME,
    )
    return Dataset(frame=frame, spec=spec), spec


def _draw_random_effects(rng, G: np.ndarray, n_clusters: int, distribution: str, t_df: float) -> np.ndarray:
    q_c = G.shape[0]
    eigenvalues, eigenvectors = np.linalg.eigh(G)
    root = eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))
    draws = rng.standard_normal((n_clusters, q_c)) @ root.T
    if distribution == "t":
        assert t_df > 2, "Student-t random effects need more than 2 degrees of freedom for a finite covariance."
        draws *= np.sqrt((t_df - 2.0) / rng.chisquare(t_df, size=n_clusters))[:, None]
    return draws


def simulate_response(design: DesignMatrices, params: ParamVector, rng) -> np.ndarray:
    """A response drawn from N(X beta, V) on the given design."""
    cov = build_V(params, design)
    y = design.X @ params.beta
    for j in range(design.J):
        rows = design.cluster_rows(j)
        y[rows] += np.tril(cov.factors[j][0]) @ rng.standard_normal(rows.size)
    return y


def average_observed_information(
    design: DesignMatrices,
    params: ParamVector,
    n_replications: int,
    seed: int = None,
    progress: bool = False,
    method: str = ML,
) -> np.ndarray:
    """Monte-Carlo average of the observed information (minus the Hessian) at the true parameters."""
    rng = default_rng(seed)
    total = np.zeros((params.p + params.K, params.p + params.K))
    for _ in tqdm(range(n_replications), disable=not progress):
        replicate = design.with_response(simulate_response(design, params, rng))
        total -= hessian(fitted_at(replicate, params, method)).values
    return total / n_replications


def random_small_problem(seed: int) -> Tuple[DesignMatrices, ParamVector]:
    """A small random instance (3 to 6 clusters of 2 to 6 rows, one or two random effects) and the parameters its
    response was simulated from."""
    rng = default_rng(seed)
    n_clusters = int(rng.integers(3, 7))
    sizes = rng.integers(2, 7, size=n_clusters)
    q_c = int(rng.integers(1, 3))
    factor = np.tril(rng.uniform(-0.5, 0.5, size=(q_c, q_c)))
    np.fill_diagonal(factor, rng.uniform(0.6, 1.4, size=q_c))
    G = factor @ factor.T
    resid_var = float(rng.uniform(0.5, 1.5))
    beta = rng.normal(0.0, 2.0, size=2)
    dataset, spec = simulate_dataset(n_clusters, sizes, beta, G, resid_var, seed=int(rng.integers(2**31)))
    design = build_design(dataset, spec)
    sigma2 = np.array([G[a, b] for a, b in lower_triangle_positions(q_c)] + [resid_var])
    return design, ParamVector(beta=beta, sigma2=sigma2, names=design_parameter_names(design))
