from typing import Dict

import numpy as np
import pandas as pd
from scipy.stats import norm
from tqdm import tqdm

from lmm_deriv.data.DesignMatrices import build_design
from lmm_deriv.derivatives.information import vcov_full
from lmm_deriv.estimation.estimator import fit
from lmm_deriv.robust.sandwich import sandwich
from lmm_deriv.simulation.simulate import simulate_dataset


def slope_standard_errors(
    seed: int,
    n_clusters: int,
    cluster_size: int,
    beta: np.ndarray,
    G: np.ndarray,
    resid_var: float,
    random_effects: str = "normal",
    method: str = "ML",
) -> Dict[str, float]:
    dataset, spec = simulate_dataset(
        n_clusters, cluster_size, beta, G, resid_var, seed=seed, random_effects=random_effects
    )
    model = fit(build_design(dataset, spec), method)
    return {
        "estimate": float(model.params.beta[1]),
        "model_se": float(np.sqrt(vcov_full(model, full=False).values[1, 1])),
        "robust_se": float(sandwich(model).robust_se[1]),
        "converged": model.converged,
    }


def coverage_summary(replications: pd.DataFrame, true_slope: float, level: float = 0.95) -> pd.Series:
    z = norm.ppf(0.5 + level / 2)
    errors = (replications["estimate"] - true_slope).abs()
    return pd.Series(
        {
            "empirical_sd": replications["estimate"].std(ddof=1),
            "mean_model_se": replications["model_se"].mean(),
            "mean_robust_se": replications["robust_se"].mean(),
            "model_coverage": (errors <= z * replications["model_se"]).mean(),
            "robust_coverage": (errors <= z * replications["robust_se"]).mean(),
            "converged": replications["converged"].mean(),
        }
    )


def run_replications(n_replications: int, progress: bool = True, **kwargs) -> pd.DataFrame:
    rows = [slope_standard_errors(seed, **kwargs) for seed in tqdm(range(n_replications), disable=not progress)]
    return pd.DataFrame(rows)
