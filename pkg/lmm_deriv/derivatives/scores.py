from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
import pandas as pd

from lmm_deriv.estimation.FittedModel import FittedModel
from lmm_deriv.model.param_names import CASEWISE_LEVEL, CLUSTERWISE_LEVEL

LEVELS = (CASEWISE_LEVEL, CLUSTERWISE_LEVEL)


@dataclass(frozen=True)
class ScoreMatrix:
    """Casewise (level 1, one row per observation) or clusterwise (level 2, one row per cluster) scores.

    Columns follow the parameter names: fixed effects first, then the variance components.
    """

    values: np.ndarray
    row_labels: Tuple[Union[int, str], ...]
    column_labels: Tuple[str, ...]
    level: int

    @property
    def column_sums(self) -> np.ndarray:
        return self.values.sum(axis=0)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=list(self.row_labels), columns=list(self.column_labels))


def casewise_scores(model: FittedModel) -> np.ndarray:
    """n x (p + K) scores in the row order of the data."""
    likelihood, terms = model.likelihood, model.terms
    return np.hstack([likelihood.casewise_beta_scores(terms), likelihood.casewise_sigma2_scores(terms)])


def score_matrix(model: FittedModel, level: int = CLUSTERWISE_LEVEL) -> ScoreMatrix:
    if level not in LEVELS:
        raise ValueError(f"level must be {CASEWISE_LEVEL} (casewise) or {CLUSTERWISE_LEVEL} (clusterwise), not {level}")
    scores = casewise_scores(model)
    design = model.design
    if level == CASEWISE_LEVEL:
        return ScoreMatrix(scores, tuple(range(1, design.n + 1)), model.names, level)
    clusterwise = np.array([scores[design.cluster_rows(j)].sum(axis=0) for j in range(design.J)])
    return ScoreMatrix(clusterwise, design.cluster_labels, model.names, level)


def gradient(model: FittedModel) -> np.ndarray:
    return score_matrix(model, CLUSTERWISE_LEVEL).column_sums
