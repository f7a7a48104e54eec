import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, List, Sequence, Tuple

import numpy as np

from lmm_deriv.data.Dataset import Dataset, ModelSpec
from lmm_deriv.exceptions import DataValidationError
from lmm_deriv.model.param_names import INTERCEPT_NAME


@dataclass(frozen=True)
class DesignMatrices:
    """Response, fixed design and block-structured random design of a single-grouping-factor LMM.

    The random design is stored compactly as `Z_rows` (n x q_c): row i holds the random covariates of observation i,
    which sit in the block of columns belonging to its cluster in the full n x q matrix `Z` (q = J * q_c). Clusters are
    kept in canonical order (see `canonical_cluster_order`) and `clusters` maps each label to its row indices, in the
    original row order of the data.
    """

    y: np.ndarray
    X: np.ndarray
    Z_rows: np.ndarray
    cluster_labels: Tuple[str, ...]
    clusters: Dict[str, np.ndarray]
    fixed_names: Tuple[str, ...]
    random_names: Tuple[str, ...]
    group_name: str
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q_c(self) -> int:
        return self.Z_rows.shape[1]

    @property
    def J(self) -> int:
        return len(self.cluster_labels)

    @property
    def q(self) -> int:
        return self.J * self.q_c

    @property
    def K(self) -> int:
        return self.q_c * (self.q_c + 1) // 2 + 1

    @property
    def cluster_index(self) -> np.ndarray:
        """Position (in canonical cluster order) of the cluster of every row."""
        index = np.empty(self.n, dtype=int)
        for j, label in enumerate(self.cluster_labels):
            index[self.clusters[label]] = j
        return index

    @property
    def Z(self) -> np.ndarray:
        """Dense n x q random design; only meant for small problems and checks."""
        Z = np.zeros((self.n, self.q))
        for j, label in enumerate(self.cluster_labels):
            rows = self.clusters[label]
            Z[np.ix_(rows, np.arange(j * self.q_c, (j + 1) * self.q_c))] = self.Z_rows[rows]
        return Z

    def cluster_rows(self, j: int) -> np.ndarray:
        return self.clusters[self.cluster_labels[j]]

    def cluster_arrays(self, j: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(y_j, X_j, Z_j) of the j-th cluster in canonical order."""
        rows = self.cluster_rows(j)
        return self.y[rows], self.X[rows], self.Z_rows[rows]

    def with_response(self, y: np.ndarray) -> "DesignMatrices":
        y = np.array(y, dtype=np.float64)
        assert y.shape == self.y.shape, f"Response must have shape {self.y.shape}, got {y.shape}."
        return _freeze(replace(self, y=y))

    def subset_rows(self, order: Sequence[int]) -> "DesignMatrices":
        """The same design with its rows permuted (used for invariance checks)."""
        order = np.asarray(order)
        inverse = np.empty_like(order)
        inverse[order] = np.arange(order.size)
        clusters = {label: np.sort(inverse[rows]) for label, rows in self.clusters.items()}
        return _freeze(
            DesignMatrices(
                y=self.y[order],
                X=self.X[order],
                Z_rows=self.Z_rows[order],
                cluster_labels=self.cluster_labels,
                clusters=clusters,
                fixed_names=self.fixed_names,
                random_names=self.random_names,
                group_name=self.group_name,
                warnings=self.warnings,
            )
        )


def canonical_cluster_order(labels: Sequence[str]) -> List[str]:
    """Sorted unique labels: numerically when every label is an integer literal, lexicographically otherwise. The
    order does not depend on the row order of the data."""
    unique = sorted(set(str(label) for label in labels))
    try:
        return sorted(unique, key=lambda label: (int(label), label))
    except ValueError:
        return unique


def build_design(data: Dataset, spec: ModelSpec = None) -> DesignMatrices:
    spec = spec or data.spec
    frame = data.frame
    n = len(frame)
    fixed_names = ((INTERCEPT_NAME,) if spec.fixed_intercept else tuple()) + spec.fixed
    random_names = ((INTERCEPT_NAME,) if spec.random_intercept else tuple()) + spec.random
    if len(fixed_names) == 0:
        raise DataValidationError("The fixed part is empty: keep the intercept or add a fixed covariate.")
    X = _assemble(frame, spec.fixed, spec.fixed_intercept, n)
    Z_rows = _assemble(frame, spec.random, spec.random_intercept, n)
    _check_full_column_rank(X, fixed_names, "fixed")
    _check_full_column_rank(Z_rows, random_names, "random")
    labels = frame[spec.group].astype(str).to_numpy()
    cluster_labels = canonical_cluster_order(labels)
    clusters = {label: np.flatnonzero(labels == label) for label in cluster_labels}
    issues = []
    small = [label for label in cluster_labels if clusters[label].size < len(random_names)]
    if small:
        issues.append(
            f"{len(small)} cluster(s) have fewer rows than the {len(random_names)} random effects per cluster "
            + f"(e.g. '{small[0]}'); their random effects are weakly identified."
        )
    if len(cluster_labels) == 1:
        issues.append("Only one cluster: clusterwise robust (sandwich) covariances cannot be computed.")
    for issue in issues:
        warnings.warn(issue)
    if n <= X.shape[1]:
        raise DataValidationError(f"Need more observations ({n}) than fixed effects ({X.shape[1]}).")
    return _freeze(
        DesignMatrices(
            y=frame[spec.response].to_numpy(dtype=np.float64).copy(),
            X=X,
            Z_rows=Z_rows,
            cluster_labels=tuple(cluster_labels),
            clusters=clusters,
            fixed_names=fixed_names,
            random_names=random_names,
            group_name=spec.group,
            warnings=tuple(issues),
        )
    )


def _assemble(frame, covariates: Tuple[str, ...], intercept: bool, n: int) -> np.ndarray:
    columns = [np.ones(n)] if intercept else []
    columns += [frame[name].to_numpy(dtype=np.float64) for name in covariates]
    return np.column_stack(columns) if columns else np.empty((n, 0))


def _check_full_column_rank(matrix: np.ndarray, names: Tuple[str, ...], part: str):
    if matrix.shape[1] == 0:
        return
    has_intercept = names[0] == INTERCEPT_NAME
    if has_intercept:
        constant = [names[i] for i in range(1, len(names)) if np.ptp(matrix[:, i]) == 0.0]
        if constant:
            raise DataValidationError(
                f"Constant {part} covariate(s) {', '.join(constant)} duplicate the intercept (rank deficiency)."
            )
    if np.linalg.matrix_rank(matrix) < matrix.shape[1]:
        raise DataValidationError(f"The {part} design ({', '.join(names)}) is rank deficient.")


def _freeze(design: DesignMatrices) -> DesignMatrices:
    for array in [design.y, design.X, design.Z_rows] + list(design.clusters.values()):
        array.setflags(write=False)
    return design
