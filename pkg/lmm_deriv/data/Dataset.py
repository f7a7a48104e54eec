import os
from dataclasses import dataclass
from typing import IO, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from lmm_deriv.exceptions import DataValidationError

SLEEPSTUDY_CSV = os.path.join(os.path.dirname(os.path.abspath(__file__)), "sleepstudy.csv")

MISSING_TOKENS = frozenset(["", "NA", "N/A", "NaN", "nan", "NULL", "null", "."])


@dataclass(frozen=True)
class ModelSpec:
    """Column roles of a linear mixed model with a single grouping factor.

    The fixed and random parts both carry an implied intercept, placed first, unless it is suppressed with
    `fixed_intercept=False` or `random_intercept=False`. A covariate may appear in both parts (e.g. a random slope).
    """

    response: str
    fixed: Tuple[str, ...]
    random: Tuple[str, ...]
    group: str
    fixed_intercept: bool = True
    random_intercept: bool = True

    def __post_init__(self):
        object.__setattr__(self, "fixed", tuple(self.fixed))
        object.__setattr__(self, "random", tuple(self.random))
        self._validate()

    @classmethod
    def from_strings(
        cls,
        response: str,
        fixed: Union[str, Sequence[str]],
        random: Union[str, Sequence[str]],
        group: str,
        fixed_intercept: bool = True,
        random_intercept: bool = True,
    ) -> "ModelSpec":
        return cls(
            response=response,
            fixed=_split_names(fixed),
            random=_split_names(random),
            group=group,
            fixed_intercept=fixed_intercept,
            random_intercept=random_intercept,
        )

    @property
    def numeric_columns(self) -> Tuple[str, ...]:
        columns = [self.response]
        for name in self.fixed + self.random:
            if name not in columns:
                columns.append(name)
        return tuple(columns)

    @property
    def used_columns(self) -> Tuple[str, ...]:
        return self.numeric_columns + (self.group,)

    def _validate(self):
        if not self.random_intercept and len(self.random) == 0:
            raise DataValidationError("The model needs at least one random effect (a random intercept or a slope).")
        for role, names in (("fixed", self.fixed), ("random", self.random)):
            duplicates = sorted({name for name in names if names.count(name) > 1})
            if duplicates:
                raise DataValidationError(f"Duplicate {role} covariates: {', '.join(duplicates)}.")
        if self.response == self.group:
            raise DataValidationError(f"Response and group refer to the same column '{self.group}'.")
        for name in self.fixed + self.random:
            if name in (self.response, self.group):
                raise DataValidationError(f"Covariate '{name}' is also used as the response or the group column.")


@dataclass(frozen=True)
class Dataset:
    frame: pd.DataFrame
    spec: ModelSpec

    @property
    def n(self) -> int:
        return len(self.frame)

    @property
    def group_labels(self) -> np.ndarray:
        return self.frame[self.spec.group].to_numpy()

    @property
    def n_groups(self) -> int:
        return int(self.frame[self.spec.group].nunique())


def load_dataset(source: Union[str, os.PathLike, IO], spec: ModelSpec, delimiter: str = ",") -> Dataset:
    """Reads delimited text with a header row. Numeric columns are parsed as float64 and the group column is kept as
    exact strings (no whitespace stripping, no missing-value tokens); row order is preserved."""
    try:
        raw = pd.read_csv(source, sep=delimiter, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DataValidationError("empty dataset: the input has no header row.")
    except FileNotFoundError:
        raise DataValidationError(f"Input file '{source}' does not exist.")
    raw.columns = [str(column).strip() for column in raw.columns]
    missing_columns = [column for column in spec.used_columns if column not in raw.columns]
    if missing_columns:
        raise DataValidationError(f"Column(s) not found in the input: {', '.join(missing_columns)}.")
    if len(raw) == 0:
        raise DataValidationError("empty dataset: the input has a header row but no records.")
    frame = pd.DataFrame(index=pd.RangeIndex(len(raw)))
    for column in spec.numeric_columns:
        frame[column] = _parse_numeric_column(raw[column], column)
    groups = raw[spec.group].astype(str)
    _check_no_empty(groups, spec.group)
    frame[spec.group] = groups.to_numpy()
    return Dataset(frame=frame, spec=spec)


def load_sleepstudy() -> Tuple[Dataset, ModelSpec]:
    spec = ModelSpec(response="Reaction", fixed=("Days",), random=("Days",), group="Subject")
    return load_dataset(SLEEPSTUDY_CSV, spec), spec


def _parse_numeric_column(values: pd.Series, column: str) -> np.ndarray:
    stripped = values.str.strip()
    _check_no_missing(stripped, column)
    parsed = pd.to_numeric(stripped, errors="coerce").to_numpy(dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(parsed))
    if bad.size > 0:
        row = int(bad[0])
        raise DataValidationError(
            f"Non-numeric value '{values.iloc[row]}' in column '{column}' at data row {row + 1} (line {row + 2})."
        )
    return parsed


def _check_no_missing(values: pd.Series, column: str):
    is_missing = values.str.strip().isin(MISSING_TOKENS).to_numpy()
    if is_missing.any():
        row = int(np.flatnonzero(is_missing)[0])
        raise DataValidationError(
            f"Missing value in column '{column}' at data row {row + 1} (line {row + 2}); missing data is not imputed."
        )


def _check_no_empty(values: pd.Series, column: str):
    """Group labels are taken verbatim; only an empty cell counts as missing."""
    is_empty = (values == "").to_numpy()
    if is_empty.any():
        row = int(np.flatnonzero(is_empty)[0])
        raise DataValidationError(f"Empty group label in column '{column}' at data row {row + 1} (line {row + 2}).")


def _split_names(names: Union[str, Sequence[str], None]) -> Tuple[str, ...]:
    if names is None:
        return tuple()
    if isinstance(names, str):
        names = names.split(",")
    return tuple(name.strip() for name in names if name.strip())
