from dataclasses import dataclass
from typing import Optional, Tuple

from lmm_deriv.data.Dataset import ModelSpec
from lmm_deriv.estimation.FittedModel import LBFGSB, NELDER_MEAD, FitOptions
from lmm_deriv.exceptions import DataValidationError
from lmm_deriv.model.param_names import CLUSTERWISE_LEVEL, EXPECTED, INFORMATION_KINDS, METHODS, ML

FIT = "fit"
SCORES = "scores"
VCOV = "vcov"
SANDWICH = "sandwich"
SUBCOMMANDS = (FIT, SCORES, VCOV, SANDWICH)

JSON = "json"
CSV = "csv"
OUTPUT_FORMATS = (JSON, CSV)
OPTIMIZER_NAMES = (LBFGSB, NELDER_MEAD)


@dataclass(frozen=True)
class RunConfig:
    """Everything one command-line run needs. `output = None` writes to stdout."""

    subcommand: str
    data: str
    response: str
    fixed: Tuple[str, ...]
    random: Tuple[str, ...]
    group: str
    method: str = ML
    level: int = CLUSTERWISE_LEVEL
    information: str = EXPECTED
    full: bool = True
    output_format: str = JSON
    output: Optional[str] = None
    delimiter: str = ","
    max_iter: int = 500
    optimizer: str = LBFGSB
    fixed_intercept: bool = True
    random_intercept: bool = True
    bread: str = EXPECTED
    small_sample_correction: bool = False

    def __post_init__(self):
        object.__setattr__(self, "method", self.method.upper())
        if self.subcommand not in SUBCOMMANDS:
            raise DataValidationError(f"Unknown subcommand '{self.subcommand}'.")
        if self.method not in METHODS:
            raise DataValidationError(f"--method must be one of {', '.join(METHODS)}.")
        for flag, value in (("--information", self.information), ("--bread", self.bread)):
            if value not in INFORMATION_KINDS:
                raise DataValidationError(f"{flag} must be one of {', '.join(INFORMATION_KINDS)}.")
        if self.output_format not in OUTPUT_FORMATS:
            raise DataValidationError(f"--format must be one of {', '.join(OUTPUT_FORMATS)}.")
        if self.max_iter < 1:
            raise DataValidationError("--max-iter must be at least 1.")

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        spec = ModelSpec.from_strings(args.response, args.fixed, args.random, args.group)
        return cls(
            subcommand=args.subcommand,
            data=args.data,
            response=spec.response,
            fixed=spec.fixed,
            random=spec.random,
            group=spec.group,
            method=args.method,
            level=getattr(args, "level", CLUSTERWISE_LEVEL),
            information=getattr(args, "information", EXPECTED),
            full=getattr(args, "full", True),
            output_format=args.format,
            output=args.output,
            delimiter=args.delim,
            max_iter=args.max_iter,
            optimizer=args.optimizer,
            fixed_intercept=not args.no_fixed_intercept,
            random_intercept=not args.no_random_intercept,
            bread=getattr(args, "bread", EXPECTED),
            small_sample_correction=getattr(args, "small_sample_correction", False),
        )

    def model_spec(self) -> ModelSpec:
        return ModelSpec(
            response=self.response,
            fixed=self.fixed,
            random=self.random,
            group=self.group,
            fixed_intercept=self.fixed_intercept,
            random_intercept=self.random_intercept,
        )

    def fit_options(self) -> FitOptions:
        return FitOptions(max_iter=self.max_iter, optimizer=self.optimizer)
