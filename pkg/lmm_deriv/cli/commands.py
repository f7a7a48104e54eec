import argparse
import logging
import sys
from contextlib import contextmanager
from typing import Any, Callable, Dict, List, Optional, Tuple

import pandas as pd

from lmm_deriv.cli.RunConfig import CSV, FIT, OPTIMIZER_NAMES, OUTPUT_FORMATS, SANDWICH, SCORES, VCOV, RunConfig
from lmm_deriv.cli.reports import (
    diagnostics_report,
    matrix_frame,
    matrix_report,
    params_frame,
    params_report,
    rounded,
    write_csv,
    write_json,
)
from lmm_deriv.data.Dataset import load_dataset
from lmm_deriv.data.DesignMatrices import build_design
from lmm_deriv.derivatives.information import vcov_full
from lmm_deriv.derivatives.scores import LEVELS, score_matrix
from lmm_deriv.estimation.FittedModel import FittedModel, converge_report
from lmm_deriv.estimation.estimator import fit
from lmm_deriv.exceptions import LmmDerivError
from lmm_deriv.model.param_names import CLUSTERWISE_LEVEL, EXPECTED, INFORMATION_KINDS, METHODS, ML
from lmm_deriv.robust.sandwich import sandwich

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NOT_CONVERGED = 2

logger = logging.getLogger(__name__)

Report = Tuple[Dict[str, Any], pd.DataFrame]


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with the validation status; 2 is reserved for non-convergence."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", required=True, help="Delimited text file with a header row")
    common.add_argument("--response", required=True)
    common.add_argument("--fixed", default="", help="Comma-separated fixed-effect covariates")
    common.add_argument("--random", default="", help="Comma-separated random-slope covariates")
    common.add_argument("--group", required=True, help="Grouping (cluster) column")
    common.add_argument("--method", type=str.upper, choices=METHODS, default=ML)
    common.add_argument("--format", choices=OUTPUT_FORMATS, default="json")
    common.add_argument("--output", default=None, help="Output file; stdout when omitted")
    common.add_argument("--delim", default=",")
    common.add_argument("--max-iter", type=int, default=500)
    common.add_argument("--optimizer", choices=OPTIMIZER_NAMES, default=OPTIMIZER_NAMES[0])
    common.add_argument("--no-fixed-intercept", action="store_true")
    common.add_argument("--no-random-intercept", action="store_true")
    common.add_argument("--verbose", action="store_true")

    parser = _ArgumentParser(prog="lmm_deriv", description="Linear mixed model fits, scores and covariances.")
    subcommands = parser.add_subparsers(dest="subcommand", required=True)
    subcommands.add_parser(FIT, parents=[common], help="Estimates and convergence diagnostics")
    scores = subcommands.add_parser(SCORES, parents=[common], help="Casewise or clusterwise scores")
    scores.add_argument("--level", type=int, choices=LEVELS, default=CLUSTERWISE_LEVEL)
    vcov = subcommands.add_parser(VCOV, parents=[common], help="Inverse information matrix")
    vcov.add_argument("--information", choices=INFORMATION_KINDS, default=EXPECTED)
    vcov.add_argument("--full", dest="full", action="store_true", default=True)
    vcov.add_argument("--no-full", dest="full", action="store_false")
    robust = subcommands.add_parser(SANDWICH, parents=[common], help="Clusterwise sandwich covariance")
    robust.add_argument("--bread", choices=INFORMATION_KINDS, default=EXPECTED)
    robust.add_argument("--small-sample-correction", action="store_true")
    return parser


def _fit_report(config: RunConfig, model: FittedModel) -> Report:
    report = {"params": params_report(model), "diagnostics": diagnostics_report(model)}
    return report, params_frame(model)


def _scores_report(config: RunConfig, model: FittedModel) -> Report:
    scores = score_matrix(model, config.level)
    report = {
        "params": params_report(model),
        "level": scores.level,
        "matrix": matrix_report(scores.values, scores.column_labels, scores.row_labels),
        "diagnostics": diagnostics_report(model),
    }
    return report, matrix_frame(scores.values, scores.column_labels, scores.row_labels)


def _vcov_report(config: RunConfig, model: FittedModel) -> Report:
    covariance = vcov_full(model, full=config.full, information=config.information)
    report = {
        "params": params_report(model),
        "information": covariance.kind,
        "matrix": matrix_report(covariance.values, covariance.labels),
        "diagnostics": diagnostics_report(model),
    }
    return report, matrix_frame(covariance.values, covariance.labels)


def _sandwich_report(config: RunConfig, model: FittedModel) -> Report:
    result = sandwich(model, bread_kind=config.bread, correction=config.small_sample_correction)
    diagnostics = diagnostics_report(model)
    diagnostics["warnings"] += list(result.warnings)
    report = {
        "params": params_report(model),
        "bread": result.bread_kind,
        "small_sample_correction": result.small_sample_correction,
        "matrix": matrix_report(result.vcov, result.labels),
        "robust_se": [rounded(value) for value in result.robust_se],
        "diagnostics": diagnostics,
    }
    frame = matrix_frame(result.vcov, result.labels)
    frame["robust_se"] = result.robust_se
    return report, frame


@contextmanager
def _output_stream(path: Optional[str]):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as stream:
            yield stream


def _run(config: RunConfig, build_report: Callable[[RunConfig, FittedModel], Report]) -> int:
    spec = config.model_spec()
    dataset = load_dataset(config.data, spec, delimiter=config.delimiter)
    logger.info(f"Loaded {dataset.n} rows in {dataset.n_groups} groups from {config.data}")
    design = build_design(dataset, spec)
    model = fit(design, config.method, config.fit_options())
    logger.info(str(converge_report(model)))
    report, frame = build_report(config, model)
    with _output_stream(config.output) as stream:
        if config.output_format == CSV:
            write_csv(frame, stream)
        else:
            write_json(report, stream)
    logger.info(f"Wrote {config.subcommand} report to {config.output or 'stdout'}")
    if not model.converged:
        logger.warning(f"Exiting with status {EXIT_NOT_CONVERGED}: the fit did not converge.")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_fit(config: RunConfig) -> int:
    return _run(config, _fit_report)


def cmd_scores(config: RunConfig) -> int:
    return _run(config, _scores_report)


def cmd_vcov(config: RunConfig) -> int:
    return _run(config, _vcov_report)


def cmd_sandwich(config: RunConfig) -> int:
    return _run(config, _sandwich_report)


COMMANDS = {FIT: cmd_fit, SCORES: cmd_scores, VCOV: cmd_vcov, SANDWICH: cmd_sandwich}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    logging.captureWarnings(True)
    try:
        config = RunConfig.from_args(args)
        return COMMANDS[config.subcommand](config)
    except (LmmDerivError, ValueError, OSError) as error:
        logger.error(str(error))
        return EXIT_INVALID
    finally:
        logging.captureWarnings(False)
