import json
from typing import IO, Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd

from lmm_deriv.estimation.FittedModel import FittedModel, converge_report

SIGNIFICANT_DIGITS = 15
FLOAT_FORMAT = f"%.{SIGNIFICANT_DIGITS}g"


def rounded(value: float) -> float:
    """The float closest to `value` printed with 15 significant digits."""
    return float(FLOAT_FORMAT % value)


def _rounded_array(values: np.ndarray) -> list:
    return [_rounded_array(row) if np.ndim(row) else rounded(row) for row in values]


def params_report(model: FittedModel) -> list:
    return [{"name": name, "estimate": rounded(value)} for name, value in zip(model.names, model.params.values)]


def diagnostics_report(model: FittedModel) -> Dict[str, Any]:
    diagnostics = converge_report(model).to_dict()
    diagnostics["objective"] = rounded(diagnostics["objective"])
    diagnostics["grad_norm"] = rounded(diagnostics["grad_norm"])
    diagnostics.update(
        {
            "n_observations": model.design.n,
            "n_clusters": model.design.J,
            "aic": rounded(model.aic),
            "bic": rounded(model.bic),
            "warnings": list(model.design.warnings),
        }
    )
    return diagnostics


def matrix_report(values: np.ndarray, labels: Sequence[str], rows: Optional[Sequence] = None) -> Dict[str, Any]:
    report: Dict[str, Any] = {"labels": list(labels)}
    if rows is not None:
        report["rows"] = [str(row) for row in rows]
    report["values"] = _rounded_array(np.asarray(values))
    return report


def write_json(report: Dict[str, Any], stream: IO):
    json.dump(report, stream, indent=2)
    stream.write("\n")


def write_csv(frame: pd.DataFrame, stream: IO):
    frame.to_csv(stream, float_format=FLOAT_FORMAT)


def params_frame(model: FittedModel) -> pd.DataFrame:
    return pd.DataFrame({"estimate": model.params.values}, index=pd.Index(model.names, name="name"))


def matrix_frame(values: np.ndarray, labels: Sequence[str], rows: Optional[Sequence] = None) -> pd.DataFrame:
    index = pd.Index([str(row) for row in rows] if rows is not None else list(labels), name="")
    return pd.DataFrame(values, index=index, columns=list(labels))
