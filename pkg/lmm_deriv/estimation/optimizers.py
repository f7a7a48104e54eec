import abc
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from lmm_deriv.estimation.FittedModel import LBFGSB, NELDER_MEAD

Bounds = List[Tuple[Optional[float], Optional[float]]]


@dataclass(frozen=True)
class OptimizationStep:
    x: np.ndarray
    fun: float
    iterations: int
    message: str


def projected_gradient_norm(x: np.ndarray, gradient: np.ndarray, bounds: Bounds) -> float:
    """Sup-norm of the gradient of a minimization problem after zeroing components pushing against an active lower
    bound."""
    projected = np.array(gradient, dtype=np.float64)
    for i, (lower, _) in enumerate(bounds):
        if lower is not None and x[i] <= lower and projected[i] > 0:
            projected[i] = 0.0
    return float(np.max(np.abs(projected))) if projected.size else 0.0


class Optimizer(metaclass=abc.ABCMeta):
    """Minimizes a function of the internal coordinates, recording the objective at every accepted iterate."""

    name: str
    restartable: bool = True

    def __init__(self, ftol: float, gtol: float):
        self.ftol = ftol
        self.gtol = gtol

    @abc.abstractmethod
    def run(
        self,
        fun_and_grad: Callable[[np.ndarray], Tuple[float, np.ndarray]],
        x0: np.ndarray,
        bounds: Bounds,
        max_iter: int,
        callback: Callable[[np.ndarray], None],
    ) -> OptimizationStep:
        pass


class LbfgsbOptimizer(Optimizer):
    name = LBFGSB

    def run(self, fun_and_grad, x0, bounds, max_iter, callback) -> OptimizationStep:
        result = minimize(
            fun_and_grad,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            callback=callback,
            options={"maxiter": max_iter, "ftol": self.ftol, "gtol": self.gtol, "maxls": 50},
        )
        return _step(result)


class NelderMeadOptimizer(Optimizer):
    """Derivative-free fallback; the gradient is only used for the convergence check."""

    name = NELDER_MEAD
    restartable = False

    def run(self, fun_and_grad, x0, bounds, max_iter, callback) -> OptimizationStep:
        f0 = fun_and_grad(x0)[0]
        result = minimize(
            lambda x: fun_and_grad(x)[0],
            x0,
            method="Nelder-Mead",
            bounds=bounds,
            callback=callback,
            options={"maxiter": max_iter, "xatol": 1e-8, "fatol": self.ftol * max(1.0, abs(f0)), "adaptive": True},
        )
        return _step(result)


OPTIMIZERS = {LBFGSB: LbfgsbOptimizer, NELDER_MEAD: NelderMeadOptimizer}


def get_optimizer(name: str, ftol: float, gtol: float) -> Optimizer:
    return OPTIMIZERS[name](ftol=ftol, gtol=gtol)


def _step(result) -> OptimizationStep:
    return OptimizationStep(x=result.x, fun=float(result.fun), iterations=int(result.nit), message=str(result.message))
