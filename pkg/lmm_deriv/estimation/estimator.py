from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from lmm_deriv.data.DesignMatrices import DesignMatrices
from lmm_deriv.estimation.FittedModel import NOT_OPTIMIZED, FitOptions, FittedModel, boundary_flags_for
from lmm_deriv.estimation.optimizers import Bounds, get_optimizer, projected_gradient_norm
from lmm_deriv.exceptions import DataValidationError, LmmDerivError
from lmm_deriv.model.ParamVector import (
    ParamVector,
    ThetaMap,
    design_parameter_names,
    fill_symmetric,
    internal_jacobian,
    sigma2_to_theta,
    theta_to_sigma2,
)
from lmm_deriv.model.likelihoods import LogLikelihood, get_likelihood
from lmm_deriv.model.param_names import ML

MAX_HALVINGS = 30


class _InternalObjective:
    """Negative log-likelihood in the optimizer coordinates omega = (theta, log residual variance), beta profiled."""

    def __init__(self, likelihood: LogLikelihood):
        self.likelihood = likelihood
        self._cache = (None, None)

    def __call__(self, omega: np.ndarray) -> Tuple[float, np.ndarray]:
        key, cached = self._cache
        if key is not None and np.array_equal(key, omega):
            return cached
        sigma2 = to_sigma2(omega)
        value, gradient_sigma2, _ = self.likelihood.evaluate(sigma2)
        result = (-value, -internal_jacobian(omega).T @ gradient_sigma2)
        self._cache = (np.array(omega, copy=True), result)
        return result


def to_sigma2(omega: np.ndarray) -> np.ndarray:
    return theta_to_sigma2(np.asarray(omega[:-1]), float(np.exp(omega[-1])))


def to_omega(sigma2: np.ndarray) -> np.ndarray:
    theta, resid_var = sigma2_to_theta(sigma2)
    return np.r_[theta.theta, np.log(resid_var)]


def internal_bounds(q_c: int) -> Bounds:
    diagonal = set(ThetaMap.identity(q_c).diagonal_indices)
    return [(0.0, None) if k in diagonal else (None, None) for k in range(q_c * (q_c + 1) // 2)] + [(None, None)]


def starting_values(design: DesignMatrices) -> np.ndarray:
    """theta = identity factor and the residual variance of an OLS fit."""
    beta = np.linalg.lstsq(design.X, design.y, rcond=None)[0]
    resid_var = float(np.var(design.y - design.X @ beta, ddof=1))
    if resid_var <= 0:
        raise DataValidationError("The response is fitted exactly by the fixed effects; nothing left to estimate.")
    return np.r_[ThetaMap.identity(design.q_c).theta, np.log(resid_var)]


def _is_positive_definite_block(sigma2: np.ndarray, q_c: int) -> bool:
    if sigma2[-1] <= 0:
        return False
    try:
        np.linalg.cholesky(fill_symmetric(sigma2[:-1], q_c))
    except np.linalg.LinAlgError:
        return False
    return True


def _polish_direction(likelihood: LogLikelihood, terms, gradient: np.ndarray) -> Optional[np.ndarray]:
    """Newton direction on the profiled observed information when it is positive definite, Fisher scoring
    otherwise."""
    observed = -likelihood.hessian_sigma2(terms)
    if likelihood.method == ML:
        cross = likelihood.hessian_beta_sigma2(terms)
        observed -= cross.T @ terms.M @ cross
    for information in (observed, likelihood.expected_information_sigma2(terms)):
        try:
            return cho_solve(cho_factor(information, lower=True), gradient)
        except LinAlgError:
            continue
    return None


def _polish(
    likelihood: LogLikelihood, sigma2: np.ndarray, max_steps: int, history: List[float]
) -> Tuple[np.ndarray, int]:
    """Second-order steps in sigma2 coordinates, halved until the objective does not decrease and G_c stays
    positive definite. Returns the final sigma2 and the number of accepted steps."""
    q_c = likelihood.design.q_c
    accepted = 0
    for _ in range(max_steps):
        value, gradient, terms = likelihood.evaluate(sigma2)
        direction = _polish_direction(likelihood, terms, gradient)
        if direction is None:
            break
        step = 1.0
        candidate = None
        for _ in range(MAX_HALVINGS):
            trial = sigma2 + step * direction
            if _is_positive_definite_block(trial, q_c):
                try:
                    trial_value = likelihood.calculate(trial)
                except LmmDerivError:
                    trial_value = -np.inf
                if trial_value >= value:
                    candidate = (trial, trial_value)
                    break
            step /= 2.0
        if candidate is None:
            break
        change = np.max(np.abs(candidate[0] - sigma2))
        sigma2 = candidate[0]
        history.append(candidate[1])
        accepted += 1
        if change <= 1e-14 * np.max(np.abs(sigma2)):
            break
    return sigma2, accepted


def _gradient_converged(objective: _InternalObjective, omega: np.ndarray, bounds: Bounds, gtol: float) -> bool:
    """Projected internal gradient relative to the size of the objective, which carries the float noise."""
    value, gradient = objective(omega)
    return projected_gradient_norm(omega, gradient, bounds) <= gtol * max(1.0, abs(value))


def _report_gradient_norm(likelihood: LogLikelihood, params: ParamVector, flags: Tuple[bool, ...]) -> float:
    gradient = likelihood.gradient(likelihood.terms(params))
    exempt = np.r_[np.zeros(params.p, dtype=bool), np.array(flags, dtype=bool)]
    free = np.abs(gradient[~exempt])
    return float(free.max()) if free.size else 0.0


def fit(design: DesignMatrices, method: str = ML, options: FitOptions = None) -> FittedModel:
    options = options or FitOptions()
    if design.n <= design.p:
        raise DataValidationError(f"Need more observations ({design.n}) than fixed effects ({design.p}).")
    likelihood = get_likelihood(method, design)
    objective = _InternalObjective(likelihood)
    optimizer = get_optimizer(options.optimizer, ftol=options.ftol, gtol=options.gtol)
    bounds = internal_bounds(design.q_c)
    omega = starting_values(design)
    history = [-objective(omega)[0]]

    def record(x: np.ndarray, *args):
        history.append(-objective(x)[0])

    iterations, message = 0, ""
    value = objective(omega)[0]
    while iterations < options.max_iter:
        step = optimizer.run(objective, omega, bounds, options.max_iter - iterations, record)
        iterations += step.iterations
        improvement = value - step.fun
        omega, message, value = step.x, step.message, step.fun
        if _gradient_converged(objective, omega, bounds, options.gtol) or step.iterations == 0:
            break
        if not optimizer.restartable or improvement <= options.ftol * max(1.0, abs(value)):
            break
    sigma2 = to_sigma2(omega)
    flags = boundary_flags_for(sigma2, design.q_c, options.boundary_tol)
    budget = min(options.polish_steps, options.max_iter - iterations)
    if budget > 0 and not any(flags):
        sigma2, polished = _polish(likelihood, sigma2, budget, history)
        iterations += polished
        omega = to_omega(sigma2)
    converged = _gradient_converged(objective, omega, bounds, options.gtol)
    if not converged:
        message = f"Stopped after {iterations} iterations without meeting the gradient tolerance. {message}"
    return _assemble(likelihood, sigma2, options, converged, iterations, optimizer.name, message, tuple(history))


def _assemble(
    likelihood: LogLikelihood,
    sigma2: np.ndarray,
    options: FitOptions,
    converged: bool,
    iterations: int,
    optimizer: str,
    message: str,
    history: Tuple[float, ...],
) -> FittedModel:
    design = likelihood.design
    terms = likelihood.terms(sigma2)
    params = ParamVector(beta=terms.beta, sigma2=sigma2, names=design_parameter_names(design))
    flags = boundary_flags_for(sigma2, design.q_c, options.boundary_tol)
    return FittedModel(
        params=params,
        objective=likelihood.value(terms),
        method=likelihood.method,
        design=design,
        converged=converged,
        grad_norm=_report_gradient_norm(likelihood, params, flags),
        iterations=iterations,
        boundary_flags=flags,
        optimizer=optimizer,
        message=message.strip(),
        history=history,
    )


def fitted_at(design: DesignMatrices, params: ParamVector, method: str = ML, options: FitOptions = None) -> FittedModel:
    """An unoptimized model at the given parameters (evaluation point for checks and simulations)."""
    options = options or FitOptions()
    likelihood = get_likelihood(method, design)
    flags = boundary_flags_for(params.sigma2, design.q_c, options.boundary_tol)
    return FittedModel(
        params=params,
        objective=likelihood.calculate(params.sigma2, params.beta),
        method=likelihood.method,
        design=design,
        converged=False,
        grad_norm=_report_gradient_norm(likelihood, params, flags),
        iterations=0,
        boundary_flags=flags,
        optimizer=NOT_OPTIMIZED,
        message="Evaluated at supplied parameters; not optimized.",
    )
