"""Limited-memory BFGS minimizer used to solve each stage problem

Two-loop recursion over at most `memory` curvature pairs, with a backtracking
line search enforcing the Armijo sufficient-decrease condition.
"""

import logging
from collections import deque
from enum import Enum
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field

from gbmap.config import (
    ARMIJO_C1,
    CURVATURE_EPS,
    DEFAULT_MAXITER,
    GRADIENT_TOLERANCE,
    LBFGS_MEMORY,
    LINE_SEARCH_MAX_STEPS,
)
from gbmap.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

ValueAndGradient = Callable[[np.ndarray], tuple[float, np.ndarray]]

_BACKTRACK = 0.5


class OptimizerConfig(BaseModel):
    """LBFGS settings"""

    model_config = ConfigDict(frozen=True)

    max_iterations: int = Field(DEFAULT_MAXITER, ge=1, description="Outer iterations (maxiter)")
    memory: int = Field(LBFGS_MEMORY, ge=1, description="Stored curvature pairs")
    gradient_tolerance: float = Field(GRADIENT_TOLERANCE, gt=0)
    line_search_max_steps: int = Field(LINE_SEARCH_MAX_STEPS, ge=1)
    initial_step: float = Field(1.0, gt=0)


class Termination(str, Enum):
    """Reason the optimizer stopped"""

    GRADIENT_TOLERANCE = "gradient_tolerance"
    MAX_ITERATIONS = "max_iterations"
    LINE_SEARCH_FAILURE = "line_search_failure"


class OptimizeResult(BaseModel):
    """Best point seen by the optimizer"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    solution: np.ndarray
    objective_value: float
    iterations_used: int
    converged: bool
    termination: Termination


def _two_loop(gradient: np.ndarray, pairs: deque) -> np.ndarray:
    """Apply the inverse-Hessian approximation to the gradient"""
    q = gradient.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        alpha = rho * float(s @ q)
        q -= alpha * y
        alphas.append(alpha)

    s, y, _ = pairs[-1]
    q *= float(s @ y) / float(y @ y)

    for (s, y, rho), alpha in zip(pairs, reversed(alphas)):
        beta = rho * float(y @ q)
        q += (alpha - beta) * s
    return q


def _evaluate(fun: ValueAndGradient, x: np.ndarray) -> tuple[float, np.ndarray]:
    value, gradient = fun(x)
    return float(value), np.asarray(gradient, dtype=float)


def minimize(
    fun: ValueAndGradient, x0: ArrayLike, config: OptimizerConfig = OptimizerConfig()
) -> OptimizeResult:
    """Minimize a smooth function with LBFGS.

    Args:
        fun: Returns (value, gradient) at a point
        x0: Starting point
        config: Optimizer settings

    Returns:
        OptimizeResult holding the best point seen, never worse than x0

    Raises:
        InvalidArgumentError: If the objective or its gradient is not finite at x0
    """
    x = np.array(x0, dtype=float)
    value, gradient = _evaluate(fun, x)
    if not (np.isfinite(value) and np.all(np.isfinite(gradient))):
        raise InvalidArgumentError("objective and gradient must be finite at the starting point")

    pairs: deque = deque(maxlen=config.memory)
    termination = Termination.MAX_ITERATIONS
    iterations = 0

    while iterations < config.max_iterations:
        if np.max(np.abs(gradient)) < config.gradient_tolerance:
            termination = Termination.GRADIENT_TOLERANCE
            break

        if pairs:
            direction = -_two_loop(gradient, pairs)
            step = config.initial_step
        else:
            direction = -gradient
            step = config.initial_step * min(1.0, 1.0 / float(np.linalg.norm(gradient)))
        slope = float(gradient @ direction)
        if not slope < 0:
            # not a descent direction; restart from steepest descent
            pairs.clear()
            direction = -gradient
            slope = float(gradient @ direction)
            step = config.initial_step * min(1.0, 1.0 / float(np.linalg.norm(gradient)))

        accepted = False
        for _ in range(config.line_search_max_steps):
            candidate = x + step * direction
            new_value, new_gradient = _evaluate(fun, candidate)
            if (
                np.isfinite(new_value)
                and np.all(np.isfinite(new_gradient))
                and new_value <= value + ARMIJO_C1 * step * slope
                and new_value < value
            ):
                accepted = True
                break
            step *= _BACKTRACK

        iterations += 1
        if not accepted:
            if pairs:
                # retry the iteration along the steepest descent direction
                pairs.clear()
                continue
            termination = Termination.LINE_SEARCH_FAILURE
            break

        s = candidate - x
        y = new_gradient - gradient
        curvature = float(s @ y)
        if curvature > CURVATURE_EPS:
            pairs.append((s, y, 1.0 / curvature))

        x, value, gradient = candidate, new_value, new_gradient
    else:
        if np.max(np.abs(gradient)) < config.gradient_tolerance:
            termination = Termination.GRADIENT_TOLERANCE

    logger.debug(
        "Optimizer finished",
        extra={"termination": termination.value, "iterations": iterations, "value": value},
    )
    return OptimizeResult(
        solution=x,
        objective_value=value,
        iterations_used=iterations,
        converged=termination is Termination.GRADIENT_TOLERANCE,
        termination=termination,
    )
