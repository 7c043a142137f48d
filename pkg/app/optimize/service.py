import logging
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import optimize as so

from app.config import settings
from app.exceptions import InvalidArgumentError
from app.optimize.model import OptimizeConfig, OptimizeResult


logging.basicConfig(level=settings.log_level)
logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], Tuple[float, np.ndarray]]


class _Diverged(Exception):
    pass


class _Tracker:
    """Keeps the best finite iterate seen by the line search."""

    def __init__(self, objective: Objective, x0: np.ndarray, value0: float):
        self.objective = objective
        self.best_x = x0.copy()
        self.best_value = value0
        self.previous_x = x0.copy()
        self.iterations = 0
        self.step_converged = False

    def __call__(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        value, grad = self.objective(x)
        value = float(value)
        grad = np.asarray(grad, dtype=float)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise _Diverged()
        if value < self.best_value:
            self.best_value = value
            self.best_x = np.array(x, copy=True)
        return value, grad


class OptimizerService:
    """Limited-memory quasi-Newton minimization of analytic-gradient objectives."""

    def minimize(
        self, objective: Objective, x0: np.ndarray, cfg: Optional[OptimizeConfig] = None
    ) -> OptimizeResult:
        cfg = cfg or OptimizeConfig()
        x0 = np.array(x0, dtype=float, copy=True)

        value0, grad0 = objective(x0)
        grad0 = np.asarray(grad0, dtype=float)
        if not np.isfinite(value0) or not np.all(np.isfinite(grad0)):
            raise InvalidArgumentError("objective is not finite at the starting point")

        if np.max(np.abs(grad0), initial=0.0) <= cfg.grad_tol:
            return OptimizeResult(
                argmin=x0, value=float(value0), iterations=0, converged=True, diverged=False
            )
        if cfg.max_iters == 0:
            return OptimizeResult(
                argmin=x0, value=float(value0), iterations=0, converged=False, diverged=False
            )

        tracker = _Tracker(objective, x0, float(value0))

        def callback(intermediate_result: so.OptimizeResult) -> None:
            tracker.iterations += 1
            x = intermediate_result.x
            step = np.linalg.norm(x - tracker.previous_x)
            tracker.previous_x = np.array(x, copy=True)
            if step <= cfg.step_tol * max(np.linalg.norm(x), 1.0):
                tracker.step_converged = True
                raise StopIteration

        try:
            result = so.minimize(
                tracker,
                x0,
                jac=True,
                method="L-BFGS-B",
                callback=callback,
                options={
                    "maxiter": cfg.max_iters,
                    "maxcor": cfg.memory,
                    "gtol": cfg.grad_tol,
                },
            )
        except _Diverged:
            logger.warning(
                f"Optimization diverged after {tracker.iterations} iterations; "
                f"returning best value {tracker.best_value:.6g}"
            )
            return OptimizeResult(
                argmin=tracker.best_x,
                value=tracker.best_value,
                iterations=tracker.iterations,
                converged=False,
                diverged=True,
            )

        converged = bool(result.success) or tracker.step_converged
        return OptimizeResult(
            argmin=tracker.best_x,
            value=tracker.best_value,
            iterations=max(int(result.nit), tracker.iterations),
            converged=converged,
            diverged=False,
        )


optimizer_service = OptimizerService()
