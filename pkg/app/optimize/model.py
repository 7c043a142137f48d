import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.config import settings


class OptimizeConfig(BaseModel):
    max_iters: int = Field(default_factory=lambda: settings.optimizer_max_iters, ge=0)
    grad_tol: float = Field(default_factory=lambda: settings.optimizer_grad_tol, gt=0.0)
    step_tol: float = Field(default_factory=lambda: settings.optimizer_step_tol, gt=0.0)
    memory: int = Field(default_factory=lambda: settings.optimizer_memory, ge=1)


class OptimizeResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    argmin: np.ndarray
    value: float
    iterations: int
    converged: bool
    diverged: bool

    @model_validator(mode="after")
    def _exclusive(self) -> "OptimizeResult":
        if self.converged and self.diverged:
            raise ValueError("an optimization cannot both converge and diverge")
        return self
