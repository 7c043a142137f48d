from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator


# Elementwise log of (sigma_f, lengthscale_1..d, sigma_n); the optimizer's variable.
LogHyperparams = np.ndarray


class Hyperparams(BaseModel):
    """Squared-exponential kernel hyperparameters plus the Gaussian noise level."""

    model_config = ConfigDict(frozen=True)

    sigma_f: float
    lengthscales: List[float]
    sigma_n: float

    @field_validator("sigma_f", "sigma_n")
    @classmethod
    def _positive(cls, value: float) -> float:
        if not np.isfinite(value) or value <= 0.0:
            raise ValueError(f"must be finite and strictly positive, got {value}")
        return float(value)

    @field_validator("lengthscales")
    @classmethod
    def _positive_lengthscales(cls, value: List[float]) -> List[float]:
        if len(value) < 1:
            raise ValueError("at least one lengthscale is required")
        for item in value:
            if not np.isfinite(item) or item <= 0.0:
                raise ValueError(f"lengthscales must be finite and positive, got {item}")
        return [float(item) for item in value]

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    @property
    def lengthscale_array(self) -> np.ndarray:
        return np.asarray(self.lengthscales, dtype=float)

    @property
    def signal_variance(self) -> float:
        return self.sigma_f**2

    @property
    def noise_variance(self) -> float:
        return self.sigma_n**2

    def to_log(self) -> LogHyperparams:
        return np.log(np.concatenate(([self.sigma_f], self.lengthscales, [self.sigma_n])))

    @classmethod
    def from_log(cls, theta: LogHyperparams) -> "Hyperparams":
        values = np.exp(np.asarray(theta, dtype=float))
        return cls(
            sigma_f=values[0],
            lengthscales=values[1:-1].tolist(),
            sigma_n=values[-1],
        )

    @classmethod
    def from_data(cls, X: np.ndarray, y: np.ndarray) -> "Hyperparams":
        """Scale-aware defaults: std(y), per-dimension std(X), 0.1*std(y)."""
        y_std = float(np.std(y)) if y.size > 1 else 0.0
        y_std = y_std if y_std > 0.0 else 1.0
        x_std = np.std(X, axis=0) if X.shape[0] > 1 else np.zeros(X.shape[1])
        x_std = np.where(x_std > 0.0, x_std, 1.0)
        return cls(sigma_f=y_std, lengthscales=x_std.tolist(), sigma_n=0.1 * y_std)
