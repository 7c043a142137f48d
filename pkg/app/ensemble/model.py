from enum import Enum
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.gp.model import SparseGP
from app.optimize.model import OptimizeConfig


ENSEMBLE_VERSION = "wgpr-ensemble-v1"


class Strategy(str, Enum):
    WGPR = "wgpr"
    DISTANCE_BASELINE = "distance-baseline"
    SINGLE_STREAM = "single-stream"


class PredictionMode(str, Enum):
    NEAREST = "nearest"
    ALL_ACTIVATED = "all-activated"
    TOP_KAPPA = "top-kappa"


class Decision(str, Enum):
    INITIALIZED = "initialized"
    UPDATED = "updated"
    SPLIT = "split"
    REJECTED = "rejected"


class EnsembleConfig(BaseModel):
    M: int = Field(default=50, ge=1)
    epsilon: float = Field(default=1.0, ge=0.0)
    j_hat: int = Field(default=5, ge=1)
    seed: int = 0
    strategy: Strategy = Strategy.WGPR
    w_gen: float = Field(default=0.5, ge=0.0)
    prediction_mode: Optional[PredictionMode] = None
    kappa: int = Field(default=1, ge=1)
    M_new: Optional[int] = Field(default=None, ge=1)
    divergence_mean_cap: Optional[float] = Field(default=None, gt=0.0)
    optimizer: OptimizeConfig = Field(default_factory=OptimizeConfig)

    @field_validator("epsilon")
    @classmethod
    def _not_nan(cls, value: float) -> float:
        if np.isnan(value):
            raise ValueError("epsilon must be a number")
        return value

    @property
    def resolved_prediction_mode(self) -> PredictionMode:
        """Distance baseline averages by default, the other strategies pick the nearest model."""
        if self.prediction_mode is not None:
            return self.prediction_mode
        if self.strategy == Strategy.DISTANCE_BASELINE:
            return PredictionMode.ALL_ACTIVATED
        return PredictionMode.NEAREST


class Normalization(BaseModel):
    """z-score statistics of the first training batch."""

    x_mean: List[float]
    x_std: List[float]
    y_mean: float
    y_std: float

    @classmethod
    def from_data(cls, X: np.ndarray, y: np.ndarray) -> "Normalization":
        x_std = np.std(X, axis=0)
        y_std = float(np.std(y))
        return cls(
            x_mean=np.mean(X, axis=0).tolist(),
            x_std=np.where(x_std > 0.0, x_std, 1.0).tolist(),
            y_mean=float(np.mean(y)),
            y_std=y_std if y_std > 0.0 else 1.0,
        )

    def transform_x(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - np.asarray(self.x_mean)) / np.asarray(self.x_std)

    def transform_y(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_std

    def restore_mean(self, mean: np.ndarray) -> np.ndarray:
        return np.asarray(mean) * self.y_std + self.y_mean

    def restore_variance(self, var: np.ndarray) -> np.ndarray:
        return np.asarray(var) * self.y_std**2


class Similarity(BaseModel):
    """Squared-W2 scores for one candidate; None marks an unstable update (+inf)."""

    w_old: Optional[float] = None
    w_new: Optional[float] = None
    w_total: Optional[float] = None

    @property
    def stable(self) -> bool:
        return self.w_total is not None

    @property
    def total(self) -> float:
        return float("inf") if self.w_total is None else self.w_total


class StepReport(BaseModel):
    batch_index: int
    decision: Decision
    chosen: Optional[int] = None
    candidates: List[int] = Field(default_factory=list)
    similarities: Dict[int, Similarity] = Field(default_factory=dict)
    stable_flags: Dict[int, bool] = Field(default_factory=dict)
    weights: Dict[int, float] = Field(default_factory=dict)
    n_models: int = 0


class Ensemble(BaseModel):
    """Ordered collection of local sparse GPs; index = creation order."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    models: List[SparseGP] = Field(default_factory=list)
    config: EnsembleConfig = Field(default_factory=EnsembleConfig)
    batch_count: int = 0
    divergence_mean_cap: float = 1e6
    normalization: Optional[Normalization] = None

    @property
    def epsilon(self) -> float:
        return self.config.epsilon

    @property
    def j_hat(self) -> int:
        return self.config.j_hat

    @property
    def is_empty(self) -> bool:
        return len(self.models) == 0

    @property
    def dim(self) -> int:
        return self.models[0].dim

    def centers(self) -> np.ndarray:
        return np.vstack([gp.center for gp in self.models])
