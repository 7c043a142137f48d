from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.ensemble.model import EnsembleConfig, PredictionMode, Strategy
from app.exceptions import InvalidArgumentError
from app.kernel.model import Hyperparams
from app.optimize.model import OptimizeConfig


class SplitMode(str, Enum):
    CHRONOLOGICAL = "chronological"
    SHUFFLE = "shuffle"


class RunConfig(BaseModel):
    """Everything one streaming training run needs besides the data."""

    batch_size: int = Field(default=100, ge=1)
    pseudo_points: int = Field(default=50, ge=1)
    epsilon: float = Field(default=2.0, ge=0.0)
    j_hat: int = Field(default=5, ge=1)
    seed: int = 0
    strategy: Strategy = Strategy.WGPR
    w_gen: float = Field(default=0.5, ge=0.0)
    prediction_mode: Optional[PredictionMode] = None
    kappa: int = Field(default=1, ge=1)
    normalize: bool = False
    train_fraction: float = Field(default=0.8, gt=0.0, le=1.0)
    test_fraction: Optional[float] = Field(default=None, ge=0.0, lt=1.0)
    split: SplitMode = SplitMode.CHRONOLOGICAL
    target: str = "y"
    max_iters: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _fractions(self) -> "RunConfig":
        if self.test_fraction is not None and self.train_fraction + self.test_fraction > 1.0 + 1e-12:
            raise ValueError("train_fraction + test_fraction must not exceed 1")
        return self

    @classmethod
    def from_yaml(
        cls, path: Optional[Union[str, Path]] = None, overrides: Optional[Dict[str, Any]] = None
    ) -> "RunConfig":
        """File values first, then every non-None override on top."""
        values: Dict[str, Any] = {}
        if path is not None:
            try:
                loaded = yaml.safe_load(Path(path).read_text()) or {}
            except (OSError, yaml.YAMLError) as e:
                raise InvalidArgumentError(f"cannot read run config {path}: {e}")
            if not isinstance(loaded, dict):
                raise InvalidArgumentError(f"run config {path} must be a mapping")
            values.update(loaded)
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        try:
            return cls.model_validate(values)
        except ValueError as e:
            raise InvalidArgumentError(f"invalid run config: {e}")

    def ensemble_config(self) -> EnsembleConfig:
        optimizer = OptimizeConfig()
        if self.max_iters is not None:
            optimizer = OptimizeConfig(max_iters=self.max_iters)
        return EnsembleConfig(
            M=self.pseudo_points,
            epsilon=self.epsilon,
            j_hat=self.j_hat,
            seed=self.seed,
            strategy=self.strategy,
            w_gen=self.w_gen,
            prediction_mode=self.prediction_mode,
            kappa=self.kappa,
            optimizer=optimizer,
        )


class StepSummary(BaseModel):
    batch_index: int
    decision: str
    chosen: Optional[int] = None
    n_models: int
    best_similarity: Optional[float] = None
    max_weight: Optional[float] = None
    n_unstable: int = 0


class Metrics(BaseModel):
    rmse: float
    smse: float
    mean_variance: float
    n_points: int


class RunResult(BaseModel):
    rmse: float
    smse: float
    mean_variance: float
    n_models: int
    train_seconds: float
    training_frequency: float
    rmse_curve: List[float]
    decisions: List[str]
    per_step_reports: List[StepSummary]
    strategy: str
    n_train: int
    n_test: int
    diverged: bool = False


class CompareRow(BaseModel):
    strategy: str
    threshold: float
    n_models: Optional[int] = None
    rmse: Optional[float] = None
    smse: Optional[float] = None
    training_frequency: Optional[float] = None
    diverged: bool = False
    error: Optional[str] = None


class SynthConfig(BaseModel):
    """Two GP regimes sampled on a regular grid over [low, high], split at split_point."""

    n_points: int = Field(default=2000, ge=2)
    low: float = 0.0
    high: float = 300.0
    split_point: float = 150.0
    left: Hyperparams = Field(
        default_factory=lambda: Hyperparams(sigma_f=1.0, lengthscales=[10.0], sigma_n=0.1)
    )
    right: Hyperparams = Field(
        default_factory=lambda: Hyperparams(sigma_f=1.0, lengthscales=[3.0], sigma_n=0.2)
    )
    add_noise: bool = True
    seed: int = 0

    @model_validator(mode="after")
    def _domain(self) -> "SynthConfig":
        if not self.low < self.high:
            raise ValueError("low must be below high")
        if self.left.dim != 1 or self.right.dim != 1:
            raise ValueError("synthetic regimes are one-dimensional")
        return self


class Predictions(BaseModel):
    """Per-point predictions in original units, as written to the predictions CSV."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    X: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    model_index: np.ndarray
    y_true: Optional[np.ndarray] = None
