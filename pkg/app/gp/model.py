from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.kernel.model import Hyperparams
from app.optimize.model import OptimizeConfig


MODEL_VERSION = "wgpr-model-v1"


class Batch(BaseModel):
    """N x d inputs and N targets."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    X: np.ndarray
    y: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        X = np.asarray(data.get("X"), dtype=float)
        y = np.asarray(data.get("y"), dtype=float).ravel()
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[1] < 1:
            raise ValueError(f"X must be an (N, d) matrix, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("batch contains non-finite values")
        return {**data, "X": X, "y": y}

    @property
    def size(self) -> int:
        return int(self.X.shape[0])

    @property
    def dim(self) -> int:
        return int(self.X.shape[1])

    @property
    def is_empty(self) -> bool:
        return self.size == 0

    @property
    def center(self) -> np.ndarray:
        return self.X.mean(axis=0)

    def concat(self, other: "Batch") -> "Batch":
        return Batch(X=np.vstack([self.X, other.X]), y=np.concatenate([self.y, other.y]))


class ExactGP(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    hyper: Hyperparams
    X: np.ndarray
    y: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float


class SparseGP(BaseModel):
    """A VFE sparse GP summarised by its pseudo-inputs and variational moments."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    hyper: Hyperparams
    Z: np.ndarray
    mu_Z: np.ndarray
    S_Z: np.ndarray
    kzz_chol: np.ndarray
    jitter: float
    n_seen: int = 0
    was_streamed: bool = False
    # collapsed bound on every batch absorbed so far; 0 for a model that has seen no data
    log_evidence: float = 0.0

    @model_validator(mode="after")
    def _shapes(self) -> "SparseGP":
        M = self.Z.shape[0]
        if M < 1:
            raise ValueError("a sparse GP needs at least one pseudo-input")
        if self.Z.ndim != 2 or self.Z.shape[1] != self.hyper.dim:
            raise ValueError(f"Z has shape {self.Z.shape}, kernel dimension is {self.hyper.dim}")
        if self.mu_Z.shape != (M,) or self.S_Z.shape != (M, M) or self.kzz_chol.shape != (M, M):
            raise ValueError("variational moments do not match the number of pseudo-inputs")
        return self

    @property
    def num_pseudo(self) -> int:
        return int(self.Z.shape[0])

    @property
    def dim(self) -> int:
        return int(self.Z.shape[1])

    @property
    def center(self) -> np.ndarray:
        return self.Z.mean(axis=0)


class StreamUpdateConfig(BaseModel):
    M_new: Optional[int] = Field(default=None, ge=1)
    # start from Z_a alone instead of swapping in new-batch inputs when M_new <= M
    reuse_old_inputs: bool = False
    optimizer: OptimizeConfig = Field(default_factory=OptimizeConfig)
    divergence_mean_cap: float = Field(default=1e6, gt=0.0)
    seed: int = 0


class StreamDiagnostics(BaseModel):
    bound: Optional[float] = None
    iterations: int = 0
    max_abs_mean: Optional[float] = None
    reason: Optional[str] = None


class StreamUpdateOutcome(BaseModel):
    updated: Optional[SparseGP] = None
    stable: bool
    diagnostics: StreamDiagnostics = Field(default_factory=StreamDiagnostics)

    @model_validator(mode="after")
    def _consistent(self) -> "StreamUpdateOutcome":
        if (self.updated is not None) != self.stable:
            raise ValueError("an updated model is present exactly when the update is stable")
        return self


class OldSummary(BaseModel):
    """What a streaming update keeps from the previous posterior q_old(a) = N(mu_a, S_a).

    precision = S_a^-1 - K'_aa^-1 and shift = S_a^-1 mu_a act as a Gaussian
    pseudo-likelihood on the old pseudo-inputs; constant collects the terms of the
    online bound that do not depend on the new hyperparameters or pseudo-inputs,
    including the old model's log-evidence.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    Z_a: np.ndarray
    precision: np.ndarray
    shift: np.ndarray
    constant: float
