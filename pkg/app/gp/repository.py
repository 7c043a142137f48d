import json
import logging
from pathlib import Path
from typing import List, Union

import numpy as np
from pydantic import BaseModel, Field

from app.exceptions import InvalidArgumentError
from app.gp.model import MODEL_VERSION, SparseGP
from app.kernel.model import Hyperparams
from app.kernel.service import kernel_service
from app.linalg import jitter_cholesky


logger = logging.getLogger(__name__)


class ModelRecord(BaseModel):
    """Serialized SparseGP; the K(Z,Z) factor is rebuilt on load."""

    version: str = MODEL_VERSION
    hyper: Hyperparams
    Z: List[List[float]]
    mu_Z: List[float]
    S_Z: List[List[float]]
    n_seen: int = Field(default=0, ge=0)
    was_streamed: bool = False
    log_evidence: float = 0.0


class ModelRepository:
    def to_record(self, gp: SparseGP) -> ModelRecord:
        return ModelRecord(
            hyper=gp.hyper,
            Z=gp.Z.tolist(),
            mu_Z=gp.mu_Z.tolist(),
            S_Z=gp.S_Z.tolist(),
            n_seen=gp.n_seen,
            was_streamed=gp.was_streamed,
            log_evidence=gp.log_evidence,
        )

    def from_record(self, record: ModelRecord) -> SparseGP:
        if record.version != MODEL_VERSION:
            raise InvalidArgumentError(
                f"unsupported model record version {record.version!r}, expected {MODEL_VERSION!r}"
            )
        Z = np.asarray(record.Z, dtype=float)
        L, jitter = jitter_cholesky(
            kernel_service.k_matrix(record.hyper, Z), record.hyper.signal_variance
        )
        try:
            return SparseGP(
                hyper=record.hyper,
                Z=Z,
                mu_Z=np.asarray(record.mu_Z, dtype=float),
                S_Z=np.asarray(record.S_Z, dtype=float),
                kzz_chol=L,
                jitter=jitter,
                n_seen=record.n_seen,
                was_streamed=record.was_streamed,
                log_evidence=record.log_evidence,
            )
        except ValueError as e:
            raise InvalidArgumentError(f"invalid model record: {e}")

    def save(self, gp: SparseGP, path: Union[str, Path]) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(self.to_record(gp).model_dump(), indent=2))
            return path
        except Exception as e:
            logger.error(f"Error saving model to {path}: {e}")
            raise e

    def load(self, path: Union[str, Path]) -> SparseGP:
        path = Path(path)
        try:
            record = ModelRecord.model_validate(json.loads(path.read_text()))
        except (OSError, ValueError) as e:
            logger.error(f"Error loading model from {path}: {e}")
            raise InvalidArgumentError(f"cannot read model record {path}: {e}")
        return self.from_record(record)


model_repository = ModelRepository()
