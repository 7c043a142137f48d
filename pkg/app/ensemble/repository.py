import json
import logging
from pathlib import Path
from typing import List, Optional, Union

from pydantic import BaseModel, Field

from app.config import settings
from app.ensemble.model import ENSEMBLE_VERSION, Ensemble, EnsembleConfig, Normalization
from app.exceptions import EnsembleNotFoundError, InvalidArgumentError
from app.gp.repository import ModelRecord, model_repository


logger = logging.getLogger(__name__)

SUFFIX = ".json"


class EnsembleRecord(BaseModel):
    """Header plus one wgpr-model-v1 record per local model, in creation order."""

    version: str = ENSEMBLE_VERSION
    config: EnsembleConfig
    batch_count: int = Field(ge=0)
    divergence_mean_cap: float
    normalization: Optional[Normalization] = None
    models: List[ModelRecord]


class EnsembleSummary(BaseModel):
    name: str
    n_models: int
    batch_count: int
    dim: int
    strategy: str
    epsilon: Optional[float]


class EnsembleRepository:
    def __init__(self, root: Union[str, Path, None] = None):
        self.root = Path(root if root is not None else settings.model_dir)

    def to_record(self, ens: Ensemble) -> EnsembleRecord:
        return EnsembleRecord(
            config=ens.config,
            batch_count=ens.batch_count,
            divergence_mean_cap=ens.divergence_mean_cap,
            normalization=ens.normalization,
            models=[model_repository.to_record(gp) for gp in ens.models],
        )

    def from_record(self, record: EnsembleRecord) -> Ensemble:
        if record.version != ENSEMBLE_VERSION:
            raise InvalidArgumentError(
                f"unsupported ensemble version {record.version!r}, expected {ENSEMBLE_VERSION!r}"
            )
        return Ensemble(
            models=[model_repository.from_record(m) for m in record.models],
            config=record.config,
            batch_count=record.batch_count,
            divergence_mean_cap=record.divergence_mean_cap,
            normalization=record.normalization,
        )

    def save(self, ens: Ensemble, path: Union[str, Path]) -> Path:
        # epsilon may be +inf; the stdlib encoder writes it as Infinity and reads it back
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(self.to_record(ens).model_dump(mode="python"), indent=2))
            logger.info(f"Saved ensemble with {len(ens.models)} models to {path}")
            return path
        except Exception as e:
            logger.error(f"Error saving ensemble to {path}: {e}")
            raise e

    def load(self, path: Union[str, Path]) -> Ensemble:
        path = Path(path)
        if not path.is_file():
            raise EnsembleNotFoundError(f"no saved ensemble at {path}")
        try:
            record = EnsembleRecord.model_validate(json.loads(path.read_text()))
        except (OSError, ValueError) as e:
            logger.error(f"Error loading ensemble from {path}: {e}")
            raise InvalidArgumentError(f"cannot read ensemble {path}: {e}")
        return self.from_record(record)

    def path_for(self, name: str) -> Path:
        if not name or "/" in name or "\\" in name or name.startswith("."):
            raise EnsembleNotFoundError(f"invalid ensemble name {name!r}")
        return self.root / f"{name}{SUFFIX}"

    def get_by_name(self, name: str) -> Ensemble:
        return self.load(self.path_for(name))

    def get_all(self) -> List[EnsembleSummary]:
        if not self.root.is_dir():
            return []
        summaries = []
        for path in sorted(self.root.glob(f"*{SUFFIX}")):
            try:
                ens = self.load(path)
            except InvalidArgumentError as e:
                logger.warning(f"Skipping unreadable ensemble {path.name}: {e}")
                continue
            summaries.append(self.summarize(path.stem, ens))
        return summaries

    def summarize(self, name: str, ens: Ensemble) -> EnsembleSummary:
        epsilon = ens.epsilon if ens.epsilon != float("inf") else None
        return EnsembleSummary(
            name=name,
            n_models=len(ens.models),
            batch_count=ens.batch_count,
            dim=ens.dim if not ens.is_empty else 0,
            strategy=ens.config.strategy.value,
            epsilon=epsilon,
        )
