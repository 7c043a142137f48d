from typing import List

from fastapi import APIRouter, HTTPException
from pydantic import BaseModel, Field

from app.config import settings
from app.ensemble.model import EnsembleConfig
from app.ensemble.repository import EnsembleRepository, EnsembleSummary
from app.exceptions import EnsembleNotFoundError, EnsembleStateError, InvalidArgumentError
from app.experiment.run_service import run_service
from app.kernel.model import Hyperparams

router = APIRouter(prefix="/ensembles", tags=["ensembles"])


class LocalModelDto(BaseModel):
    index: int
    num_pseudo: int
    n_seen: int
    was_streamed: bool
    center: List[float]
    hyper: Hyperparams


class EnsembleDetailDto(EnsembleSummary):
    config: EnsembleConfig
    models: List[LocalModelDto]


class PredictRequest(BaseModel):
    inputs: List[List[float]] = Field(..., min_length=1)


class PredictResponse(BaseModel):
    mean: List[float]
    variance: List[float]
    model_index: List[int]


def _repository() -> EnsembleRepository:
    return EnsembleRepository(settings.model_dir)


@router.get("", response_model=List[EnsembleSummary])
def list_ensembles():
    """List saved ensembles"""

    try:
        return _repository().get_all()
    except HTTPException:
        raise
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))


@router.get("/{name}", response_model=EnsembleDetailDto)
def get_ensemble(name: str):
    """Header and per-model summary of one saved ensemble"""

    try:
        repository = _repository()
        ens = repository.get_by_name(name)
        summary = repository.summarize(name, ens)
        return EnsembleDetailDto(
            **summary.model_dump(),
            config=ens.config,
            models=[
                LocalModelDto(
                    index=j,
                    num_pseudo=gp.num_pseudo,
                    n_seen=gp.n_seen,
                    was_streamed=gp.was_streamed,
                    center=gp.center.tolist(),
                    hyper=gp.hyper,
                )
                for j, gp in enumerate(ens.models)
            ],
        )
    except HTTPException:
        raise
    except EnsembleNotFoundError as e:
        raise HTTPException(status_code=404, detail=str(e))
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))


@router.post("/{name}/predict", response_model=PredictResponse)
def predict(name: str, payload: PredictRequest):
    """Predict with the saved ensemble, in the units it was trained on"""

    try:
        ens = _repository().get_by_name(name)
        mean, variance, owners = run_service.predict_original_units(ens, payload.inputs)
        return PredictResponse(
            mean=mean.tolist(), variance=variance.tolist(), model_index=owners.tolist()
        )
    except HTTPException:
        raise
    except EnsembleNotFoundError as e:
        raise HTTPException(status_code=404, detail=str(e))
    except (InvalidArgumentError, EnsembleStateError, ValueError) as e:
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))
