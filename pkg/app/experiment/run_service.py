import logging
import time
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from sklearn.metrics import mean_squared_error

from app.config import settings
from app.ensemble.baseline_service import baseline_service
from app.ensemble.model import Decision, Ensemble, PredictionMode, StepReport, Strategy
from app.ensemble.service import ensemble_service
from app.exceptions import EnsembleStateError, InvalidArgumentError
from app.experiment.dataset_service import Dataset, dataset_service
from app.experiment.model import (
    CompareRow,
    Metrics,
    Predictions,
    RunConfig,
    RunResult,
    StepSummary,
)
from app.gp.model import Batch


logging.basicConfig(level=settings.log_level)
logger = logging.getLogger(__name__)


class TrainOutcome(NamedTuple):
    result: RunResult
    ensemble: Ensemble
    predictions: Predictions


class RunService:
    """Drivers behind the train, eval, compare and predict commands."""

    def step(self, ens: Ensemble, batch: Batch) -> StepReport:
        strategy = ens.config.strategy
        if strategy == Strategy.DISTANCE_BASELINE:
            return baseline_service.baseline_train_step(ens, batch)
        if strategy == Strategy.SINGLE_STREAM:
            return baseline_service.single_stream_step(ens, batch)
        return ensemble_service.train_step(ens, batch)

    def predict_original_units(
        self, ens: Ensemble, Xs: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Predict raw-unit inputs with the ensemble's recorded prediction mode."""
        Xs = np.asarray(Xs, dtype=float)
        if Xs.ndim == 1:
            Xs = Xs.reshape(-1, 1)
        if ens.is_empty:
            raise EnsembleStateError("cannot predict with an empty ensemble")
        if Xs.shape[1] != ens.dim:
            raise InvalidArgumentError(
                f"inputs have {Xs.shape[1]} features, ensemble expects {ens.dim}"
            )
        norm = ens.normalization
        Xm = norm.transform_x(Xs) if norm is not None else Xs

        mean, var, owners = ensemble_service.predict_batch(ens, Xm)
        if ens.config.resolved_prediction_mode != PredictionMode.NEAREST:
            mean, var = baseline_service.predict_weighted_batch(ens, Xm)

        if norm is not None:
            mean, var = norm.restore_mean(mean), norm.restore_variance(var)
        return mean, var, owners

    def metrics(self, y_true: np.ndarray, mean: np.ndarray, variance: np.ndarray) -> Metrics:
        """RMSE, MSE standardized by the target variance, and mean predictive variance."""
        y_true = np.asarray(y_true, dtype=float)
        if y_true.size == 0:
            raise InvalidArgumentError("cannot score an empty test set")
        mse = float(mean_squared_error(y_true, mean))
        target_var = float(np.var(y_true))
        return Metrics(
            rmse=float(np.sqrt(mse)),
            smse=mse / target_var if target_var > 0.0 else mse,
            mean_variance=float(np.mean(variance)),
            n_points=int(y_true.size),
        )

    def _summary(self, report: StepReport) -> StepSummary:
        totals = [s.w_total for s in report.similarities.values() if s.w_total is not None]
        return StepSummary(
            batch_index=report.batch_index,
            decision=report.decision.value,
            chosen=report.chosen,
            n_models=report.n_models,
            best_similarity=min(totals) if totals else None,
            max_weight=max(report.weights.values()) if report.weights else None,
            n_unstable=sum(1 for flag in report.stable_flags.values() if not flag),
        )

    def train(self, cfg: RunConfig, data: Dataset) -> TrainOutcome:
        train, test = dataset_service.split(data, cfg)
        batches = dataset_service.to_batches(train, cfg.batch_size)
        norm = dataset_service.normalization(batches[0]) if cfg.normalize else None
        if norm is not None:
            batches = [dataset_service.normalize(b, norm) for b in batches]

        def test_rmse(ens: Ensemble) -> float:
            mean, _, _ = self.predict_original_units(ens, test.X)
            return float(np.sqrt(mean_squared_error(test.y, mean)))

        elapsed = 0.0
        started = time.perf_counter()
        ens = ensemble_service.init_ensemble(batches[0], cfg.ensemble_config(), norm)
        elapsed += time.perf_counter() - started
        reports = [
            StepReport(batch_index=1, decision=Decision.INITIALIZED, chosen=0, n_models=1)
        ]
        curve = [test_rmse(ens)]

        for batch in batches[1:]:
            started = time.perf_counter()
            reports.append(self.step(ens, batch))
            elapsed += time.perf_counter() - started
            curve.append(test_rmse(ens))

        mean, var, owners = self.predict_original_units(ens, test.X)
        scores = self.metrics(test.y, mean, var)
        result = RunResult(
            rmse=scores.rmse,
            smse=scores.smse,
            mean_variance=scores.mean_variance,
            n_models=len(ens.models),
            train_seconds=elapsed,
            training_frequency=train.size / max(elapsed, 1e-12),
            rmse_curve=curve,
            decisions=[r.decision.value for r in reports],
            per_step_reports=[self._summary(r) for r in reports],
            strategy=cfg.strategy.value,
            n_train=train.size,
            n_test=test.size,
            diverged=any(r.decision == Decision.REJECTED for r in reports),
        )
        logger.info(
            f"Run finished: strategy={cfg.strategy.value}, {result.n_models} models, "
            f"RMSE {result.rmse:.4f}, {result.training_frequency:.1f} samples/s"
        )
        predictions = Predictions(
            X=test.X, mean=mean, variance=var, model_index=owners, y_true=test.y
        )
        return TrainOutcome(result=result, ensemble=ens, predictions=predictions)

    def evaluate(self, ens: Ensemble, data: Dataset) -> Tuple[Metrics, Predictions]:
        if ens.is_empty:
            raise InvalidArgumentError("cannot evaluate an empty ensemble")
        if data.dim != ens.dim:
            raise InvalidArgumentError(
                f"data has {data.dim} features, ensemble expects {ens.dim}"
            )
        mean, var, owners = self.predict_original_units(ens, data.X)
        scores = self.metrics(data.y, mean, var)
        return scores, Predictions(
            X=data.X, mean=mean, variance=var, model_index=owners, y_true=data.y
        )

    def predict(self, ens: Ensemble, X: np.ndarray) -> Predictions:
        mean, var, owners = self.predict_original_units(ens, X)
        return Predictions(X=np.asarray(X, dtype=float), mean=mean, variance=var, model_index=owners)

    def _cell(self, cfg: RunConfig, data: Dataset, threshold: float) -> CompareRow:
        try:
            outcome = self.train(cfg, data)
        except Exception as e:
            logger.warning(f"Comparison cell {cfg.strategy.value}@{threshold} failed: {e}")
            return CompareRow(
                strategy=cfg.strategy.value, threshold=threshold, diverged=True, error=str(e)
            )
        r = outcome.result
        return CompareRow(
            strategy=cfg.strategy.value,
            threshold=threshold,
            n_models=r.n_models,
            rmse=r.rmse,
            smse=r.smse,
            training_frequency=r.training_frequency,
            diverged=r.diverged,
        )

    def compare(
        self,
        base: RunConfig,
        data: Dataset,
        epsilons: Sequence[float],
        w_gens: Sequence[float],
        include_single_stream: bool = False,
    ) -> List[CompareRow]:
        """One training run per grid cell: WGPR over epsilons, the baseline over w_gen."""
        cells = [
            (base.model_copy(update={"strategy": Strategy.WGPR, "epsilon": eps}), eps)
            for eps in epsilons
        ]
        cells += [
            (base.model_copy(update={"strategy": Strategy.DISTANCE_BASELINE, "w_gen": w}), w)
            for w in w_gens
        ]
        if include_single_stream:
            cells.append((base.model_copy(update={"strategy": Strategy.SINGLE_STREAM}), 0.0))
        if not cells:
            raise InvalidArgumentError("the comparison grid is empty")

        rows = Parallel(n_jobs=settings.n_jobs, prefer="threads")(
            delayed(self._cell)(cfg, data, threshold) for cfg, threshold in cells
        )
        return list(rows)


run_service = RunService()
