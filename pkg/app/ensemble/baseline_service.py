import logging
from typing import List, Optional, Tuple

import numpy as np

from app.config import settings
from app.ensemble.model import Decision, Ensemble, PredictionMode, StepReport
from app.ensemble.service import ensemble_service
from app.exceptions import NumericalError
from app.gp.model import Batch
from app.gp.sparse_service import sparse_gp_service
from app.gp.stream_service import stream_service
from app.kernel.service import kernel_service


logging.basicConfig(level=settings.log_level)
logger = logging.getLogger(__name__)


class BaselineService:
    """Comparison strategies: kernel-distance splitting and a single streamed model."""

    def kernel_weights(self, ens: Ensemble, x: np.ndarray) -> np.ndarray:
        """w_j(x) = sf_j^2 exp(-0.5 (x - c_j)^T L_j^-1 (x - c_j)) with each model's own kernel."""
        return np.array([kernel_service.k_eval(gp.hyper, x, gp.center) for gp in ens.models])

    def baseline_train_step(
        self, ens: Ensemble, new_batch: Batch, w_gen: Optional[float] = None
    ) -> StepReport:
        ensemble_service.check_batch(ens, new_batch)
        w_gen = ens.config.w_gen if w_gen is None else w_gen

        weights = self.kernel_weights(ens, new_batch.center)
        nearest = int(np.argmax(weights))
        stable_flags = {}
        updated = None
        if weights[nearest] >= w_gen:
            try:
                outcome = stream_service.stream_update(
                    ens.models[nearest], new_batch, ensemble_service.stream_config(ens)
                )
            except (NumericalError, ValueError) as e:
                logger.warning(f"Baseline update of model {nearest} failed: {e}")
                outcome = None
            stable_flags[nearest] = outcome is not None and outcome.stable
            if stable_flags[nearest]:
                updated = outcome.updated

        if updated is not None:
            ens.models[nearest] = updated
            decision, chosen = Decision.UPDATED, nearest
        else:
            try:
                fresh = ensemble_service.fresh_fit(ens, new_batch)
            except Exception as e:
                logger.error(f"Error fitting fresh model for batch {ens.batch_count + 1}: {e}")
                raise e
            ens.models.append(fresh)
            decision, chosen = Decision.SPLIT, len(ens.models) - 1
        ens.batch_count += 1

        logger.info(
            f"Batch {ens.batch_count}: {decision.value} model {chosen} "
            f"(max weight {weights[nearest]:.4g}, w_gen={w_gen:.4g}, {len(ens.models)} models)"
        )
        return StepReport(
            batch_index=ens.batch_count,
            decision=decision,
            chosen=chosen,
            candidates=[nearest],
            stable_flags=stable_flags,
            weights={j: float(w) for j, w in enumerate(weights)},
            n_models=len(ens.models),
        )

    def single_stream_step(self, ens: Ensemble, new_batch: Batch) -> StepReport:
        """Stream every batch into model 0; an unstable update leaves it untouched."""
        ensemble_service.check_batch(ens, new_batch)
        try:
            outcome = stream_service.stream_update(
                ens.models[0], new_batch, ensemble_service.stream_config(ens)
            )
            stable = outcome.stable
        except (NumericalError, ValueError) as e:
            logger.warning(f"Single-stream update failed: {e}")
            outcome, stable = None, False

        if stable:
            ens.models[0] = outcome.updated
            decision = Decision.UPDATED
        else:
            decision = Decision.REJECTED
        ens.batch_count += 1
        logger.info(f"Batch {ens.batch_count}: single-stream update {decision.value}")
        return StepReport(
            batch_index=ens.batch_count,
            decision=decision,
            chosen=0,
            candidates=[0],
            stable_flags={0: stable},
            n_models=len(ens.models),
        )

    def _selected(
        self, ens: Ensemble, x: np.ndarray, weights: np.ndarray, mode: PredictionMode, kappa: int
    ) -> List[int]:
        d2 = ensemble_service.center_distances(ens, x)
        if mode == PredictionMode.TOP_KAPPA:
            chosen = [int(j) for j in np.argsort(d2, kind="stable")[:kappa]]
        else:
            chosen = [int(j) for j in np.flatnonzero(weights > ens.config.w_gen)]
        if not chosen or float(np.sum(weights[chosen])) <= 0.0:
            chosen = [int(np.argmin(d2))]
        return chosen

    def baseline_predict_weighted(
        self,
        ens: Ensemble,
        x_s: np.ndarray,
        mode: Optional[PredictionMode] = None,
        kappa: Optional[int] = None,
    ) -> Tuple[float, float]:
        """Kernel-weighted average of the selected models' predictions at x_s."""
        x_s = ensemble_service.as_rows(ens, np.asarray(x_s, dtype=float).reshape(1, -1))[0]
        mode = mode or ens.config.resolved_prediction_mode
        if mode == PredictionMode.NEAREST:
            mode = PredictionMode.ALL_ACTIVATED
        kappa = kappa or ens.config.kappa

        weights = self.kernel_weights(ens, x_s)
        chosen = self._selected(ens, x_s, weights, mode, kappa)
        if len(chosen) == 1:
            mean, var = sparse_gp_service.predict_sparse(
                ens.models[chosen[0]], x_s.reshape(1, -1), full_cov=False
            )
            return float(mean[0]), float(var[0])

        w = weights[chosen] / np.sum(weights[chosen])
        means = np.empty(len(chosen))
        variances = np.empty(len(chosen))
        for i, j in enumerate(chosen):
            m, v = sparse_gp_service.predict_sparse(
                ens.models[j], x_s.reshape(1, -1), full_cov=False
            )
            means[i], variances[i] = m[0], v[0]
        return float(w @ means), float(w @ variances)

    def predict_weighted_batch(
        self,
        ens: Ensemble,
        Xs: np.ndarray,
        mode: Optional[PredictionMode] = None,
        kappa: Optional[int] = None,
    ) -> Tuple[np.ndarray, np.ndarray]:
        Xs = ensemble_service.as_rows(ens, Xs)
        rows = [self.baseline_predict_weighted(ens, x, mode, kappa) for x in Xs]
        if not rows:
            return np.empty(0), np.empty(0)
        mean, var = zip(*rows)
        return np.asarray(mean), np.asarray(var)


baseline_service = BaselineService()
