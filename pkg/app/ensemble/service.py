import logging
from typing import List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.spatial.distance import cdist

from app.config import settings
from app.ensemble.model import (
    Decision,
    Ensemble,
    EnsembleConfig,
    Normalization,
    Similarity,
    StepReport,
)
from app.exceptions import EnsembleStateError, InvalidArgumentError, NumericalError
from app.gp.model import Batch, SparseGP, StreamUpdateConfig
from app.gp.sparse_service import sparse_gp_service
from app.gp.stream_service import stream_service
from app.kernel.model import Hyperparams
from app.metric.service import metric_service


logging.basicConfig(level=settings.log_level)
logger = logging.getLogger(__name__)


class EnsembleService:
    """Wasserstein-splitting training loop and nearest-pseudo-input prediction."""

    def divergence_cap(self, cfg: EnsembleConfig, first_batch: Batch) -> float:
        if cfg.divergence_mean_cap is not None:
            return cfg.divergence_mean_cap
        std = float(np.std(first_batch.y))
        return 1e6 * std if std > 0.0 else 1e6

    def stream_config(self, ens: Ensemble) -> StreamUpdateConfig:
        return StreamUpdateConfig(
            M_new=ens.config.M_new,
            optimizer=ens.config.optimizer,
            divergence_mean_cap=ens.divergence_mean_cap,
            seed=ens.config.seed + ens.batch_count,
        )

    def check_batch(self, ens: Ensemble, batch: Batch) -> None:
        if ens.is_empty:
            raise EnsembleStateError("the ensemble holds no model; call init_ensemble first")
        if batch.is_empty:
            raise InvalidArgumentError("cannot train on an empty batch")
        if batch.dim != ens.dim:
            raise InvalidArgumentError(
                f"batch has dimension {batch.dim}, ensemble has {ens.dim}"
            )

    def init_ensemble(
        self,
        first_batch: Batch,
        cfg: Optional[EnsembleConfig] = None,
        normalization: Optional[Normalization] = None,
    ) -> Ensemble:
        cfg = cfg or EnsembleConfig()
        if first_batch.is_empty:
            raise InvalidArgumentError("cannot initialize an ensemble from an empty batch")
        try:
            model = sparse_gp_service.fit_vfe(
                first_batch, cfg.M, cfg=cfg.optimizer, seed=cfg.seed
            )
        except Exception as e:
            logger.error(f"Error initializing ensemble: {e}")
            raise e
        logger.info(
            f"Initialized ensemble with one model on {first_batch.size} points, "
            f"{model.num_pseudo} pseudo-inputs"
        )
        return Ensemble(
            models=[model],
            config=cfg,
            batch_count=1,
            divergence_mean_cap=self.divergence_cap(cfg, first_batch),
            normalization=normalization,
        )

    def center_distances(self, ens: Ensemble, center: np.ndarray) -> np.ndarray:
        return cdist(center.reshape(1, -1), ens.centers(), "sqeuclidean")[0]

    def prune_candidates(self, ens: Ensemble, new_batch: Batch) -> List[int]:
        """Indices of the j_hat models whose centres are nearest the batch centre."""
        if ens.is_empty:
            raise EnsembleStateError("the ensemble holds no model")
        d2 = self.center_distances(ens, new_batch.center)
        order = np.argsort(d2, kind="stable")
        return [int(j) for j in order[: ens.j_hat]]

    def fresh_fit(self, ens: Ensemble, batch: Batch) -> SparseGP:
        """New local model on the batch, warm-started from the nearest-centre model."""
        nearest = int(np.argmin(self.center_distances(ens, batch.center)))
        init: Hyperparams = ens.models[nearest].hyper
        return sparse_gp_service.fit_vfe(
            batch,
            ens.config.M,
            init=init,
            cfg=ens.config.optimizer,
            seed=ens.config.seed + ens.batch_count,
        )

    def _score_candidate(
        self,
        model: SparseGP,
        batch: Batch,
        fresh: SparseGP,
        cfg: StreamUpdateConfig,
    ) -> Tuple[Similarity, Optional[SparseGP]]:
        try:
            outcome = stream_service.stream_update(model, batch, cfg)
            if not outcome.stable:
                return Similarity(), None
            w_old = metric_service.similarity_old(model, outcome.updated)
            w_new = metric_service.similarity_new(fresh, outcome.updated, batch.X)
        except (NumericalError, ValueError) as e:
            logger.warning(f"Candidate scoring failed, treating as unstable: {e}")
            return Similarity(), None
        total = metric_service.similarity_total(w_old, w_new)
        return Similarity(w_old=w_old, w_new=w_new, w_total=total), outcome.updated

    def score_candidates(
        self, ens: Ensemble, candidates: List[int], batch: Batch, fresh: SparseGP
    ) -> List[Tuple[Similarity, Optional[SparseGP]]]:
        """Stream-update each candidate on a frozen copy and score it against the fresh fit."""
        cfg = self.stream_config(ens)
        return Parallel(n_jobs=settings.n_jobs, prefer="threads")(
            delayed(self._score_candidate)(ens.models[j], batch, fresh, cfg)
            for j in candidates
        )

    def train_step(self, ens: Ensemble, new_batch: Batch) -> StepReport:
        self.check_batch(ens, new_batch)
        try:
            fresh = self.fresh_fit(ens, new_batch)
        except Exception as e:
            logger.error(f"Error fitting fresh model for batch {ens.batch_count + 1}: {e}")
            raise e

        candidates = self.prune_candidates(ens, new_batch)
        scored = self.score_candidates(ens, candidates, new_batch, fresh)
        similarities = {j: s for j, (s, _) in zip(candidates, scored)}

        # argmin over total similarity, ties to the lower model index
        best = min(range(len(candidates)), key=lambda i: (scored[i][0].total, candidates[i]))
        j_star = candidates[best]
        w_star, updated = scored[best]

        if w_star.stable and w_star.total <= ens.epsilon:
            ens.models[j_star] = updated
            decision, chosen = Decision.UPDATED, j_star
        else:
            ens.models.append(fresh)
            decision, chosen = Decision.SPLIT, len(ens.models) - 1
        ens.batch_count += 1

        logger.info(
            f"Batch {ens.batch_count}: {decision.value} model {chosen} "
            f"(best w={w_star.total:.4g}, epsilon={ens.epsilon:.4g}, {len(ens.models)} models)"
        )
        return StepReport(
            batch_index=ens.batch_count,
            decision=decision,
            chosen=chosen,
            candidates=candidates,
            similarities=similarities,
            stable_flags={j: s.stable for j, s in similarities.items()},
            n_models=len(ens.models),
        )

    def nearest_pseudo_input_owner(self, ens: Ensemble, Xs: np.ndarray) -> np.ndarray:
        """Model index owning the globally nearest pseudo-input for each row of Xs."""
        Z_all = np.vstack([gp.Z for gp in ens.models])
        owners = np.concatenate(
            [np.full(gp.num_pseudo, j) for j, gp in enumerate(ens.models)]
        )
        d2 = cdist(Xs, Z_all, "sqeuclidean")
        return owners[np.argmin(d2, axis=1)]

    def as_rows(self, ens: Ensemble, Xs: np.ndarray) -> np.ndarray:
        if ens.is_empty:
            raise EnsembleStateError("cannot predict with an empty ensemble")
        Xs = np.asarray(Xs, dtype=float)
        if Xs.ndim == 1:
            Xs = Xs.reshape(-1, ens.dim) if ens.dim > 1 else Xs.reshape(-1, 1)
        if Xs.ndim != 2 or Xs.shape[1] != ens.dim:
            raise InvalidArgumentError(
                f"inputs have shape {Xs.shape}, ensemble dimension is {ens.dim}"
            )
        if not np.all(np.isfinite(Xs)):
            raise InvalidArgumentError("prediction inputs contain non-finite values")
        return Xs

    def predict_batch(
        self, ens: Ensemble, Xs: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        Xs = self.as_rows(ens, Xs)
        owners = self.nearest_pseudo_input_owner(ens, Xs)
        mean = np.empty(Xs.shape[0])
        var = np.empty(Xs.shape[0])
        for j in np.unique(owners):
            rows = owners == j
            mean[rows], var[rows] = sparse_gp_service.predict_sparse(
                ens.models[j], Xs[rows], full_cov=False
            )
        return mean, var, owners.astype(int)

    def predict(self, ens: Ensemble, x_s: np.ndarray) -> Tuple[float, float, int]:
        x_s = np.asarray(x_s, dtype=float).reshape(1, -1)
        mean, var, owners = self.predict_batch(ens, x_s)
        return float(mean[0]), float(var[0]), int(owners[0])


ensemble_service = EnsembleService()
