import logging
from typing import Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist, pdist

from app.config import settings
from app.exceptions import InvalidArgumentError, NumericalError
from app.gp.model import (
    Batch,
    OldSummary,
    SparseGP,
    StreamDiagnostics,
    StreamUpdateConfig,
    StreamUpdateOutcome,
)
from app.gp.sparse_service import sparse_gp_service
from app.kernel.model import Hyperparams
from app.linalg import cho_solve, chol_inverse, chol_logdet, is_psd, robust_cholesky, symmetrize
from app.optimize.service import optimizer_service


logging.basicConfig(level=settings.log_level)
logger = logging.getLogger(__name__)


class StreamService:
    """Online sparse-GP updates that treat old pseudo-point moments as past data."""

    def summarize(self, old: SparseGP) -> OldSummary:
        """Turn q_old(a) into the pseudo-likelihood terms of the online bound."""
        S_chol = robust_cholesky(symmetrize(old.S_Z))
        S_inv = chol_inverse(S_chol)
        K_inv = chol_inverse(old.kzz_chol)
        shift = cho_solve(S_chol, old.mu_Z)
        constant = (
            old.log_evidence
            - 0.5 * float(old.mu_Z @ shift)
            + 0.5 * chol_logdet(old.kzz_chol)
            - 0.5 * chol_logdet(S_chol)
        )
        return OldSummary(
            Z_a=old.Z,
            precision=symmetrize(S_inv - K_inv),
            shift=shift,
            constant=constant,
        )

    def _check(self, old: SparseGP, new_data: Batch) -> None:
        if new_data.is_empty:
            raise InvalidArgumentError("cannot stream an empty batch")
        if new_data.dim != old.dim:
            raise InvalidArgumentError(
                f"batch has dimension {new_data.dim}, model has {old.dim}"
            )

    def ovfe_objective(
        self, old: SparseGP, Z_b: np.ndarray, h_new: Hyperparams, new_data: Batch
    ) -> Tuple[float, np.ndarray]:
        """Online bound and its gradient wrt (log h_new, Z_b.ravel())."""
        self._check(old, new_data)
        if h_new.dim != old.dim:
            raise InvalidArgumentError(
                f"hyperparameters have dimension {h_new.dim}, model has {old.dim}"
            )
        summary = self.summarize(old)
        return sparse_gp_service.collapsed_bound(h_new, np.atleast_2d(Z_b), new_data, summary)

    def new_input_share(self, old: SparseGP, new_data: Batch, M_new: int) -> int:
        """Pseudo-inputs to seed inside the new batch, in proportion to its share of the data."""
        share = new_data.size / (old.n_seen + new_data.size)
        return int(np.clip(round(M_new * share), 1, M_new))

    def initial_pseudo_inputs(
        self,
        old: SparseGP,
        new_data: Batch,
        M_new: int,
        seed: int,
        reuse_old_inputs: bool = False,
    ) -> np.ndarray:
        """Starting Z_b for the online bound.

        With M_new > M this is Z_a topped up with a seeded draw of new inputs.
        Otherwise a seeded subset of Z_a is kept and the rest of the budget goes to
        distinct new inputs, in proportion to the new batch's share of the data seen.
        ``reuse_old_inputs`` keeps the first M_new rows of Z_a instead.
        """
        rng = np.random.default_rng(seed)
        M_a = old.num_pseudo
        if M_new > M_a:
            extra = min(M_new - M_a, new_data.size)
            idx = np.sort(rng.choice(new_data.size, size=extra, replace=False))
            return np.vstack([old.Z, new_data.X[idx]])
        if reuse_old_inputs:
            return np.array(old.Z[:M_new], copy=True)

        order = rng.permutation(M_a)
        n_keep = M_new - self.new_input_share(old, new_data, M_new)
        kept = old.Z[np.sort(order[:n_keep])]

        fresh = np.unique(new_data.X, axis=0)
        if n_keep > 0:
            fresh = fresh[cdist(fresh, kept).min(axis=1) > 0.0]
        n_new = min(M_new - n_keep, fresh.shape[0])
        picked = fresh[np.sort(rng.choice(fresh.shape[0], size=n_new, replace=False))]

        # too few distinct new inputs: fill the budget back up from Z_a
        spare = old.Z[np.sort(order[n_keep:])]
        if n_new > 0:
            spare = spare[cdist(spare, picked).min(axis=1) > 0.0]
        return np.vstack([kept, spare[: M_new - n_keep - n_new], picked])

    def _unstable(
        self, reason: str, iterations: int = 0, bound: Optional[float] = None
    ) -> StreamUpdateOutcome:
        logger.warning(f"Stream update rejected as unstable: {reason}")
        return StreamUpdateOutcome(
            updated=None,
            stable=False,
            diagnostics=StreamDiagnostics(bound=bound, iterations=iterations, reason=reason),
        )

    def stream_update(
        self, old: SparseGP, new_data: Batch, cfg: Optional[StreamUpdateConfig] = None
    ) -> StreamUpdateOutcome:
        cfg = cfg or StreamUpdateConfig()
        self._check(old, new_data)

        try:
            summary = self.summarize(old)
        except NumericalError as e:
            return self._unstable(f"old posterior could not be factorized: {e}")

        M_new = cfg.M_new or old.num_pseudo
        Z0 = self.initial_pseudo_inputs(
            old, new_data, M_new, cfg.seed, reuse_old_inputs=cfg.reuse_old_inputs
        )
        M_b, d = Z0.shape
        n_theta = d + 2

        def objective(x: np.ndarray) -> Tuple[float, np.ndarray]:
            try:
                h = Hyperparams.from_log(x[:n_theta])
                value, grad = sparse_gp_service.collapsed_bound(
                    h, x[n_theta:].reshape(M_b, d), new_data, summary
                )
            except (NumericalError, ValueError, FloatingPointError, np.linalg.LinAlgError):
                return np.inf, np.full_like(x, np.nan)
            return -value, -grad

        x0 = np.concatenate([old.hyper.to_log(), Z0.ravel()])
        try:
            result = optimizer_service.minimize(objective, x0, cfg.optimizer)
        except InvalidArgumentError:
            return self._unstable("online bound is not finite at the initial point")
        if result.diverged:
            return self._unstable(
                "optimizer diverged", result.iterations, bound=-result.value
            )

        h = Hyperparams.from_log(result.argmin[:n_theta])
        Z_b = result.argmin[n_theta:].reshape(M_b, d)
        try:
            updated = sparse_gp_service.build_model(
                h,
                Z_b,
                new_data,
                summary,
                n_seen=old.n_seen + new_data.size,
                was_streamed=True,
            )
            mean_at_z, _ = sparse_gp_service.predict_sparse(updated, Z_b, full_cov=False)
        except (NumericalError, ValueError) as e:
            return self._unstable(f"factorization failed: {e}", result.iterations)

        max_abs_mean = float(np.max(np.abs(mean_at_z)))
        if not np.isfinite(max_abs_mean) or max_abs_mean > cfg.divergence_mean_cap:
            return self._unstable(
                f"posterior mean at pseudo-inputs reached {max_abs_mean:.3e}",
                result.iterations,
            )
        if not is_psd(updated.S_Z):
            return self._unstable(
                "updated covariance is not positive semidefinite", result.iterations
            )
        if M_b > 1 and np.min(pdist(Z_b)) <= 0.0:
            return self._unstable("pseudo-inputs collapsed onto each other", result.iterations)

        return StreamUpdateOutcome(
            updated=updated,
            stable=True,
            diagnostics=StreamDiagnostics(
                bound=-result.value,
                iterations=result.iterations,
                max_abs_mean=max_abs_mean,
            ),
        )


stream_service = StreamService()
