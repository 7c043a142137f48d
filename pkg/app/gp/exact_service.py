import logging
from typing import Tuple

import numpy as np

from app.config import settings
from app.exceptions import InvalidArgumentError
from app.gp.model import Batch, ExactGP
from app.kernel.model import Hyperparams
from app.kernel.service import kernel_service
from app.linalg import cho_solve, jitter_cholesky, solve_lower, symmetrize


logging.basicConfig(level=settings.log_level)
logger = logging.getLogger(__name__)


class ExactGPService:
    """Full GP posterior and marginal likelihood with a zero prior mean."""

    def _check(self, h: Hyperparams, data: Batch) -> None:
        if data.is_empty:
            raise InvalidArgumentError("cannot fit a GP to an empty batch")
        if data.dim != h.dim:
            raise InvalidArgumentError(
                f"batch has dimension {data.dim}, hyperparameters have {h.dim}"
            )

    def fit_exact(self, h: Hyperparams, data: Batch) -> ExactGP:
        self._check(h, data)
        K = kernel_service.k_matrix(h, data.X)
        K[np.diag_indices_from(K)] += h.noise_variance
        L, jitter = jitter_cholesky(K, h.signal_variance)
        alpha = cho_solve(L, data.y)
        return ExactGP(hyper=h, X=data.X, y=data.y, chol=L, alpha=alpha, jitter=jitter)

    def predict_exact(
        self, gp: ExactGP, Xs: np.ndarray, full_cov: bool = True
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Posterior mean and covariance (or marginal variances) at Xs."""
        Ksx = kernel_service.k_matrix(gp.hyper, Xs, gp.X)
        mean = Ksx @ gp.alpha
        V = solve_lower(gp.chol, Ksx.T)
        if not full_cov:
            var = gp.hyper.signal_variance - np.sum(V**2, axis=0)
            return mean, np.maximum(var, 0.0)
        cov = symmetrize(kernel_service.k_matrix(gp.hyper, Xs) - V.T @ V)
        return mean, cov

    def log_marginal(self, h: Hyperparams, data: Batch) -> float:
        """log N(y; 0, K + sn^2 I)."""
        gp = self.fit_exact(h, data)
        N = data.size
        return float(
            -0.5 * data.y @ gp.alpha
            - np.sum(np.log(np.diag(gp.chol)))
            - 0.5 * N * np.log(2.0 * np.pi)
        )


exact_gp_service = ExactGPService()
