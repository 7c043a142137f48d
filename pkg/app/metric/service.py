import logging

import numpy as np
from scipy import linalg

from app.config import settings
from app.exceptions import InvalidArgumentError, NumericalError
from app.gp.model import SparseGP
from app.gp.sparse_service import sparse_gp_service
from app.metric.model import FiniteGaussian


logging.basicConfig(level=settings.log_level)
logger = logging.getLogger(__name__)


class MetricService:
    """Squared 2-Wasserstein distances between Gaussian posteriors."""

    def psd_sqrt(self, S: np.ndarray) -> np.ndarray:
        """Unique PSD square root via eigendecomposition, eigenvalues clamped at 0."""
        S = 0.5 * (np.asarray(S, dtype=float) + np.asarray(S, dtype=float).T)
        try:
            eigvals, eigvecs = linalg.eigh(S, check_finite=True)
        except (linalg.LinAlgError, ValueError) as e:
            raise NumericalError(f"eigendecomposition failed: {e}")
        root = (eigvecs * np.sqrt(np.maximum(eigvals, 0.0))) @ eigvecs.T
        return 0.5 * (root + root.T)

    def w2_squared(self, p: FiniteGaussian, q: FiniteGaussian) -> float:
        """||m_p - m_q||^2 + tr(S_p + S_q - 2 (S_p^1/2 S_q S_p^1/2)^1/2), at least 0."""
        if p.dim != q.dim:
            raise InvalidArgumentError(
                f"cannot compare Gaussians of dimension {p.dim} and {q.dim}"
            )
        diff = p.mean - q.mean
        root_p = self.psd_sqrt(p.cov)
        cross = self.psd_sqrt(root_p @ q.cov @ root_p)
        value = float(diff @ diff + np.trace(p.cov) + np.trace(q.cov) - 2.0 * np.trace(cross))
        return max(value, 0.0)

    def similarity_old(self, gp_before: SparseGP, gp_after: SparseGP) -> float:
        """W2^2 between the two posteriors at gp_before's pseudo-inputs."""
        p = sparse_gp_service.posterior_at(gp_before, gp_before.Z)
        q = sparse_gp_service.posterior_at(gp_after, gp_before.Z)
        return self.w2_squared(p, q)

    def similarity_new(
        self, gp_fresh: SparseGP, gp_after: SparseGP, X_new: np.ndarray
    ) -> float:
        """W2^2 between the fresh and the updated posterior at the new inputs."""
        p = sparse_gp_service.posterior_at(gp_fresh, X_new)
        q = sparse_gp_service.posterior_at(gp_after, X_new)
        return self.w2_squared(p, q)

    def similarity_total(self, w_old: float, w_new: float) -> float:
        if np.isposinf(w_old) or np.isposinf(w_new):
            return float("inf")
        if not (np.isfinite(w_old) and np.isfinite(w_new)) or w_old < 0.0 or w_new < 0.0:
            raise InvalidArgumentError(
                f"similarities must be non-negative or +inf, got {w_old} and {w_new}"
            )
        return float(w_old + w_new)


metric_service = MetricService()
