import logging
from typing import NamedTuple, Optional, Tuple

import numpy as np

from app.config import settings
from app.exceptions import InvalidArgumentError, NumericalError
from app.gp.model import Batch, OldSummary, SparseGP
from app.kernel.model import Hyperparams
from app.kernel.service import kernel_service
from app.linalg import (
    cho_solve,
    chol_inverse,
    chol_logdet,
    jitter_cholesky,
    solve_lower,
    strict_cholesky,
    symmetrize,
)
from app.metric.model import FiniteGaussian
from app.optimize.model import OptimizeConfig
from app.optimize.service import optimizer_service


logging.basicConfig(level=settings.log_level)
logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))


class _BoundTerms(NamedTuple):
    Kbb: np.ndarray
    Lb: np.ndarray
    jitter: float
    Kbf: np.ndarray
    Kba: Optional[np.ndarray]
    A_chol: np.ndarray
    c: np.ndarray
    alpha: np.ndarray


class SparseGPService:
    """Collapsed variational bound for sparse GPs, batch and online.

    Without an ``old`` summary the bound is the batch VFE bound on ``data``.
    With one, the previous posterior over Z_a enters as a Gaussian
    pseudo-likelihood with precision P_a and shift g_a, giving the online bound
    used for streaming updates; its value includes the old model's log-evidence,
    so it bounds the log marginal of all data seen. Both share the same statistics:

        c = Kbf y / sn^2 + Kba g_a
        A = Kbb + Kbf Kfb / sn^2 + Kba P_a Kab
    """

    def _terms(
        self, h: Hyperparams, Z: np.ndarray, data: Batch, old: Optional[OldSummary]
    ) -> _BoundTerms:
        s2 = h.noise_variance
        Kbb_raw = kernel_service.k_matrix(h, Z)
        Lb, jitter = jitter_cholesky(Kbb_raw, h.signal_variance)
        Kbb = Kbb_raw + jitter * np.eye(Z.shape[0])
        Kbf = kernel_service.k_matrix(h, Z, data.X)

        c = Kbf @ data.y / s2
        # A = Lb B Lb^T with B = I + Lb^-1 (Kbf Kfb / sn^2 + Kba P_a Kab) Lb^-T
        V = solve_lower(Lb, Kbf) / np.sqrt(s2)
        B = np.eye(Z.shape[0]) + V @ V.T
        Kba = None
        if old is not None:
            Kba = kernel_service.k_matrix(h, Z, old.Z_a)
            c = c + Kba @ old.shift
            Va = solve_lower(Lb, Kba)
            B = B + Va @ old.precision @ Va.T

        A_chol = Lb @ strict_cholesky(symmetrize(B))
        alpha = cho_solve(A_chol, c)
        return _BoundTerms(Kbb, Lb, jitter, Kbf, Kba, A_chol, c, alpha)

    def collapsed_bound(
        self,
        h: Hyperparams,
        Z: np.ndarray,
        data: Batch,
        old: Optional[OldSummary] = None,
        with_grad: bool = True,
    ) -> Tuple[float, Optional[np.ndarray]]:
        """Bound value and its gradient wrt (log hyperparameters, Z.ravel())."""
        t = self._terms(h, Z, data, old)
        y = data.y
        N = data.size
        s2 = h.noise_variance
        sf2 = h.signal_variance

        W = cho_solve(t.Lb, t.Kbf)  # Kbb^-1 Kbf
        trace_q = float(np.sum(t.Kbf * W))
        yy = float(y @ y)

        value = (
            -0.5 * N * (LOG_2PI + np.log(s2))
            - 0.5 * yy / s2
            + 0.5 * float(t.c @ t.alpha)
            - 0.5 * chol_logdet(t.A_chol)
            + 0.5 * chol_logdet(t.Lb)
            - 0.5 * N * sf2 / s2
            + 0.5 * trace_q / s2
        )

        Kaa = None
        Vba = None
        if old is not None:
            Kaa = kernel_service.k_matrix(h, old.Z_a) + t.jitter * np.eye(old.Z_a.shape[0])
            Vba = cho_solve(t.Lb, t.Kba)  # Kbb^-1 Kba
            residual = Kaa - t.Kba.T @ Vba
            value += old.constant - 0.5 * float(np.sum(old.precision * residual))

        if not np.isfinite(value):
            raise NumericalError("collapsed bound is not finite")
        if not with_grad:
            return float(value), None

        # Adjoints dF/dK for each kernel block.
        Ai = chol_inverse(t.A_chol)
        Kbbi = chol_inverse(t.Lb)
        G = -0.5 * (np.outer(t.alpha, t.alpha) + Ai)
        KbfKfb = t.Kbf @ t.Kbf.T

        adj_bb = G + 0.5 * Kbbi - 0.5 / s2 * (W @ W.T)
        adj_bf = 2.0 * G @ t.Kbf / s2 + np.outer(t.alpha, y) / s2 + W / s2
        adj_ba = None
        adj_aa = None
        if old is not None:
            PVab = old.precision @ Vba.T
            adj_bb = adj_bb - 0.5 * Vba @ PVab
            adj_ba = 2.0 * G @ t.Kba @ old.precision + np.outer(t.alpha, old.shift) + PVab.T
            adj_aa = -0.5 * old.precision
        adj_bb = symmetrize(adj_bb)

        d_s2 = (
            -float(np.sum(G * KbfKfb)) / s2**2
            - float(t.alpha @ t.Kbf @ y) / s2**2
            - 0.5 * trace_q / s2**2
            - 0.5 * N / s2
            + 0.5 * yy / s2**2
            + 0.5 * N * sf2 / s2**2
        )

        grad_theta = np.zeros(h.dim + 2)
        grad_theta[0] = 2.0 * (
            float(np.sum(adj_bb * t.Kbb)) + float(np.sum(adj_bf * t.Kbf))
        ) - N * sf2 / s2
        for i, dK in enumerate(kernel_service.k_matrix_grad(h, Z)[1:-1]):
            grad_theta[1 + i] += float(np.sum(adj_bb * dK))
        for i, dK in enumerate(kernel_service.k_matrix_grad(h, Z, data.X)[1:-1]):
            grad_theta[1 + i] += float(np.sum(adj_bf * dK))
        grad_theta[-1] = 2.0 * s2 * d_s2

        grad_Z = kernel_service.contract_z(
            2.0 * adj_bb, kernel_service.k_cross_grad_z(h, Z, Z)
        ) + kernel_service.contract_z(adj_bf, kernel_service.k_cross_grad_z(h, Z, data.X))

        if old is not None:
            grad_theta[0] += 2.0 * (
                float(np.sum(adj_ba * t.Kba)) + float(np.sum(adj_aa * Kaa))
            )
            for i, dK in enumerate(kernel_service.k_matrix_grad(h, Z, old.Z_a)[1:-1]):
                grad_theta[1 + i] += float(np.sum(adj_ba * dK))
            for i, dK in enumerate(kernel_service.k_matrix_grad(h, old.Z_a)[1:-1]):
                grad_theta[1 + i] += float(np.sum(adj_aa * dK))
            grad_Z = grad_Z + kernel_service.contract_z(
                adj_ba, kernel_service.k_cross_grad_z(h, Z, old.Z_a)
            )

        grad = np.concatenate([grad_theta, grad_Z.ravel()])
        if not np.all(np.isfinite(grad)):
            raise NumericalError("collapsed bound gradient is not finite")
        return float(value), grad

    def vfe_objective(
        self, h: Hyperparams, Z: np.ndarray, data: Batch
    ) -> Tuple[float, np.ndarray]:
        if data.dim != h.dim:
            raise InvalidArgumentError(
                f"batch has dimension {data.dim}, hyperparameters have {h.dim}"
            )
        return self.collapsed_bound(h, np.atleast_2d(Z), data)

    def compute_variational_moments(
        self,
        h: Hyperparams,
        Z: np.ndarray,
        data: Batch,
        old: Optional[OldSummary] = None,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Optimal q(u) = N(mu, S) for fixed hyperparameters and pseudo-inputs."""
        t = self._terms(h, Z, data, old)
        mu = t.Kbb @ t.alpha
        T = solve_lower(t.A_chol, t.Kbb)
        return mu, symmetrize(T.T @ T)

    def build_model(
        self,
        h: Hyperparams,
        Z: np.ndarray,
        data: Batch,
        old: Optional[OldSummary] = None,
        n_seen: Optional[int] = None,
        was_streamed: bool = False,
    ) -> SparseGP:
        mu, S = self.compute_variational_moments(h, Z, data, old)
        log_evidence, _ = self.collapsed_bound(h, Z, data, old, with_grad=False)
        L, jitter = jitter_cholesky(kernel_service.k_matrix(h, Z), h.signal_variance)
        return SparseGP(
            hyper=h,
            Z=np.array(Z, copy=True),
            mu_Z=mu,
            S_Z=S,
            kzz_chol=L,
            jitter=jitter,
            n_seen=data.size if n_seen is None else n_seen,
            was_streamed=was_streamed,
            log_evidence=log_evidence,
        )

    def prior_model(self, h: Hyperparams, Z: np.ndarray) -> SparseGP:
        """q(u) equal to the prior p(u) at Z; a model that has seen no data."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        L, jitter = jitter_cholesky(kernel_service.k_matrix(h, Z), h.signal_variance)
        return SparseGP(
            hyper=h,
            Z=Z,
            mu_Z=np.zeros(Z.shape[0]),
            S_Z=L @ L.T,
            kzz_chol=L,
            jitter=jitter,
        )

    def initial_pseudo_inputs(self, X: np.ndarray, M: int, seed: int) -> np.ndarray:
        """Seeded choice of min(M, #distinct rows) distinct rows of X."""
        distinct = np.unique(X, axis=0)
        M_eff = min(M, distinct.shape[0])
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(distinct.shape[0], size=M_eff, replace=False))
        return distinct[idx]

    def fit_vfe(
        self,
        data: Batch,
        M: int,
        init: Optional[Hyperparams] = None,
        cfg: Optional[OptimizeConfig] = None,
        seed: int = 0,
    ) -> SparseGP:
        """Jointly optimise hyperparameters and pseudo-inputs under the VFE bound."""
        if data.is_empty:
            raise InvalidArgumentError("cannot fit a sparse GP to an empty batch")
        if M < 1:
            raise InvalidArgumentError(f"number of pseudo-inputs must be positive, got {M}")
        init = init or Hyperparams.from_data(data.X, data.y)
        if init.dim != data.dim:
            raise InvalidArgumentError(
                f"batch has dimension {data.dim}, hyperparameters have {init.dim}"
            )

        Z0 = self.initial_pseudo_inputs(data.X, M, seed)
        M_eff, d = Z0.shape
        n_theta = d + 2

        def objective(x: np.ndarray) -> Tuple[float, np.ndarray]:
            try:
                h = Hyperparams.from_log(x[:n_theta])
                value, grad = self.collapsed_bound(h, x[n_theta:].reshape(M_eff, d), data)
            except (NumericalError, ValueError, FloatingPointError, np.linalg.LinAlgError):
                return np.inf, np.full_like(x, np.nan)
            return -value, -grad

        x0 = np.concatenate([init.to_log(), Z0.ravel()])
        try:
            result = optimizer_service.minimize(objective, x0, cfg)
        except InvalidArgumentError as e:
            logger.error(f"Error fitting sparse GP: {e}")
            raise NumericalError(str(e), best_params=x0)

        if result.diverged:
            raise NumericalError(
                f"VFE optimization diverged after {result.iterations} iterations",
                best_params=result.argmin,
            )

        h = Hyperparams.from_log(result.argmin[:n_theta])
        Z = result.argmin[n_theta:].reshape(M_eff, d)
        logger.debug(
            f"Fitted VFE model on {data.size} points with {M_eff} pseudo-inputs "
            f"in {result.iterations} iterations, bound {-result.value:.4f}"
        )
        return self.build_model(h, Z, data)

    def predict_sparse(
        self, gp: SparseGP, Xs: np.ndarray, full_cov: bool = True
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Predictive latent mean and covariance (or variances) at Xs."""
        Ksz = kernel_service.k_matrix(gp.hyper, Xs, gp.Z)
        B = cho_solve(gp.kzz_chol, Ksz.T)  # Kzz^-1 Kzs
        mean = B.T @ gp.mu_Z
        if not full_cov:
            var = (
                gp.hyper.signal_variance
                - np.sum(Ksz * B.T, axis=1)
                + np.sum((gp.S_Z @ B) * B, axis=0)
            )
            return mean, np.maximum(var, 0.0)
        cov = kernel_service.k_matrix(gp.hyper, Xs) - Ksz @ B + B.T @ gp.S_Z @ B
        cov = symmetrize(cov)
        idx = np.diag_indices_from(cov)
        cov[idx] = np.maximum(cov[idx], 0.0)
        return mean, cov

    def posterior_at(self, gp: SparseGP, Xs: np.ndarray) -> FiniteGaussian:
        mean, cov = self.predict_sparse(gp, Xs, full_cov=True)
        return FiniteGaussian(mean=mean, cov=cov)


sparse_gp_service = SparseGPService()
