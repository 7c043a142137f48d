from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from app.exceptions import InvalidArgumentError
from app.kernel.model import Hyperparams


class KernelService:
    """Squared-exponential covariance k(x,x') = sf^2 exp(-0.5 (x-x')^T L^-1 (x-x'))."""

    def _as_matrix(self, h: Hyperparams, A: np.ndarray, name: str) -> np.ndarray:
        A = np.asarray(A, dtype=float)
        if A.ndim == 1:
            A = A.reshape(-1, h.dim) if h.dim > 1 else A.reshape(-1, 1)
        if A.ndim != 2 or A.shape[1] != h.dim:
            raise InvalidArgumentError(
                f"{name} has shape {A.shape}, expected (n, {h.dim})"
            )
        return A

    def _operands(
        self, h: Hyperparams, A: np.ndarray, B: Optional[np.ndarray]
    ) -> Tuple[np.ndarray, np.ndarray]:
        A = self._as_matrix(h, A, "A")
        B = A if B is None else self._as_matrix(h, B, "B")
        return A, B

    def k_eval(self, h: Hyperparams, x: np.ndarray, x2: np.ndarray) -> float:
        x = np.asarray(x, dtype=float).ravel()
        x2 = np.asarray(x2, dtype=float).ravel()
        if x.shape[0] != h.dim or x2.shape[0] != h.dim:
            raise InvalidArgumentError(
                f"inputs of dimension {x.shape[0]} and {x2.shape[0]}, kernel has {h.dim}"
            )
        r = (x - x2) / h.lengthscale_array
        return float(h.signal_variance * np.exp(-0.5 * np.dot(r, r)))

    def k_matrix(
        self, h: Hyperparams, A: np.ndarray, B: Optional[np.ndarray] = None
    ) -> np.ndarray:
        A, B = self._operands(h, A, B)
        ell = h.lengthscale_array
        sq = cdist(A / ell, B / ell, "sqeuclidean")
        return h.signal_variance * np.exp(-0.5 * sq)

    def k_matrix_grad(
        self, h: Hyperparams, A: np.ndarray, B: Optional[np.ndarray] = None
    ) -> List[np.ndarray]:
        """Derivatives of k_matrix wrt (log sf, log l_1..l_d, log sn)."""
        A, B = self._operands(h, A, B)
        K = self.k_matrix(h, A, B)
        ell = h.lengthscale_array
        grads = [2.0 * K]
        for i in range(h.dim):
            diff = (A[:, i][:, None] - B[:, i][None, :]) / ell[i]
            grads.append(K * diff**2)
        grads.append(np.zeros_like(K))
        return grads

    def k_cross_grad_z(self, h: Hyperparams, Z: np.ndarray, X: np.ndarray) -> np.ndarray:
        """dK[m, n, :] = d k(z_m, x_n) / d z_m, shape (M, N, d)."""
        Z, X = self._operands(h, Z, X)
        K = self.k_matrix(h, Z, X)
        ell2 = h.lengthscale_array**2
        diff = Z[:, None, :] - X[None, :, :]
        return -K[:, :, None] * diff / ell2

    def contract_z(self, adjoint: np.ndarray, dK: np.ndarray) -> np.ndarray:
        """Chain an adjoint dF/dK (M, N) through k_cross_grad_z into dF/dZ (M, d)."""
        return np.einsum("mn,mnd->md", adjoint, dK)


kernel_service = KernelService()
