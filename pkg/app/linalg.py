import logging
from typing import Tuple

import numpy as np
from scipy import linalg

from app.config import settings
from app.exceptions import NumericalError


logger = logging.getLogger(__name__)


def jitter_cholesky(K: np.ndarray, scale: float) -> Tuple[np.ndarray, float]:
    """Lower Cholesky factor of K + jitter*I with jitter escalation.

    The jitter starts at ``settings.jitter * scale`` and grows by
    ``settings.jitter_growth`` until ``settings.max_jitter * scale``.
    Returns the factor and the absolute jitter that was used.
    """
    if not np.all(np.isfinite(K)):
        raise NumericalError("Kernel matrix contains non-finite entries")

    jitter = settings.jitter * scale
    ceiling = settings.max_jitter * scale * (1.0 + 1e-12)
    eye = np.eye(K.shape[0])
    while jitter <= ceiling:
        try:
            L = linalg.cholesky(K + jitter * eye, lower=True, check_finite=False)
            if jitter > settings.jitter * scale:
                logger.warning(f"Cholesky succeeded after escalating jitter to {jitter:.3e}")
            return L, jitter
        except linalg.LinAlgError:
            jitter *= settings.jitter_growth

    raise NumericalError(
        f"Matrix of size {K.shape[0]} is not positive definite even with jitter {ceiling:.3e}"
    )


def strict_cholesky(A: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of A exactly as given; never adds jitter."""
    if not np.all(np.isfinite(A)):
        raise NumericalError("Matrix contains non-finite entries")
    try:
        return linalg.cholesky(A, lower=True, check_finite=False)
    except linalg.LinAlgError:
        raise NumericalError(f"Matrix of size {A.shape[0]} is not positive definite")


def robust_cholesky(A: np.ndarray, max_tries: int = 5) -> np.ndarray:
    """Plain Cholesky, falling back to a growing diagonal jitter on failure."""
    if not np.all(np.isfinite(A)):
        raise NumericalError("Matrix contains non-finite entries")

    try:
        return linalg.cholesky(A, lower=True, check_finite=False)
    except linalg.LinAlgError:
        pass

    diag = np.diag(A)
    if np.any(diag <= 0.0):
        raise NumericalError("Matrix is not positive definite: non-positive diagonal")

    jitter = diag.mean() * 1e-6
    eye = np.eye(A.shape[0])
    for _ in range(max_tries):
        try:
            L = linalg.cholesky(A + jitter * eye, lower=True, check_finite=False)
            logger.warning(f"Added jitter of {jitter:.3e} to factorize a covariance")
            return L
        except linalg.LinAlgError:
            jitter *= 10.0

    raise NumericalError("Matrix is not positive definite, even with jitter")


def cho_solve(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    return linalg.cho_solve((L, True), B, check_finite=False)


def solve_lower(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    return linalg.solve_triangular(L, B, lower=True, check_finite=False)


def chol_logdet(L: np.ndarray) -> float:
    return float(2.0 * np.sum(np.log(np.diag(L))))


def chol_inverse(L: np.ndarray) -> np.ndarray:
    return cho_solve(L, np.eye(L.shape[0]))


def symmetrize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def is_psd(S: np.ndarray, tol: float = 1e-8) -> bool:
    if not np.all(np.isfinite(S)):
        return False
    trace = float(np.trace(S))
    lowest = float(np.linalg.eigvalsh(symmetrize(S))[0])
    return lowest >= -tol * max(abs(trace), np.finfo(float).tiny)
