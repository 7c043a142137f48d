import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator


# Eigenvalues above -EIGEN_TOLERANCE * trace are treated as round-off and clamped.
EIGEN_TOLERANCE = 1e-8


class FiniteGaussian(BaseModel):
    """A Gaussian N(mean, cov) over n points, cov symmetrized and clamped to PSD."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mean: np.ndarray
    cov: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data):
        if not isinstance(data, dict):
            return data
        mean = np.asarray(data.get("mean"), dtype=float).ravel()
        cov = np.atleast_2d(np.asarray(data.get("cov"), dtype=float))
        n = mean.shape[0]
        if cov.shape != (n, n):
            raise ValueError(f"covariance has shape {cov.shape}, mean has length {n}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("Gaussian moments contain non-finite values")

        cov = 0.5 * (cov + cov.T)
        if n > 0:
            eigvals, eigvecs = np.linalg.eigh(cov)
            floor = -EIGEN_TOLERANCE * max(abs(float(np.trace(cov))), np.finfo(float).tiny)
            if eigvals[0] < floor:
                raise ValueError(
                    f"covariance is not positive semidefinite: eigenvalue {eigvals[0]:.3e}"
                )
            if eigvals[0] < 0.0:
                cov = (eigvecs * np.maximum(eigvals, 0.0)) @ eigvecs.T
                cov = 0.5 * (cov + cov.T)
        return {"mean": mean, "cov": cov}

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])
