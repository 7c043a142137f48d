from typing import Optional

import numpy as np


class InvalidArgumentError(ValueError):
    """Raised for shape mismatches, empty or non-finite inputs and bad configuration."""


class NumericalError(ArithmeticError):
    """Raised when a factorization or an optimization cannot be completed."""

    def __init__(self, message: str, best_params: Optional[np.ndarray] = None):
        super().__init__(message)
        self.best_params = best_params


class EnsembleStateError(RuntimeError):
    """Raised when an ensemble is used before it holds any model."""


class EnsembleNotFoundError(LookupError):
    """Raised when a saved ensemble cannot be located."""
