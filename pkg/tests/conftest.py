import numpy as np
import pytest

from app.config import settings
from app.gp.model import Batch
from app.kernel.model import Hyperparams
from helpers import sine_batch


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tight_jitter(monkeypatch):
    """Shrink the diagonal nugget so exactness identities hold to ~1e-8."""
    monkeypatch.setattr(settings, "jitter", 1e-10)
    return settings.jitter


@pytest.fixture
def hyper_1d() -> Hyperparams:
    return Hyperparams(sigma_f=1.2, lengthscales=[0.8], sigma_n=0.3)


@pytest.fixture
def hyper_2d() -> Hyperparams:
    return Hyperparams(sigma_f=0.9, lengthscales=[0.7, 1.3], sigma_n=0.25)


@pytest.fixture
def batch_1d(rng) -> Batch:
    return sine_batch(rng, 15)


@pytest.fixture
def batch_2d(rng) -> Batch:
    X = rng.uniform(-2.0, 2.0, size=(20, 2))
    y = np.cos(X[:, 0]) * np.sin(X[:, 1]) + 0.1 * rng.standard_normal(20)
    return Batch(X=X, y=y)
