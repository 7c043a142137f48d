import numpy as np

from app.gp.model import Batch


def sine_batch(rng: np.random.Generator, n: int, low: float = 0.0, high: float = 5.0) -> Batch:
    X = np.sort(rng.uniform(low, high, n)).reshape(-1, 1)
    y = np.sin(1.5 * X[:, 0]) + 0.1 * rng.standard_normal(n)
    return Batch(X=X, y=y)


def central_difference(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        grad[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return grad


def relative_error(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))
