import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings, strategies as st
from scipy import linalg

from app.exceptions import InvalidArgumentError
from app.kernel.model import Hyperparams
from app.kernel.service import kernel_service
from helpers import central_difference, relative_error


unit = Hyperparams(sigma_f=1.0, lengthscales=[1.0], sigma_n=0.1)


def test_k_eval_scalar_values():
    assert kernel_service.k_eval(unit, [0.0], [0.0]) == pytest.approx(1.0)
    two = Hyperparams(sigma_f=2.0, lengthscales=[1.0], sigma_n=0.1)
    assert kernel_service.k_eval(two, [0.0], [0.0]) == pytest.approx(4.0)
    assert kernel_service.k_eval(unit, [0.0], [1.0]) == pytest.approx(np.exp(-0.5), abs=1e-12)


def test_k_eval_dimension_mismatch():
    with pytest.raises(InvalidArgumentError):
        kernel_service.k_eval(unit, [0.0, 1.0], [0.0])


def test_k_matrix_single_row():
    K = kernel_service.k_matrix(unit, np.array([[0.3]]))
    assert K.shape == (1, 1)
    assert K[0, 0] == pytest.approx(1.0)


def test_k_matrix_symmetric_with_signal_variance_diagonal(rng, hyper_2d):
    A = rng.normal(size=(12, 2))
    K = kernel_service.k_matrix(hyper_2d, A)
    assert np.max(np.abs(K - K.T)) == 0.0
    np.testing.assert_allclose(np.diag(K), hyper_2d.signal_variance)


def test_k_matrix_matches_k_eval(rng):
    A = rng.normal(size=(3, 1))
    B = rng.normal(size=(2, 1))
    K = kernel_service.k_matrix(unit, A, B)
    for i in range(3):
        for j in range(2):
            assert K[i, j] == pytest.approx(kernel_service.k_eval(unit, A[i], B[j]), rel=1e-12)


def test_k_matrix_rejects_wrong_columns(hyper_2d):
    with pytest.raises(InvalidArgumentError):
        kernel_service.k_matrix(hyper_2d, np.zeros((3, 3)))


def test_k_matrix_grad_signal_and_noise(rng, hyper_2d):
    A = rng.normal(size=(5, 2))
    grads = kernel_service.k_matrix_grad(hyper_2d, A)
    K = kernel_service.k_matrix(hyper_2d, A)
    assert len(grads) == hyper_2d.dim + 2
    np.testing.assert_allclose(grads[0], 2.0 * K)
    assert np.all(grads[-1] == 0.0)


@pytest.mark.parametrize("seed", range(10))
def test_k_matrix_grad_finite_differences(seed, hyper_2d):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(4, 2))
    B = rng.normal(size=(3, 2))
    theta = hyper_2d.to_log()
    grads = kernel_service.k_matrix_grad(hyper_2d, A, B)
    for idx in range(theta.size):
        for i in range(4):
            for j in range(3):

                def entry(t):
                    return kernel_service.k_matrix(Hyperparams.from_log(t), A, B)[i, j]

                e = np.zeros_like(theta)
                e[idx] = 1.0
                fd = central_difference(lambda s: entry(theta + s[0] * e), np.zeros(1))[0]
                assert abs(fd - grads[idx][i, j]) <= 1e-5 * max(abs(fd), 1e-3)


@pytest.mark.parametrize("seed", range(10))
def test_k_cross_grad_z_finite_differences(seed, hyper_2d):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(3, 2))
    X = rng.normal(size=(4, 2))
    dK = kernel_service.k_cross_grad_z(hyper_2d, Z, X)
    for m in range(3):
        for n in range(4):

            def entry(z):
                Zp = Z.copy()
                Zp[m] = z
                return kernel_service.k_matrix(hyper_2d, Zp, X)[m, n]

            fd = central_difference(entry, Z[m].copy())
            assert relative_error(dK[m, n], fd) < 1e-5 or np.max(np.abs(fd)) < 1e-8


def test_k_cross_grad_z_zero_at_coincident_point(hyper_1d):
    Z = np.array([[0.4]])
    dK = kernel_service.k_cross_grad_z(hyper_1d, Z, Z)
    assert dK[0, 0, 0] == 0.0


def test_k_cross_grad_z_antisymmetric(rng, hyper_2d):
    Z = rng.normal(size=(3, 2))
    X = rng.normal(size=(4, 2))
    dz = kernel_service.k_cross_grad_z(hyper_2d, Z, X)
    dx = kernel_service.k_cross_grad_z(hyper_2d, X, Z)
    np.testing.assert_allclose(dz, -np.transpose(dx, (1, 0, 2)), atol=1e-14)


def test_log_round_trip(hyper_2d):
    back = Hyperparams.from_log(hyper_2d.to_log())
    assert back.sigma_f == pytest.approx(hyper_2d.sigma_f, rel=1e-14)
    np.testing.assert_allclose(back.lengthscales, hyper_2d.lengthscales, rtol=1e-14)
    assert back.sigma_n == pytest.approx(hyper_2d.sigma_n, rel=1e-14)


def test_hyperparams_reject_non_positive():
    with pytest.raises(ValueError):
        Hyperparams(sigma_f=0.0, lengthscales=[1.0], sigma_n=0.1)
    with pytest.raises(ValueError):
        Hyperparams(sigma_f=1.0, lengthscales=[], sigma_n=0.1)
    with pytest.raises(ValueError):
        Hyperparams(sigma_f=1.0, lengthscales=[-1.0], sigma_n=0.1)


def test_kernel_matrix_is_psd_with_small_nugget(rng):
    A = rng.uniform(-3.0, 3.0, size=(200, 1))
    K = kernel_service.k_matrix(unit, A)
    linalg.cholesky(K + 1e-6 * np.eye(200), lower=True)


coords = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)
positive = st.floats(min_value=0.05, max_value=5.0)


@hyp_settings(max_examples=100, deadline=None)
@given(x=st.tuples(coords, coords), x2=st.tuples(coords, coords), sf=positive, l1=positive, l2=positive)
def test_kernel_symmetric_and_bounded(x, x2, sf, l1, l2):
    h = Hyperparams(sigma_f=sf, lengthscales=[l1, l2], sigma_n=0.1)
    k = kernel_service.k_eval(h, x, x2)
    assert k == kernel_service.k_eval(h, x2, x)
    assert 0.0 <= k <= h.signal_variance
    if x == x2:
        assert k == pytest.approx(h.signal_variance)
