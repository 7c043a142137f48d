import numpy as np
import pytest

from app.gp.exact_service import exact_gp_service
from app.gp.model import Batch
from app.kernel.model import Hyperparams
from app.kernel.service import kernel_service
from helpers import relative_error


def naive_posterior(h, data, Xs):
    K = kernel_service.k_matrix(h, data.X) + h.noise_variance * np.eye(data.size)
    Ks = kernel_service.k_matrix(h, Xs, data.X)
    Kinv = np.linalg.inv(K)
    return Ks @ Kinv @ data.y, kernel_service.k_matrix(h, Xs) - Ks @ Kinv @ Ks.T


def test_single_point_posterior_mean():
    h = Hyperparams(sigma_f=1.0, lengthscales=[1.0], sigma_n=1.0)
    gp = exact_gp_service.fit_exact(h, Batch(X=[[0.0]], y=[2.0]))
    mean, _ = exact_gp_service.predict_exact(gp, np.array([[0.0]]))
    assert mean[0] == pytest.approx(1.0, rel=1e-5)


def test_large_noise_reverts_to_prior_mean(batch_1d):
    h = Hyperparams(sigma_f=1.0, lengthscales=[1.0], sigma_n=1e4)
    gp = exact_gp_service.fit_exact(h, batch_1d)
    mean, _ = exact_gp_service.predict_exact(gp, np.linspace(0, 5, 7).reshape(-1, 1))
    assert np.max(np.abs(mean)) < 1e-6


def test_matches_naive_inverse(rng, tight_jitter, hyper_1d):
    data = Batch(X=rng.uniform(0, 4, size=(5, 1)), y=rng.normal(size=5))
    Xs = rng.uniform(0, 4, size=(6, 1))
    gp = exact_gp_service.fit_exact(hyper_1d, data)
    mean, cov = exact_gp_service.predict_exact(gp, Xs)
    ref_mean, ref_cov = naive_posterior(hyper_1d, data, Xs)
    assert relative_error(mean, ref_mean) < 1e-8
    assert relative_error(cov, ref_cov) < 1e-8


def test_oracle_agreement_in_two_dimensions(rng, tight_jitter, hyper_2d, batch_2d):
    Xs = rng.uniform(-2, 2, size=(8, 2))
    gp = exact_gp_service.fit_exact(hyper_2d, batch_2d)
    mean, cov = exact_gp_service.predict_exact(gp, Xs)
    ref_mean, ref_cov = naive_posterior(hyper_2d, batch_2d, Xs)
    assert relative_error(mean, ref_mean) < 1e-8
    assert relative_error(cov, ref_cov) < 1e-8


def test_cholesky_reconstructs_system(hyper_1d, batch_1d):
    gp = exact_gp_service.fit_exact(hyper_1d, batch_1d)
    K = kernel_service.k_matrix(hyper_1d, batch_1d.X) + (
        hyper_1d.noise_variance + gp.jitter
    ) * np.eye(batch_1d.size)
    assert relative_error(gp.chol @ gp.chol.T, K) < 1e-8


def test_far_away_reverts_to_prior(hyper_1d, batch_1d):
    gp = exact_gp_service.fit_exact(hyper_1d, batch_1d)
    far = np.array([[5.0 + 20.0 * hyper_1d.lengthscales[0] + 10.0]])
    mean, cov = exact_gp_service.predict_exact(gp, far)
    assert abs(mean[0]) < 1e-6
    assert cov[0, 0] == pytest.approx(hyper_1d.signal_variance, abs=1e-6)


def test_interpolates_with_tiny_noise(rng, tight_jitter):
    h = Hyperparams(sigma_f=1.0, lengthscales=[1.0], sigma_n=1e-4)
    data = Batch(X=np.linspace(0, 3, 6).reshape(-1, 1), y=rng.normal(size=6))
    gp = exact_gp_service.fit_exact(h, data)
    mean, _ = exact_gp_service.predict_exact(gp, data.X)
    assert np.max(np.abs(mean - data.y)) < 1e-4


def test_posterior_variance_bounded(rng, hyper_1d, batch_1d):
    gp = exact_gp_service.fit_exact(hyper_1d, batch_1d)
    _, cov = exact_gp_service.predict_exact(gp, rng.uniform(-2, 7, size=(30, 1)))
    assert np.all(np.diag(cov) <= hyper_1d.signal_variance + 1e-9)
    _, var = exact_gp_service.predict_exact(gp, rng.uniform(-2, 7, size=(30, 1)), full_cov=False)
    assert np.all(var <= hyper_1d.signal_variance + 1e-9)
    assert np.all(var >= 0.0)


def test_log_marginal_scalar_density(tight_jitter):
    h = Hyperparams(sigma_f=1.0, lengthscales=[1.0], sigma_n=1.0)
    value = exact_gp_service.log_marginal(h, Batch(X=[[0.3]], y=[0.0]))
    assert value == pytest.approx(-0.5 * np.log(2.0 * np.pi * 2.0), abs=1e-6)
    assert value == pytest.approx(-1.265512, abs=1e-6)


def test_log_marginal_permutation_invariant(rng, hyper_2d, batch_2d):
    perm = rng.permutation(batch_2d.size)
    shuffled = Batch(X=batch_2d.X[perm], y=batch_2d.y[perm])
    assert exact_gp_service.log_marginal(hyper_2d, shuffled) == pytest.approx(
        exact_gp_service.log_marginal(hyper_2d, batch_2d), rel=1e-10
    )


def test_empty_batch_rejected(hyper_1d):
    from app.exceptions import InvalidArgumentError

    with pytest.raises(InvalidArgumentError):
        exact_gp_service.fit_exact(hyper_1d, Batch(X=np.zeros((0, 1)), y=np.zeros(0)))
