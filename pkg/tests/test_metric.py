import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings, strategies as st

from app.exceptions import InvalidArgumentError
from app.gp.model import SparseGP
from app.gp.sparse_service import sparse_gp_service
from app.kernel.model import Hyperparams
from app.metric.model import FiniteGaussian
from app.metric.service import metric_service


def random_gaussian(rng, n, scale=1.0):
    A = rng.normal(size=(n, n))
    return FiniteGaussian(mean=scale * rng.normal(size=n), cov=A @ A.T / n + 0.1 * np.eye(n))


def test_psd_sqrt_of_identity_and_diagonal():
    np.testing.assert_allclose(metric_service.psd_sqrt(np.eye(3)), np.eye(3), atol=1e-12)
    np.testing.assert_allclose(
        metric_service.psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-12
    )


def test_psd_sqrt_reconstructs(rng):
    A = rng.normal(size=(6, 6))
    S = A @ A.T
    R = metric_service.psd_sqrt(S)
    np.testing.assert_allclose(R, R.T)
    np.testing.assert_allclose(R @ R, S, atol=1e-10 * np.trace(S))
    assert np.min(np.linalg.eigvalsh(R)) >= -1e-10


def test_psd_sqrt_clamps_rank_deficiency():
    v = np.array([[1.0], [2.0]])
    R = metric_service.psd_sqrt(v @ v.T)
    np.testing.assert_allclose(R @ R, v @ v.T, atol=1e-12)


def test_one_dimensional_value():
    p = FiniteGaussian(mean=[0.0], cov=[[1.0]])
    q = FiniteGaussian(mean=[1.0], cov=[[4.0]])
    assert metric_service.w2_squared(p, q) == pytest.approx(2.0, abs=1e-12)


def test_diagonal_closed_form(rng):
    a, b = rng.uniform(0.1, 3.0, size=5), rng.uniform(0.1, 3.0, size=5)
    ma, mb = rng.normal(size=5), rng.normal(size=5)
    p = FiniteGaussian(mean=ma, cov=np.diag(a))
    q = FiniteGaussian(mean=mb, cov=np.diag(b))
    expected = np.sum((ma - mb) ** 2) + np.sum((np.sqrt(a) - np.sqrt(b)) ** 2)
    assert metric_service.w2_squared(p, q) == pytest.approx(expected, rel=1e-10)


def test_identical_gaussians_have_zero_distance(rng):
    p = random_gaussian(rng, 8)
    assert metric_service.w2_squared(p, p) == pytest.approx(0.0, abs=1e-9)


def test_translation_invariance(rng):
    p, q = random_gaussian(rng, 4), random_gaussian(rng, 4)
    c = rng.normal(size=4)
    moved_p = FiniteGaussian(mean=p.mean + c, cov=p.cov)
    moved_q = FiniteGaussian(mean=q.mean + c, cov=q.cov)
    assert metric_service.w2_squared(moved_p, moved_q) == pytest.approx(
        metric_service.w2_squared(p, q), rel=1e-9
    )


def test_shared_covariance_gives_mean_separation(rng):
    p = random_gaussian(rng, 5)
    shift = rng.normal(size=5)
    q = FiniteGaussian(mean=p.mean + shift, cov=p.cov)
    assert metric_service.w2_squared(p, q) == pytest.approx(float(shift @ shift), rel=1e-8)


def test_dimension_mismatch_rejected(rng):
    with pytest.raises(InvalidArgumentError):
        metric_service.w2_squared(random_gaussian(rng, 2), random_gaussian(rng, 3))


def test_gaussian_validation():
    with pytest.raises(ValueError):
        FiniteGaussian(mean=[0.0, 0.0], cov=[[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(ValueError):
        FiniteGaussian(mean=[0.0], cov=[[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        FiniteGaussian(mean=[np.nan], cov=[[1.0]])
    g = FiniteGaussian(mean=[0.0, 0.0], cov=[[1.0, 1.0], [1.0, 1.0 - 1e-12]])
    assert np.min(np.linalg.eigvalsh(g.cov)) >= -1e-12


@hyp_settings(max_examples=200, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1), n=st.integers(min_value=1, max_value=8))
def test_metric_axioms(seed, n):
    rng = np.random.default_rng(seed)
    p, q, r = (random_gaussian(rng, n, scale=2.0) for _ in range(3))
    pq = metric_service.w2_squared(p, q)
    assert pq >= 0.0
    assert pq == pytest.approx(metric_service.w2_squared(q, p), rel=1e-7, abs=1e-9)
    triangle = np.sqrt(metric_service.w2_squared(p, r)) + np.sqrt(metric_service.w2_squared(r, q))
    assert np.sqrt(pq) <= triangle + 1e-8


def test_similarity_old_of_unchanged_model_is_zero(hyper_1d, batch_1d):
    gp = sparse_gp_service.build_model(hyper_1d, batch_1d.X[::3], batch_1d)
    assert metric_service.similarity_old(gp, gp) == pytest.approx(0.0, abs=1e-9)
    assert metric_service.similarity_new(gp, gp, batch_1d.X) == pytest.approx(0.0, abs=1e-9)


def test_similarity_grows_with_disagreement(hyper_1d, batch_1d):
    gp = sparse_gp_service.build_model(hyper_1d, batch_1d.X[::3], batch_1d)
    prior = sparse_gp_service.prior_model(hyper_1d, gp.Z)
    assert metric_service.similarity_old(gp, prior) > 0.1
    assert metric_service.similarity_new(gp, prior, batch_1d.X) > 0.1


def single_pseudo_input(mean, var):
    """One pseudo-input at 0 with q(u) = N(mean, var) under a unit kernel."""
    return SparseGP(
        hyper=Hyperparams(sigma_f=1.0, lengthscales=[1.0], sigma_n=0.1),
        Z=np.zeros((1, 1)),
        mu_Z=np.array([mean]),
        S_Z=np.array([[var]]),
        kzz_chol=np.eye(1),
        jitter=0.0,
    )


def test_similarity_old_one_dimensional_oracle():
    before = single_pseudo_input(1.0, 0.25)
    after = single_pseudo_input(0.4, 0.09)
    # (1.0 - 0.4)^2 + (0.5 - 0.3)^2
    assert metric_service.similarity_old(before, after) == pytest.approx(0.40, rel=1e-10)


def test_similarity_new_one_dimensional_oracle():
    fresh = single_pseudo_input(1.0, 0.25)
    after = single_pseudo_input(0.4, 0.09)
    r = np.exp(-0.5)  # k(0, 1)
    sd_fresh = np.sqrt(1.0 - r**2 + 0.25 * r**2)
    sd_after = np.sqrt(1.0 - r**2 + 0.09 * r**2)
    expected = (0.6 * r) ** 2 + (sd_fresh - sd_after) ** 2
    value = metric_service.similarity_new(fresh, after, np.array([[1.0]]))
    assert value == pytest.approx(expected, rel=1e-10)


def test_similarity_total():
    assert metric_service.similarity_total(1.5, 2.0) == pytest.approx(3.5)
    assert metric_service.similarity_total(float("inf"), 0.0) == float("inf")
    assert metric_service.similarity_total(0.0, float("inf")) == float("inf")
    with pytest.raises(InvalidArgumentError):
        metric_service.similarity_total(-1.0, 0.0)
    with pytest.raises(InvalidArgumentError):
        metric_service.similarity_total(float("nan"), 0.0)
