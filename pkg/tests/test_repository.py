import json

import numpy as np
import pytest

from app.ensemble.model import Ensemble, EnsembleConfig, Normalization
from app.ensemble.repository import EnsembleRepository
from app.ensemble.service import ensemble_service
from app.exceptions import EnsembleNotFoundError, InvalidArgumentError
from app.gp.repository import model_repository
from app.gp.sparse_service import sparse_gp_service
from app.optimize.model import OptimizeConfig


@pytest.fixture
def ensemble(rng, hyper_1d, batch_1d):
    models = [
        sparse_gp_service.build_model(hyper_1d, batch_1d.X[::4], batch_1d),
        sparse_gp_service.build_model(hyper_1d, batch_1d.X[1::5] + 10.0, batch_1d),
    ]
    return Ensemble(
        models=models,
        config=EnsembleConfig(M=4, epsilon=0.7, optimizer=OptimizeConfig(max_iters=3)),
        batch_count=5,
        divergence_mean_cap=123.0,
        normalization=Normalization.from_data(batch_1d.X, batch_1d.y),
    )


def test_model_save_and_load_preserve_predictions(tmp_path, hyper_1d, batch_1d):
    gp = sparse_gp_service.build_model(hyper_1d, batch_1d.X[::3], batch_1d, n_seen=40)
    path = model_repository.save(gp, tmp_path / "model.json")
    loaded = model_repository.load(path)
    assert loaded.n_seen == 40
    assert loaded.hyper == gp.hyper
    assert loaded.log_evidence == gp.log_evidence
    Xs = np.linspace(-1.0, 6.0, 9).reshape(-1, 1)
    for a, b in zip(
        sparse_gp_service.predict_sparse(gp, Xs, full_cov=False),
        sparse_gp_service.predict_sparse(loaded, Xs, full_cov=False),
    ):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


def test_model_version_checked(tmp_path, hyper_1d, batch_1d):
    gp = sparse_gp_service.build_model(hyper_1d, batch_1d.X[::3], batch_1d)
    path = model_repository.save(gp, tmp_path / "model.json")
    record = json.loads(path.read_text())
    record["version"] = "something-else"
    path.write_text(json.dumps(record))
    with pytest.raises(InvalidArgumentError):
        model_repository.load(path)


def test_ensemble_save_and_load(tmp_path, ensemble):
    repository = EnsembleRepository(tmp_path)
    repository.save(ensemble, repository.path_for("toy"))
    loaded = repository.get_by_name("toy")
    assert len(loaded.models) == 2
    assert loaded.batch_count == 5
    assert loaded.divergence_mean_cap == 123.0
    assert loaded.config == ensemble.config
    assert loaded.normalization == ensemble.normalization
    Xs = np.linspace(-1.0, 16.0, 12).reshape(-1, 1)
    for a, b in zip(
        ensemble_service.predict_batch(ensemble, Xs), ensemble_service.predict_batch(loaded, Xs)
    ):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


def test_infinite_epsilon_survives_saving(tmp_path, ensemble):
    ensemble.config = ensemble.config.model_copy(update={"epsilon": float("inf")})
    repository = EnsembleRepository(tmp_path)
    loaded = repository.load(repository.save(ensemble, tmp_path / "inf.json"))
    assert loaded.epsilon == float("inf")
    assert repository.summarize("inf", loaded).epsilon is None


def test_listing_skips_unreadable_files(tmp_path, ensemble):
    repository = EnsembleRepository(tmp_path)
    repository.save(ensemble, repository.path_for("b"))
    repository.save(ensemble, repository.path_for("a"))
    (tmp_path / "broken.json").write_text("{not json")
    summaries = repository.get_all()
    assert [s.name for s in summaries] == ["a", "b"]
    assert summaries[0].n_models == 2 and summaries[0].dim == 1
    assert summaries[0].strategy == "wgpr"


def test_missing_directory_lists_nothing(tmp_path):
    assert EnsembleRepository(tmp_path / "absent").get_all() == []


def test_missing_or_invalid_names(tmp_path):
    repository = EnsembleRepository(tmp_path)
    with pytest.raises(EnsembleNotFoundError):
        repository.get_by_name("nothing")
    for name in ["", "../escape", ".hidden", "a/b"]:
        with pytest.raises(EnsembleNotFoundError):
            repository.path_for(name)


def test_trained_ensemble_round_trip(tmp_path, rng, batch_1d):
    ens = ensemble_service.init_ensemble(
        batch_1d, EnsembleConfig(M=3, optimizer=OptimizeConfig(max_iters=5))
    )
    repository = EnsembleRepository(tmp_path)
    loaded = repository.load(repository.save(ens, tmp_path / "trained.json"))
    x = rng.uniform(0.0, 5.0, size=(4, 1))
    np.testing.assert_allclose(
        ensemble_service.predict_batch(ens, x)[0], ensemble_service.predict_batch(loaded, x)[0]
    )
