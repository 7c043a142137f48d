import logging
from pathlib import Path
from typing import Optional, Tuple

import click
import uvicorn

from app.config import settings
from app.ensemble.model import PredictionMode, Strategy
from app.ensemble.repository import EnsembleRepository
from app.exceptions import (
    EnsembleNotFoundError,
    EnsembleStateError,
    InvalidArgumentError,
    NumericalError,
)
from app.experiment.dataset_service import dataset_service
from app.experiment.model import RunConfig, SplitMode, SynthConfig
from app.experiment.repository import result_repository
from app.experiment.run_service import run_service
from app.kernel.model import Hyperparams


logging.basicConfig(level=settings.log_level)
logger = logging.getLogger(__name__)

HANDLED = (InvalidArgumentError, NumericalError, EnsembleStateError, EnsembleNotFoundError)


def _hyper(values: Tuple[float, float, float]) -> Hyperparams:
    sigma_f, lengthscale, sigma_n = values
    try:
        return Hyperparams(sigma_f=sigma_f, lengthscales=[lengthscale], sigma_n=sigma_n)
    except ValueError as e:
        raise click.BadParameter(str(e))


@click.group()
@click.option("--log-level", default=None, help="Override WGPR_LOG_LEVEL for this command.")
def cli(log_level: Optional[str]) -> None:
    """Streaming sparse-GP ensembles split by Wasserstein similarity."""
    if log_level:
        logging.getLogger().setLevel(log_level.upper())


@cli.command()
@click.option("--n-points", default=2000, show_default=True, type=int)
@click.option("--low", default=0.0, show_default=True, type=float)
@click.option("--high", default=300.0, show_default=True, type=float)
@click.option("--split-point", default=150.0, show_default=True, type=float)
@click.option(
    "--left", nargs=3, type=float, default=(1.0, 10.0, 0.1), show_default=True,
    help="sigma_f lengthscale sigma_n of the regime below the split.",
)
@click.option(
    "--right", nargs=3, type=float, default=(1.0, 3.0, 0.2), show_default=True,
    help="sigma_f lengthscale sigma_n of the regime above the split.",
)
@click.option("--no-noise", is_flag=True, help="Write noiseless function samples.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def synth(n_points, low, high, split_point, left, right, no_noise, seed, out_path) -> None:
    """Write a two-regime GP sample in spatial order."""
    try:
        cfg = SynthConfig(
            n_points=n_points,
            low=low,
            high=high,
            split_point=split_point,
            left=_hyper(left),
            right=_hyper(right),
            add_noise=not no_noise,
            seed=seed,
        )
        data = dataset_service.synthesize(cfg)
        dataset_service.write_csv(out_path, data.X, data.y, data.feature_names)
    except HANDLED as e:
        raise click.ClickException(str(e))
    except ValueError as e:
        raise click.BadParameter(str(e))
    click.echo(f"Wrote {data.size} rows to {out_path}")


def _run_config(config_path: Optional[str], **overrides) -> RunConfig:
    try:
        return RunConfig.from_yaml(config_path, overrides)
    except InvalidArgumentError as e:
        raise click.ClickException(str(e))


def run_options(func):
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False)),
        click.option("--batch-size", type=int),
        click.option("--pseudo-points", type=int),
        click.option("--epsilon", type=float),
        click.option("--j-hat", type=int),
        click.option("--w-gen", type=float),
        click.option("--seed", type=int),
        click.option("--strategy", type=click.Choice([s.value for s in Strategy])),
        click.option("--prediction-mode", type=click.Choice([m.value for m in PredictionMode])),
        click.option("--kappa", type=int),
        click.option("--target", type=str),
        click.option("--normalize/--no-normalize", default=None),
        click.option("--train-fraction", type=float),
        click.option("--test-fraction", type=float),
        click.option("--split", type=click.Choice([s.value for s in SplitMode])),
        click.option("--max-iters", type=int),
    ]
    for option in reversed(options):
        func = option(func)
    return func


@cli.command()
@click.argument("data_path", type=click.Path(exists=True, dir_okay=False))
@run_options
@click.option("--out", "out_path", default="result.json", show_default=True)
@click.option("--model-out", default=None, help="Where to save the ensemble.")
@click.option("--predictions", "predictions_path", default=None, help="Optional predictions CSV.")
def train(data_path, config_path, out_path, model_out, predictions_path, **overrides) -> None:
    """Stream the training split through the configured strategy."""
    cfg = _run_config(config_path, **overrides)
    try:
        data = dataset_service.load_csv(data_path, cfg.target)
        outcome = run_service.train(cfg, data)
        result_repository.write_result(outcome.result, out_path)
        model_path = model_out or str(Path(out_path).with_suffix("")) + ".model.json"
        EnsembleRepository().save(outcome.ensemble, model_path)
        if predictions_path:
            result_repository.write_predictions(
                outcome.predictions, predictions_path, data.feature_names
            )
    except HANDLED as e:
        raise click.ClickException(str(e))
    r = outcome.result
    click.echo(
        f"{r.n_models} models, RMSE {r.rmse:.4f}, SMSE {r.smse:.4f}, "
        f"{r.training_frequency:.1f} samples/s"
    )


@cli.command(name="eval")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("data_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--target", default="y", show_default=True)
@click.option("--out", "out_path", default=None, help="Optional metrics JSON.")
@click.option("--predictions", "predictions_path", default=None)
def eval_command(model_path, data_path, target, out_path, predictions_path) -> None:
    """Score a saved ensemble on a labelled CSV."""
    try:
        ens = EnsembleRepository().load(model_path)
        data = dataset_service.load_csv(data_path, target)
        scores, predictions = run_service.evaluate(ens, data)
        if out_path:
            result_repository.write_result(scores, out_path)
        if predictions_path:
            result_repository.write_predictions(predictions, predictions_path, data.feature_names)
    except HANDLED as e:
        raise click.ClickException(str(e))
    click.echo(
        f"RMSE {scores.rmse:.4f}, SMSE {scores.smse:.4f}, "
        f"mean variance {scores.mean_variance:.4f} on {scores.n_points} points"
    )


@cli.command()
@click.argument("data_path", type=click.Path(exists=True, dir_okay=False))
@run_options
@click.option("--epsilons", default="", help="Comma-separated epsilon grid for WGPR.")
@click.option("--w-gens", default="", help="Comma-separated w_gen grid for the baseline.")
@click.option("--single-stream", is_flag=True, help="Add one single-stream run.")
@click.option("--out", "out_path", default="comparison.csv", show_default=True)
def compare(data_path, config_path, epsilons, w_gens, single_stream, out_path, **overrides) -> None:
    """Sweep thresholds for WGPR and the distance baseline."""
    cfg = _run_config(config_path, **overrides)
    try:
        eps_grid = [float(v) for v in epsilons.split(",") if v.strip()]
        w_grid = [float(v) for v in w_gens.split(",") if v.strip()]
    except ValueError as e:
        raise click.BadParameter(f"grids must be comma-separated numbers: {e}")
    try:
        data = dataset_service.load_csv(data_path, cfg.target)
        rows = run_service.compare(cfg, data, eps_grid, w_grid, single_stream)
        result_repository.write_comparison(rows, out_path)
    except HANDLED as e:
        raise click.ClickException(str(e))
    for row in rows:
        status = "diverged" if row.diverged else f"{row.n_models} models, RMSE {row.rmse:.4f}"
        click.echo(f"{row.strategy} @ {row.threshold:g}: {status}")


@cli.command()
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("data_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--target", default="y", show_default=True, help="Dropped if present.")
@click.option("--out", "out_path", default="predictions.csv", show_default=True)
def predict(model_path, data_path, target, out_path) -> None:
    """Predict every row of a feature CSV with a saved ensemble."""
    try:
        ens = EnsembleRepository().load(model_path)
        X, names = dataset_service.load_features_csv(data_path, target)
        predictions = run_service.predict(ens, X)
        result_repository.write_predictions(predictions, out_path, names)
    except HANDLED as e:
        raise click.ClickException(str(e))
    click.echo(f"Wrote {predictions.mean.size} predictions to {out_path}")


@cli.command()
@click.option("--host", default="0.0.0.0", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--model-dir", default=None, help="Override WGPR_MODEL_DIR.")
def serve(host, port, model_dir) -> None:
    """Serve saved ensembles over HTTP."""
    if model_dir:
        settings.model_dir = model_dir
    uvicorn.run("app.main:app", host=host, port=port, log_level=settings.log_level.lower())


if __name__ == "__main__":
    cli()
