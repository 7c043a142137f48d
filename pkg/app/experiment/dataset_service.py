import csv
import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from sklearn.model_selection import train_test_split

from app.config import settings
from app.ensemble.model import Normalization
from app.exceptions import InvalidArgumentError
from app.experiment.model import RunConfig, SplitMode, SynthConfig
from app.gp.model import Batch
from app.kernel.service import kernel_service
from app.linalg import jitter_cholesky


logging.basicConfig(level=settings.log_level)
logger = logging.getLogger(__name__)


class Dataset(Batch):
    """A Batch that remembers its feature column names."""

    feature_names: List[str]


class DatasetService:
    def _read_rows(self, path: Union[str, Path]) -> Tuple[List[str], List[List[str]]]:
        path = Path(path)
        try:
            with path.open(newline="", encoding="utf-8") as handle:
                reader = csv.reader(handle)
                header = next(reader, None)
                rows = [row for row in reader if row]
        except OSError as e:
            raise InvalidArgumentError(f"cannot read {path}: {e}")
        if not header:
            raise InvalidArgumentError(f"{path} has no header row")
        header = [name.strip() for name in header]
        if not rows:
            raise InvalidArgumentError(f"{path} contains no data rows")
        return header, rows

    def _parse(
        self, path: Union[str, Path], header: List[str], rows: List[List[str]]
    ) -> np.ndarray:
        values = np.empty((len(rows), len(header)))
        for i, row in enumerate(rows):
            line = i + 2
            if len(row) != len(header):
                raise InvalidArgumentError(
                    f"{path}, line {line}: expected {len(header)} cells, found {len(row)}"
                )
            for k, cell in enumerate(row):
                try:
                    values[i, k] = float(cell)
                except ValueError:
                    raise InvalidArgumentError(
                        f"{path}, line {line}, column {header[k]!r}: "
                        f"non-numeric value {cell!r}"
                    )
                if not np.isfinite(values[i, k]):
                    raise InvalidArgumentError(
                        f"{path}, line {line}, column {header[k]!r}: non-finite value {cell!r}"
                    )
        return values

    def load_csv(self, path: Union[str, Path], target: str = "y") -> Dataset:
        """Feature columns in file order plus the named target column."""
        header, rows = self._read_rows(path)
        if target not in header:
            raise InvalidArgumentError(f"{path} has no target column {target!r}")
        if len(header) < 2:
            raise InvalidArgumentError(f"{path} has no feature columns")
        values = self._parse(path, header, rows)
        t = header.index(target)
        features = [name for k, name in enumerate(header) if k != t]
        X = np.delete(values, t, axis=1)
        logger.info(f"Loaded {X.shape[0]} rows with {X.shape[1]} features from {path}")
        return Dataset(X=X, y=values[:, t], feature_names=features)

    def load_features_csv(
        self, path: Union[str, Path], target: Optional[str] = "y"
    ) -> Tuple[np.ndarray, List[str]]:
        """Inputs only; a target column, if present, is dropped."""
        header, rows = self._read_rows(path)
        values = self._parse(path, header, rows)
        if target is not None and target in header:
            t = header.index(target)
            return np.delete(values, t, axis=1), [n for n in header if n != target]
        return values, header

    def write_csv(
        self,
        path: Union[str, Path],
        X: np.ndarray,
        y: np.ndarray,
        feature_names: Optional[List[str]] = None,
        target: str = "y",
    ) -> Path:
        path = Path(path)
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        names = feature_names or [f"x{i + 1}" for i in range(X.shape[1])]
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("w", newline="", encoding="utf-8") as handle:
                writer = csv.writer(handle)
                writer.writerow([*names, target])
                for row, value in zip(X, np.ravel(y)):
                    writer.writerow([repr(float(v)) for v in row] + [repr(float(value))])
        except OSError as e:
            logger.error(f"Error writing {path}: {e}")
            raise InvalidArgumentError(f"cannot write {path}: {e}")
        return path

    def to_batches(self, data: Batch, batch_size: int) -> List[Batch]:
        """Consecutive batches in order; the last one may be smaller."""
        if batch_size < 1:
            raise InvalidArgumentError(f"batch size must be positive, got {batch_size}")
        return [
            Batch(X=data.X[start : start + batch_size], y=data.y[start : start + batch_size])
            for start in range(0, data.size, batch_size)
        ]

    def split(self, data: Dataset, cfg: RunConfig) -> Tuple[Dataset, Dataset]:
        """Train/test rows; both keep file order so the stream stays ordered."""
        n = data.size
        n_train = int(np.floor(cfg.train_fraction * n))
        test_fraction = 1.0 - cfg.train_fraction if cfg.test_fraction is None else cfg.test_fraction
        n_test = int(np.floor(test_fraction * n + 1e-9))
        if n_train < 1 or n_test < 1:
            raise InvalidArgumentError(
                f"split of {n} rows leaves {n_train} training and {n_test} test rows"
            )

        idx = np.arange(n)
        if cfg.split == SplitMode.SHUFFLE:
            train_idx, rest = train_test_split(
                idx, train_size=n_train, shuffle=True, random_state=cfg.seed
            )
            train_idx = np.sort(train_idx)
            test_idx = np.sort(rest)[:n_test] if n_test < rest.size else np.sort(rest)
        else:
            train_idx = idx[:n_train]
            test_idx = idx[n_train : n_train + n_test]

        def take(rows: np.ndarray) -> Dataset:
            return Dataset(X=data.X[rows], y=data.y[rows], feature_names=data.feature_names)

        return take(train_idx), take(test_idx)

    def normalization(self, first_batch: Batch) -> Normalization:
        return Normalization.from_data(first_batch.X, first_batch.y)

    def normalize(self, data: Batch, stats: Normalization) -> Batch:
        return Batch(X=stats.transform_x(data.X), y=stats.transform_y(data.y))

    def synthesize(self, cfg: Optional[SynthConfig] = None) -> Dataset:
        """Sample each regime from its GP prior on a regular grid, in spatial order."""
        cfg = cfg or SynthConfig()
        rng = np.random.default_rng(cfg.seed)
        x = np.linspace(cfg.low, cfg.high, cfg.n_points)
        y = np.empty_like(x)
        for h, mask in ((cfg.left, x < cfg.split_point), (cfg.right, x >= cfg.split_point)):
            if not np.any(mask):
                continue
            K = kernel_service.k_matrix(h, x[mask])
            L, _ = jitter_cholesky(K, h.signal_variance)
            f = L @ rng.standard_normal(int(mask.sum()))
            if cfg.add_noise:
                f = f + h.sigma_n * rng.standard_normal(f.size)
            y[mask] = f
        logger.info(
            f"Synthesized {cfg.n_points} points on [{cfg.low}, {cfg.high}] split at {cfg.split_point}"
        )
        return Dataset(X=x.reshape(-1, 1), y=y, feature_names=["x"])


dataset_service = DatasetService()
