import csv
import json
import logging
from pathlib import Path
from typing import List, Optional, Union

from app.exceptions import InvalidArgumentError
from app.experiment.model import CompareRow, Metrics, Predictions, RunResult


logger = logging.getLogger(__name__)


class ResultRepository:
    """Writes run results, per-point predictions and comparison tables."""

    def _prepare(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise InvalidArgumentError(f"cannot create directory for {path}: {e}")
        return path

    def write_result(self, result: Union[RunResult, Metrics], path: Union[str, Path]) -> Path:
        path = self._prepare(path)
        try:
            path.write_text(result.model_dump_json(indent=2))
        except OSError as e:
            logger.error(f"Error writing result to {path}: {e}")
            raise InvalidArgumentError(f"cannot write {path}: {e}")
        logger.info(f"Wrote result to {path}")
        return path

    def write_predictions(
        self,
        predictions: Predictions,
        path: Union[str, Path],
        feature_names: Optional[List[str]] = None,
    ) -> Path:
        """One row per point: inputs, prediction, variance, model index and target if known."""
        path = self._prepare(path)
        X = predictions.X.reshape(predictions.X.shape[0], -1)
        names = feature_names or [f"x{i + 1}" for i in range(X.shape[1])]
        header = [*names, "prediction", "variance", "model_index"]
        if predictions.y_true is not None:
            header.append("y")
        try:
            with path.open("w", newline="", encoding="utf-8") as handle:
                writer = csv.writer(handle)
                writer.writerow(header)
                for i, row in enumerate(X):
                    cells = [repr(float(v)) for v in row]
                    cells += [
                        repr(float(predictions.mean[i])),
                        repr(float(predictions.variance[i])),
                        str(int(predictions.model_index[i])),
                    ]
                    if predictions.y_true is not None:
                        cells.append(repr(float(predictions.y_true[i])))
                    writer.writerow(cells)
        except OSError as e:
            logger.error(f"Error writing predictions to {path}: {e}")
            raise InvalidArgumentError(f"cannot write {path}: {e}")
        logger.info(f"Wrote {X.shape[0]} predictions to {path}")
        return path

    def write_comparison(self, rows: List[CompareRow], path: Union[str, Path]) -> Path:
        """CSV when the path ends in .csv, JSON otherwise."""
        path = self._prepare(path)
        records = [row.model_dump() for row in rows]
        try:
            if path.suffix.lower() == ".csv":
                with path.open("w", newline="", encoding="utf-8") as handle:
                    writer = csv.DictWriter(handle, fieldnames=list(CompareRow.model_fields))
                    writer.writeheader()
                    writer.writerows(records)
            else:
                path.write_text(json.dumps(records, indent=2))
        except OSError as e:
            logger.error(f"Error writing comparison to {path}: {e}")
            raise InvalidArgumentError(f"cannot write {path}: {e}")
        logger.info(f"Wrote {len(rows)} comparison rows to {path}")
        return path


result_repository = ResultRepository()
