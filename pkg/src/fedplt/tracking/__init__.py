from pathlib import Path
from typing import Mapping

import mlflow

from clog import get_logger
from fedplt.config.utils import flatten


logger = get_logger(__name__)

# MLflow caps parameter values at 6000 characters.
MAX_PARAM_LENGTH = 500


class RunTracker:
    """
    MLflow run around one simulation.

    When disabled every call is a no-op, so the engine can log unconditionally. Nothing logged
    here feeds back into the computation.
    """

    def __init__(self, enabled: bool, experiment: str = "fedplt", run_name: str | None = None):
        self.enabled = enabled
        self.experiment = experiment
        self.run_name = run_name
        self._run = None

    def __enter__(self) -> "RunTracker":
        if self.enabled:
            mlflow.set_experiment(self.experiment)
            self._run = mlflow.start_run(run_name=self.run_name)
            logger.info(f"MLflow run {self._run.info.run_id} started in experiment '{self.experiment}'")
        return self

    def __exit__(self, exc_type, exc, tb):
        if self._run is not None:
            mlflow.end_run(status="FAILED" if exc_type else "FINISHED")
            self._run = None
        return False

    @property
    def active(self) -> bool:
        return self._run is not None

    def log_config(self, config: Mapping):
        if not self.active:
            return
        params = {key: str(value)[:MAX_PARAM_LENGTH] for key, value in flatten(config).items()}
        mlflow.log_params(params)

    def log_round(self, round_idx: int, metrics: Mapping[str, float | None]):
        if not self.active:
            return
        finite = {key: float(value) for key, value in metrics.items() if value is not None}
        mlflow.log_metrics(finite, step=round_idx)

    def log_artifact(self, path: str | Path):
        if not self.active:
            return
        mlflow.log_artifact(str(path))
