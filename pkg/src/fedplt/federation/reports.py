import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import pandas as pd

from fedplt.federation.data_model import RoundRecord


METRICS_COLUMNS = ["round", "loss", "accuracy", "mg", "ep", "bytes_up", "bytes_down", "participants"]
CSV_FLOAT_FORMAT = "%.10g"


def history_frame(history: Sequence[RoundRecord]) -> pd.DataFrame:
    """One row per round; the fixed metrics columns first, then cost accounting and per-layer dynamics."""
    if not history:
        return pd.DataFrame(columns=METRICS_COLUMNS)
    frame = pd.DataFrame([record.to_row() for record in history])
    rest = [c for c in frame.columns if c not in METRICS_COLUMNS]
    return frame[METRICS_COLUMNS + rest]


def write_metrics_csv(history: Sequence[RoundRecord], path: str | Path) -> Path:
    path = Path(path)
    history_frame(history).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, na_rep="")
    return path


@dataclass(frozen=True)
class TargetReport:
    """First round reaching a target accuracy and what it cost; costs are inf when never reached."""
    target_accuracy: float
    round: int | None
    bytes_up: float
    bytes_total: float
    flops: float

    @property
    def reached(self) -> bool:
        return self.round is not None


@dataclass(frozen=True)
class BudgetReport:
    """Best accuracy reached while cumulative traffic stayed within `budget_bytes`."""
    budget_bytes: float
    best_accuracy: float | None
    round: int | None
    bytes_total: float


def target_report(history: Sequence[RoundRecord], target_accuracy: float) -> TargetReport:
    for record in history:
        if record.accuracy >= target_accuracy:
            return TargetReport(
                target_accuracy=target_accuracy,
                round=record.round,
                bytes_up=float(record.cumulative_bytes_up),
                bytes_total=float(record.cumulative_bytes_up + record.cumulative_bytes_down),
                flops=record.cumulative_flops,
            )
    return TargetReport(target_accuracy, None, math.inf, math.inf, math.inf)


def budget_report(history: Sequence[RoundRecord], budget_bytes: float) -> BudgetReport:
    best = None
    for record in history:
        spent = record.cumulative_bytes_up + record.cumulative_bytes_down
        if spent > budget_bytes:
            break
        if best is None or record.accuracy > best.accuracy:
            best = record
    if best is None:
        return BudgetReport(budget_bytes, None, None, 0.0)
    return BudgetReport(
        budget_bytes=budget_bytes,
        best_accuracy=best.accuracy,
        round=best.round,
        bytes_total=float(best.cumulative_bytes_up + best.cumulative_bytes_down),
    )
