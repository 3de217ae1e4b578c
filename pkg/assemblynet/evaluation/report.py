"""
CSV report rows with a fixed column set.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from ..errors import DataError

__all__ = ["COLUMNS", "ReportRow", "summarize", "write_report", "read_report"]

logger = logging.getLogger(__name__)

COLUMNS = ("method", "dataset", "mean_dice", "std_dice", "p_vs_baseline", "wall_seconds")


def _number(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6f}"


@dataclass(frozen=True)
class ReportRow:
    method: str
    dataset: str
    mean_dice: float
    std_dice: float
    p_vs_baseline: Optional[float] = None
    wall_seconds: Optional[float] = None

    def cells(self) -> List[str]:
        return [
            self.method,
            self.dataset,
            _number(self.mean_dice),
            _number(self.std_dice),
            _number(self.p_vs_baseline),
            _number(self.wall_seconds),
        ]


def summarize(
    method: str,
    dataset: str,
    scores: Sequence[float],
    p_vs_baseline: Optional[float] = None,
    wall_seconds: Optional[float] = None,
) -> ReportRow:
    """
    Mean and sample standard deviation (0 for a single score) of per-subject scores.
    :raises DataError: if there are no scores.
    """
    values = np.asarray(scores, dtype=np.float64)
    if values.size == 0:
        raise DataError(f"no scores for {method} on {dataset}")
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return ReportRow(method, dataset, float(values.mean()), std, p_vs_baseline, wall_seconds)


def write_report(path: Union[str, Path], rows: Iterable[ReportRow]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = list(rows)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in rows:
            writer.writerow(row.cells())
    logger.info("wrote %d report rows to %s", len(rows), path)
    return path


def read_report(path: Union[str, Path]) -> List[dict]:
    """
    Rows as dicts of strings.
    :raises DataError: if the header is not the fixed column set.
    """
    with Path(path).open(newline="") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise DataError(f"{path}: unexpected report columns {reader.fieldnames}")
        return list(reader)
