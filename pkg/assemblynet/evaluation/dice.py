"""
Overlap metrics between two label maps on the same grid.
"""

import numpy as np

from ..errors import DataError, ShapeError
from ..volume.grid import LabelMap

__all__ = ["dice_per_label", "mean_dice"]


def dice_per_label(a: LabelMap, b: LabelMap) -> np.ndarray:
    """
    Dice 2|A ∩ B| / (|A| + |B|) of every foreground label 1 .. L-1; a label absent
    from both maps scores 1.
    O(n)
    :raises ShapeError: if the grids or label counts differ.
    """
    if a.grid != b.grid:
        raise ShapeError(f"cannot compare label maps on grids {a.grid.dims} and {b.grid.dims}")
    if a.num_labels != b.num_labels:
        raise ShapeError(f"label counts differ: {a.num_labels} vs {b.num_labels}")
    size = a.num_labels
    agree = a.labels == b.labels
    intersection = np.bincount(a.labels[agree].ravel(), minlength=size)
    total = a.counts() + b.counts()
    with np.errstate(invalid="ignore", divide="ignore"):
        dice = np.where(total > 0, 2.0 * intersection / total, 1.0)
    return dice[1:]


def mean_dice(a: LabelMap, b: LabelMap) -> float:
    """
    Mean of ``dice_per_label``; background is excluded.
    :raises DataError: if there is no foreground label.
    """
    scores = dice_per_label(a, b)
    if scores.size == 0:
        raise DataError("mean Dice needs at least one foreground label")
    return float(scores.mean())
