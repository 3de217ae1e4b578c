"""
Soft Dice loss over all classes, background included.
"""

from typing import Tuple, Union

import numpy as np

from ..errors import ShapeError
from ..volume.grid import LabelMap

__all__ = ["DICE_EPS", "one_hot", "dice_loss"]

DICE_EPS = 1e-5

Target = Union[LabelMap, np.ndarray]


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """
    Integer labels (z, y, x) to a float64 one-hot field (num_classes, z, y, x).
    :raises ValueError: if a label is >= num_classes.
    """
    labels = np.asarray(labels)
    if labels.size and int(labels.max()) >= num_classes:
        raise ValueError(f"label {int(labels.max())} out of range for {num_classes} classes")
    return (np.arange(num_classes).reshape(-1, 1, 1, 1) == labels[None]).astype(np.float64)


def _target_field(target: Target, num_classes: int) -> np.ndarray:
    if isinstance(target, LabelMap):
        return one_hot(target.labels, num_classes)
    target = np.asarray(target)
    if np.issubdtype(target.dtype, np.integer) and target.ndim == 3:
        return one_hot(target, num_classes)
    return target.astype(np.float64)


def dice_loss(probs: np.ndarray, target: Target) -> Tuple[float, np.ndarray]:
    """
    loss = 1 - mean_c (2 * sum(p_c * g_c) + eps) / (sum(p_c) + sum(g_c) + eps)

    :param probs: class probabilities (C, z, y, x).
    :param target: a LabelMap, an integer (z, y, x) array, or a soft one-hot field
        (C, z, y, x) such as a MixUp target.
    :return: (loss, gradient with respect to probs)
    :raises ShapeError: if the target does not match the probabilities.
    """
    probs = np.asarray(probs, dtype=np.float64)
    num_classes = probs.shape[0]
    g = _target_field(target, num_classes)
    if g.shape != probs.shape:
        raise ShapeError(f"target shape {g.shape} does not match probabilities {probs.shape}")
    axes = (1, 2, 3)
    intersection = (probs * g).sum(axis=axes)
    numerator = 2.0 * intersection + DICE_EPS
    denominator = probs.sum(axis=axes) + g.sum(axis=axes) + DICE_EPS
    loss = 1.0 - float(np.mean(numerator / denominator))
    # d/dp of N/D with N = 2*sum(p*g) + eps, D = sum(p) + sum(g) + eps
    per_class = (2.0 * g * denominator[:, None, None, None] - numerator[:, None, None, None])
    grad = -per_class / (denominator ** 2)[:, None, None, None] / num_classes
    return loss, grad
