"""
Atlas-prior stand-ins: ground truth warped by a smooth random displacement field,
and the scalar encoding that feeds a label map to the network as one channel.
"""

import numpy as np
from scipy import ndimage

from ..errors import DataError
from ..volume.grid import LabelMap, Volume

__all__ = ["MAX_DISPLACEMENT", "displacement_field", "synthetic_prior", "encode_prior_channel", "noisy_rater"]

# voxels of displacement at strength 1
MAX_DISPLACEMENT = 4.0
_MODES = 3


def displacement_field(shape, max_displacement: float, rng: np.random.Generator) -> np.ndarray:
    """
    Smooth field of shape (3, z, y, x): per component a sum of three low-frequency
    cosine modes, scaled so the largest absolute displacement is ``max_displacement``.
    """
    grids = np.meshgrid(*(np.arange(n) / max(n, 1) for n in shape), indexing="ij")
    field = np.zeros((3, *shape))
    for component in range(3):
        for _ in range(_MODES):
            amplitude = rng.uniform(-1.0, 1.0)
            frequencies = rng.integers(0, 3, size=3)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            argument = sum(f * g for f, g in zip(frequencies, grids))
            field[component] += amplitude * np.cos(2.0 * np.pi * argument + phase)
    peak = np.abs(field).max()
    if peak > 0:
        field *= max_displacement / peak
    return field


def synthetic_prior(gt: LabelMap, strength: float, rng: np.random.Generator) -> LabelMap:
    """
    Warp ``gt`` with a smooth displacement of at most ``strength * MAX_DISPLACEMENT``
    voxels, nearest-neighbour resampled; only labels already in ``gt`` can appear.
    :raises ValueError: if strength is outside [0, 1].
    """
    if not 0.0 <= strength <= 1.0:
        raise ValueError(f"strength must lie in [0, 1], got {strength}")
    if strength == 0.0:
        return LabelMap(gt.grid, gt.labels, gt.num_labels)
    shape = gt.grid.shape
    field = displacement_field(shape, strength * MAX_DISPLACEMENT, rng)
    coords = np.indices(shape, dtype=np.float64) + field
    warped = ndimage.map_coordinates(gt.labels, coords, order=0, mode="nearest")
    return LabelMap(gt.grid, warped, gt.num_labels)


def encode_prior_channel(lm: LabelMap) -> Volume:
    """
    label / (num_labels - 1): background 0.0, the last label 1.0.
    :raises DataError: if the map has fewer than two labels.
    """
    if lm.num_labels < 2:
        raise DataError(f"cannot encode a label map with {lm.num_labels} label(s)")
    return Volume(lm.grid, lm.labels.astype(np.float64) / (lm.num_labels - 1))


def noisy_rater(gt: LabelMap, rng: np.random.Generator, strength: float = 0.25) -> LabelMap:
    """A 'manual' segmentation: the ground truth under a weak smooth deformation."""
    return synthetic_prior(gt, strength, rng)
