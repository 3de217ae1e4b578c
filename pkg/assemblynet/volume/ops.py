"""
Pure operations on volumes and label maps: intensity normalization, 2x resampling
between the coarse and fine grids, sagittal flipping and rigid resampling.
"""

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np
from scipy import ndimage

from ..errors import DataError, ShapeError
from .grid import GridSpec, LabelMap, Volume

__all__ = [
    "normalize_intensity",
    "downsample_label_nn",
    "downsample_intensity",
    "coarse_grid",
    "upsample_label_nn",
    "validate_label_pairs",
    "flip_sagittal",
    "RigidTransform",
    "rigid_resample",
]

V = TypeVar("V", Volume, LabelMap)
LabelPairs = Sequence[Tuple[int, int]]


def normalize_intensity(vol: Volume, mask: LabelMap) -> Volume:
    """
    Centre and scale intensities inside ``mask`` (label > 0) to mean 0 and population
    standard deviation 1; voxels outside the mask become 0.
    O(n)
    :raises ShapeError: if the mask grid differs from the volume grid.
    :raises DataError: if fewer than two voxels are in the mask or they are all equal.
    """
    if mask.grid != vol.grid:
        raise ShapeError(f"mask grid {mask.grid.dims} does not match volume grid {vol.grid.dims}")
    inside = mask.binary()
    values = vol.data[inside].astype(np.float64)
    if values.size < 2:
        raise DataError(f"degenerate mask: {values.size} voxel(s) inside")
    mean = values.mean()
    std = values.std()
    if not std > 0:
        raise DataError("degenerate mask: constant intensity inside the mask")
    out = np.zeros(vol.grid.shape, dtype=np.float64)
    out[inside] = (values - mean) / std
    return Volume(vol.grid, out)


def coarse_grid(grid: GridSpec, factor: int = 2) -> GridSpec:
    """Grid with ceil(dims / factor) voxels and factor-times larger spacing."""
    if factor != 2:
        raise ValueError(f"only factor 2 is supported, got {factor}")
    return GridSpec(
        tuple(math.ceil(d / factor) for d in grid.dims),
        tuple(s * factor for s in grid.spacing),
    )


def downsample_label_nn(lm: LabelMap, factor: int = 2) -> LabelMap:
    """
    Nearest-neighbour 2x downsampling: output voxel (i, j, k) takes the label of input
    voxel (2i, 2j, 2k), the lowest-index corner of each 2x2x2 block.
    """
    target = coarse_grid(lm.grid, factor)
    return LabelMap(target, lm.labels[::factor, ::factor, ::factor], lm.num_labels)


def downsample_intensity(vol: Volume, factor: int = 2) -> Volume:
    """
    Block-mean 2x downsampling of intensities onto ``coarse_grid(vol.grid)``.
    Odd axes are padded by repeating the last slice.
    """
    target = coarse_grid(vol.grid, factor)
    data = vol.data.astype(np.float64)
    pad = [(0, (-n) % factor) for n in data.shape]
    data = np.pad(data, pad, mode="edge")
    z, y, x = target.shape
    blocks = data.reshape(z, factor, y, factor, x, factor)
    return Volume(target, blocks.mean(axis=(1, 3, 5)))


def upsample_label_nn(lm: LabelMap, target: GridSpec) -> LabelMap:
    """
    Nearest-neighbour 2x upsampling: output voxel (i, j, k) reads source voxel
    (i // 2, j // 2, k // 2).
    :raises ShapeError: unless every target dim is 2d or 2d - 1 for source dim d.
    """
    for axis, (src, dst) in enumerate(zip(lm.grid.dims, target.dims)):
        if dst not in (2 * src, 2 * src - 1):
            raise ShapeError(
                f"upsample target dim {dst} on axis {'xyz'[axis]} not in {{{2 * src - 1}, {2 * src}}}"
            )
    up = lm.labels
    for axis in range(3):
        up = np.repeat(up, 2, axis=axis)
    z, y, x = target.shape
    return LabelMap(target, up[:z, :y, :x], lm.num_labels)


def validate_label_pairs(label_pairs: Iterable[Sequence[int]], num_labels: Optional[int] = None) -> Tuple[Tuple[int, int], ...]:
    """
    Check that left/right label pairs are disjoint (no label used twice) and in range.
    :raises DataError: on overlapping or out-of-range pairs.
    """
    pairs = tuple((int(a), int(b)) for a, b in label_pairs)
    seen: set = set()
    for a, b in pairs:
        if a == b or a in seen or b in seen:
            raise DataError(f"label pairs overlap at ({a}, {b})")
        seen.update((a, b))
        if min(a, b) < 0 or (num_labels is not None and max(a, b) >= num_labels):
            raise DataError(f"label pair ({a}, {b}) outside [0, {num_labels})")
    return pairs


def flip_sagittal(item: V, label_pairs: LabelPairs = ()) -> V:
    """
    Mirror along the mid-sagittal plane: x index i maps to dims.x - 1 - i.
    For label maps the labels of each (left, right) pair are swapped as well,
    so applying the flip twice is the identity.
    """
    if isinstance(item, LabelMap):
        pairs = validate_label_pairs(label_pairs, item.num_labels)
        lookup = np.arange(item.num_labels, dtype=np.uint16)
        for a, b in pairs:
            lookup[a], lookup[b] = b, a
        return LabelMap(item.grid, lookup[item.labels[:, :, ::-1]], item.num_labels)
    if isinstance(item, Volume):
        validate_label_pairs(label_pairs)
        return Volume(item.grid, item.data[:, :, ::-1])
    raise TypeError(f"cannot flip {type(item).__name__}")


@dataclass(frozen=True)
class RigidTransform:
    """
    Rotation (Euler angles about x, y, z, radians) about the grid centre followed by
    a translation in voxels. A point p moves to R (p - c) + c + t.
    """

    rotation: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    translation: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        rotation = tuple(float(a) for a in self.rotation)
        translation = tuple(float(t) for t in self.translation)
        if len(rotation) != 3 or len(translation) != 3:
            raise ValueError("rigid transform needs three angles and three translations")
        for angle in rotation:
            if not -math.pi < angle <= math.pi:
                raise ValueError(f"angle {angle} outside (-pi, pi]")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    def matrix(self) -> np.ndarray:
        """3x3 rotation matrix acting on (x, y, z) coordinates, R = Rz Ry Rx."""
        ax, ay, az = self.rotation
        cx, sx = math.cos(ax), math.sin(ax)
        cy, sy = math.cos(ay), math.sin(ay)
        cz, sz = math.cos(az), math.sin(az)
        rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
        ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
        rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
        return rz @ ry @ rx

    def apply(self, points: np.ndarray, grid: GridSpec) -> np.ndarray:
        """Map (n, 3) xyz points forward through the transform."""
        centre = (np.asarray(grid.dims, dtype=np.float64) - 1.0) / 2.0
        return (np.asarray(points, dtype=np.float64) - centre) @ self.matrix().T + centre + np.asarray(self.translation)

    def is_identity(self) -> bool:
        return not any(self.rotation) and not any(self.translation)

    def to_dict(self) -> dict:
        return {"rotation": list(self.rotation), "translation": list(self.translation)}

    @classmethod
    def from_dict(cls, data: dict) -> "RigidTransform":
        return cls(tuple(data["rotation"]), tuple(data["translation"]))


_XYZ_TO_ZYX = np.array([[0, 0, 1], [0, 1, 0], [1, 0, 0]], dtype=np.float64)


def rigid_resample(item: V, transform: RigidTransform, inverse: bool = False) -> V:
    """
    Resample ``item`` so that its content moves by ``transform`` (or back by its exact
    inverse when ``inverse`` is set). Intensities use trilinear interpolation, labels
    nearest neighbour; samples from outside the grid are 0.
    """
    grid = item.grid
    rotation = transform.matrix()
    centre = (np.asarray(grid.dims, dtype=np.float64) - 1.0) / 2.0
    shift = np.asarray(transform.translation, dtype=np.float64)
    if inverse:
        # out[p] = in[R (p - c) + c + t]
        matrix, offset = rotation, centre + shift - rotation @ centre
    else:
        # out[q] = in[R^T (q - c - t) + c]
        matrix = rotation.T
        offset = centre - matrix @ (centre + shift)
    matrix = _XYZ_TO_ZYX @ matrix @ _XYZ_TO_ZYX
    offset = _XYZ_TO_ZYX @ offset
    if isinstance(item, LabelMap):
        moved = ndimage.affine_transform(item.labels, matrix, offset=offset, order=0, mode="constant", cval=0)
        return LabelMap(grid, moved, item.num_labels)
    moved = ndimage.affine_transform(item.data.astype(np.float64), matrix, offset=offset, order=1, mode="constant", cval=0.0)
    return Volume(grid, moved)
