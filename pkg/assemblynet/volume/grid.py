"""
Core 3D grid types.

Voxel layout: arrays are indexed ``[z, y, x]`` so that a C-order ravel is row-major
with x fastest. ``GridSpec.dims`` and ``GridSpec.spacing`` are given in (x, y, z) order.
All types are immutable after construction; their arrays are read-only.
"""

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence, Tuple

import numpy as np

from ..errors import DataError, ShapeError

__all__ = ["GridSpec", "Volume", "LabelMap", "MultiChannelVolume", "LABEL_DTYPE", "INTENSITY_DTYPE"]

Triple = Tuple[int, int, int]

LABEL_DTYPE = np.dtype("<u2")
INTENSITY_DTYPE = np.dtype("<f4")


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class GridSpec:
    """
    Voxel grid: ``dims`` voxels per axis and ``spacing`` in mm per voxel, both (x, y, z).
    """

    dims: Triple
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self) -> None:
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        if len(dims) != 3 or len(spacing) != 3:
            raise ValueError("GridSpec needs three dims and three spacings")
        if any(d < 1 for d in dims):
            raise ValueError(f"dims must all be >= 1, got {dims}")
        if any(not s > 0 for s in spacing):
            raise ValueError(f"spacing must all be > 0, got {spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)

    @property
    def shape(self) -> Triple:
        """Array shape in storage order (z, y, x)."""
        x, y, z = self.dims
        return (z, y, x)

    @property
    def num_voxels(self) -> int:
        return int(np.prod(self.dims))

    def contains(self, voxel: Sequence[int]) -> bool:
        """True if the (x, y, z) voxel lies inside the grid."""
        return len(voxel) == 3 and all(0 <= v < d for v, d in zip(voxel, self.dims))

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "spacing": list(self.spacing)}

    @classmethod
    def from_dict(cls, data: dict) -> "GridSpec":
        return cls(tuple(data["dims"]), tuple(data.get("spacing", (1.0, 1.0, 1.0))))


class Volume:
    """
    Scalar intensity field over a grid (float32).
    """

    __slots__ = ("grid", "data")

    def __init__(self, grid: GridSpec, data: np.ndarray) -> None:
        """
        :param grid: voxel grid.
        :param data: array of shape ``grid.shape`` (z, y, x); copied and cast to float32.
        :raises ShapeError: if the array shape does not match the grid.
        :raises DataError: if any value is not finite.
        """
        array = np.array(data, dtype=INTENSITY_DTYPE, copy=True)
        if array.shape != grid.shape:
            raise ShapeError(f"volume data shape {array.shape} does not match grid shape {grid.shape}")
        if not np.all(np.isfinite(array)):
            raise DataError("volume contains non-finite values")
        self.grid = grid
        self.data = _frozen(array)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Volume):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.data, other.data)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"Volume(dims={self.grid.dims}, spacing={self.grid.spacing})"


class LabelMap:
    """
    Integer label field over a grid (uint16). Label 0 is background.
    """

    __slots__ = ("grid", "labels", "num_labels")

    def __init__(self, grid: GridSpec, labels: np.ndarray, num_labels: int) -> None:
        """
        :param num_labels: label count L including background; every voxel must be < L.
        :raises ShapeError: on shape mismatch.
        :raises DataError: on negative or out-of-range labels.
        """
        num_labels = int(num_labels)
        if num_labels < 1 or num_labels > np.iinfo(LABEL_DTYPE).max + 1:
            raise DataError(f"num_labels out of range: {num_labels}")
        raw = np.asarray(labels)
        if raw.shape != grid.shape:
            raise ShapeError(f"label shape {raw.shape} does not match grid shape {grid.shape}")
        if raw.size and (raw.min() < 0 or raw.max() >= num_labels):
            raise DataError(f"labels must lie in [0, {num_labels}), got [{raw.min()}, {raw.max()}]")
        self.grid = grid
        self.labels = _frozen(np.array(raw, dtype=LABEL_DTYPE, copy=True))
        self.num_labels = num_labels

    def label_set(self) -> set:
        """Distinct labels present. O(n)"""
        return set(int(v) for v in np.unique(self.labels))

    def counts(self) -> np.ndarray:
        """Voxel count per label, length ``num_labels``. O(n)"""
        return np.bincount(self.labels.ravel(), minlength=self.num_labels)

    def binary(self) -> np.ndarray:
        """Boolean foreground mask (label > 0)."""
        return self.labels > 0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelMap):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.num_labels == other.num_labels
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"LabelMap(dims={self.grid.dims}, num_labels={self.num_labels})"


class MultiChannelVolume:
    """
    Ordered channels sharing one grid; the network input.
    """

    __slots__ = ("grid", "channels")

    def __init__(self, channels: Iterable[Volume]) -> None:
        channels = tuple(channels)
        if not channels:
            raise DataError("a multi-channel volume needs at least one channel")
        grid = channels[0].grid
        for index, channel in enumerate(channels):
            if channel.grid != grid:
                raise ShapeError(f"channel {index} grid {channel.grid.dims} differs from {grid.dims}")
        self.grid = grid
        self.channels = channels

    def __len__(self) -> int:
        return len(self.channels)

    def __iter__(self) -> Iterator[Volume]:
        return iter(self.channels)

    def as_tensor(self) -> np.ndarray:
        """Stack into a float64 tensor of shape (channel, z, y, x)."""
        return np.stack([c.data for c in self.channels]).astype(np.float64)

    @classmethod
    def from_tensor(cls, grid: GridSpec, tensor: np.ndarray) -> "MultiChannelVolume":
        return cls(Volume(grid, channel) for channel in tensor)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MultiChannelVolume):
            return NotImplemented
        return self.channels == other.channels

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"MultiChannelVolume(channels={len(self.channels)}, dims={self.grid.dims})"
