"""
Overlapping spatial tiling: the territories of the assembly members.

Per axis with length L, N tiles of extent T are placed at origins
``floor(i * (L - T) / (N - 1))`` so that the first and last tiles touch the faces
of the volume. A configuration is feasible when ``T <= L`` and, for N > 1,
``T >= floor(2 L / (N + 1))`` (the 50% overlap rule up to integer rounding).
"""

import itertools
from dataclasses import dataclass
from typing import Dict, Iterator, List, Sequence, Tuple, Union

import numpy as np

from ..errors import ConfigError
from .grid import GridSpec, LabelMap, MultiChannelVolume, Volume

__all__ = [
    "Tile",
    "TileGrid",
    "build_tile_grid",
    "extract_tile",
    "tiles_covering",
    "TILING_PRESETS",
    "tiling_preset",
]

Triple = Tuple[int, int, int]
_AXES = "xyz"


@dataclass(frozen=True)
class Tile:
    """One member's sub-volume: ``index`` (i, j, k), ``origin`` and ``extent`` in (x, y, z)."""

    index: Triple
    origin: Triple
    extent: Triple

    @property
    def slices(self) -> Tuple[slice, slice, slice]:
        """Array slices in storage order (z, y, x)."""
        (ox, oy, oz), (tx, ty, tz) = self.origin, self.extent
        return (slice(oz, oz + tz), slice(oy, oy + ty), slice(ox, ox + tx))

    def grid(self, spacing: Sequence[float] = (1.0, 1.0, 1.0)) -> GridSpec:
        return GridSpec(self.extent, tuple(spacing))

    def contains(self, voxel: Sequence[int]) -> bool:
        return all(o <= v < o + t for v, o, t in zip(voxel, self.origin, self.extent))


@dataclass(frozen=True)
class TileGrid:
    """
    Set of overlapping tiles covering ``grid``.
    ``origins[a]`` lists the tile offsets along axis a (x, y, z).
    """

    grid: GridSpec
    counts: Triple
    tile_dims: Triple
    origins: Tuple[Tuple[int, ...], Tuple[int, ...], Tuple[int, ...]]

    def __post_init__(self) -> None:
        for axis in range(3):
            origins = self.origins[axis]
            length, tile = self.grid.dims[axis], self.tile_dims[axis]
            if len(origins) != self.counts[axis]:
                raise ConfigError(f"axis {_AXES[axis]}: {len(origins)} origins for {self.counts[axis]} tiles")
            if origins[0] != 0 or origins[-1] != length - tile:
                raise ConfigError(f"axis {_AXES[axis]}: tiles must touch both faces")
            gaps = np.diff(origins)
            if np.any(gaps <= 0) or np.any(gaps > tile):
                raise ConfigError(f"axis {_AXES[axis]}: origins must increase by at most the tile extent")

    @property
    def num_tiles(self) -> int:
        return int(np.prod(self.counts))

    def indices(self) -> List[Triple]:
        """Tile indices in lexicographic order. O(n)"""
        return [tuple(ix) for ix in itertools.product(*(range(n) for n in self.counts))]

    def tile(self, index: Sequence[int]) -> Tile:
        """
        Return the tile at ``index``.
        :raises IndexError: if the index is outside the counts.
        """
        index = tuple(int(i) for i in index)
        if len(index) != 3 or not all(0 <= i < n for i, n in zip(index, self.counts)):
            raise IndexError(f"tile index {index} outside counts {self.counts}")
        origin = tuple(self.origins[axis][index[axis]] for axis in range(3))
        return Tile(index, origin, self.tile_dims)

    def tiles(self) -> Iterator[Tile]:
        for index in self.indices():
            yield self.tile(index)

    def __iter__(self) -> Iterator[Tile]:
        return self.tiles()

    def __len__(self) -> int:
        return self.num_tiles

    def tiles_covering(self, voxel: Sequence[int]) -> List[Triple]:
        """
        Indices of the tiles whose box contains ``voxel``, lexicographically ordered.
        O(N) per axis.
        :raises IndexError: if the voxel is outside the grid.
        """
        if not self.grid.contains(voxel):
            raise IndexError(f"voxel {tuple(voxel)} outside grid {self.grid.dims}")
        per_axis = [
            [i for i, o in enumerate(self.origins[axis]) if o <= voxel[axis] < o + self.tile_dims[axis]]
            for axis in range(3)
        ]
        return [tuple(ix) for ix in itertools.product(*per_axis)]

    def coverage_counts(self) -> np.ndarray:
        """Number of tiles covering each voxel, storage order (z, y, x). O(n * tiles)"""
        counts = np.zeros(self.grid.shape, dtype=np.int32)
        for tile in self.tiles():
            counts[tile.slices] += 1
        return counts

    def max_gap(self, axis: int) -> int:
        origins = self.origins[axis]
        return int(max(np.diff(origins))) if len(origins) > 1 else 0

    def min_overlap(self, axis: int) -> int:
        """Smallest overlap between adjacent tiles along ``axis`` (the extent when N = 1)."""
        return self.tile_dims[axis] - self.max_gap(axis)

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "counts": list(self.counts),
            "tile_dims": list(self.tile_dims),
            "origins": [list(o) for o in self.origins],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TileGrid":
        return cls(
            GridSpec.from_dict(data["grid"]),
            tuple(data["counts"]),
            tuple(data["tile_dims"]),
            tuple(tuple(o) for o in data["origins"]),
        )


def _axis_origins(axis: int, length: int, count: int, tile: int) -> Tuple[int, ...]:
    name = _AXES[axis]
    if count < 1 or tile < 1:
        raise ConfigError(f"axis {name}: counts and tile dims must be >= 1")
    if tile > length:
        raise ConfigError(f"axis {name}: tile extent {tile} exceeds volume length {length}")
    if count == 1:
        if tile != length:
            raise ConfigError(f"axis {name}: a single tile must span the axis ({tile} != {length})")
        return (0,)
    minimum = (2 * length) // (count + 1)
    if tile < minimum:
        raise ConfigError(
            f"axis {name}: tile extent {tile} too small for 50% overlap with {count} tiles over {length} (need >= {minimum})"
        )
    return tuple(i * (length - tile) // (count - 1) for i in range(count))


def build_tile_grid(grid: GridSpec, counts: Sequence[int], tile_dims: Sequence[int]) -> TileGrid:
    """
    Place ``counts`` overlapping tiles of ``tile_dims`` over ``grid``.
    :raises ConfigError: naming the axis whose configuration is infeasible.
    """
    counts = tuple(int(n) for n in counts)
    tile_dims = tuple(int(t) for t in tile_dims)
    if len(counts) != 3 or len(tile_dims) != 3:
        raise ConfigError("tiling needs three counts and three tile dims")
    origins = tuple(_axis_origins(a, grid.dims[a], counts[a], tile_dims[a]) for a in range(3))
    return TileGrid(grid, counts, tile_dims, origins)


def tiles_covering(tg: TileGrid, voxel: Sequence[int]) -> List[Triple]:
    """Function form of ``TileGrid.tiles_covering``."""
    return tg.tiles_covering(voxel)


Extractable = Union[MultiChannelVolume, Volume, LabelMap]


def extract_tile(item: Extractable, tile: Tile) -> Extractable:
    """
    Copy the sub-volume under ``tile`` out of a multi-channel volume, volume or label map.
    :raises IndexError: if the tile reaches outside the grid.
    """
    grid = item.grid
    if any(o < 0 or o + t > d for o, t, d in zip(tile.origin, tile.extent, grid.dims)):
        raise IndexError(f"tile at {tile.origin} with extent {tile.extent} outside grid {grid.dims}")
    sub = tile.grid(grid.spacing)
    if isinstance(item, MultiChannelVolume):
        return MultiChannelVolume(Volume(sub, c.data[tile.slices]) for c in item.channels)
    if isinstance(item, LabelMap):
        return LabelMap(sub, item.labels[tile.slices], item.num_labels)
    if isinstance(item, Volume):
        return Volume(sub, item.data[tile.slices])
    raise TypeError(f"cannot extract a tile from {type(item).__name__}")


TILING_PRESETS: Dict[str, dict] = {
    "mni-fine": {"dims": (181, 217, 181), "counts": (5, 5, 5), "tile_dims": (64, 72, 64)},
    "mni-coarse": {"dims": (91, 109, 91), "counts": (5, 5, 5), "tile_dims": (32, 48, 32)},
    "desk-fine": {"dims": (32, 32, 32), "counts": (3, 3, 3), "tile_dims": (16, 16, 16)},
    "desk-coarse": {"dims": (16, 16, 16), "counts": (3, 3, 3), "tile_dims": (8, 8, 8)},
}


def tiling_preset(name: str) -> TileGrid:
    """
    Build a named tiling preset.
    :raises KeyError: for an unknown preset name.
    """
    preset = TILING_PRESETS[name]
    spacing = (2.0, 2.0, 2.0) if name.endswith("coarse") else (1.0, 1.0, 1.0)
    return build_tile_grid(GridSpec(preset["dims"], spacing), preset["counts"], preset["tile_dims"])
