"""
Hard-vote aggregation over overlapping tiles.

Every tile votes once per voxel it covers, for its argmax class (ties go to the
lowest class). The final label of a voxel is the class with most votes, again with
ties to the lowest label.
"""

from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

from ..errors import DataError, ShapeError
from ..volume.avol import write_avol
from ..volume.grid import GridSpec, LabelMap, Volume
from ..volume.tiling import Tile, TileGrid

__all__ = ["VoteAccumulator", "tile_argmax", "vote", "vote_labels", "finalize_vote", "aggregate_tile_votes"]


class VoteAccumulator:
    """
    Per-voxel vote counts, shape (num_labels, z, y, x).
    """

    __slots__ = ("grid", "num_labels", "counts")

    def __init__(self, grid: GridSpec, num_labels: int) -> None:
        if num_labels < 1:
            raise ValueError(f"num_labels must be >= 1, got {num_labels}")
        self.grid = grid
        self.num_labels = int(num_labels)
        self.counts = np.zeros((self.num_labels, *grid.shape), dtype=np.int32)

    def total_votes(self) -> np.ndarray:
        """Votes received per voxel, (z, y, x)."""
        return self.counts.sum(axis=0)

    def merge(self, other: "VoteAccumulator") -> "VoteAccumulator":
        if other.grid != self.grid or other.num_labels != self.num_labels:
            raise ShapeError("cannot merge accumulators over different grids or label counts")
        self.counts += other.counts
        return self

    def dump(self, directory: Union[str, Path], prefix: str = "votes") -> None:
        """Write one float AVOL volume of counts per class."""
        directory = Path(directory)
        for label in range(self.num_labels):
            write_avol(directory / f"{prefix}_{label}.avol", Volume(self.grid, self.counts[label]))

    def __repr__(self) -> str:
        return f"VoteAccumulator(dims={self.grid.dims}, num_labels={self.num_labels})"


def tile_argmax(tile_probs: np.ndarray) -> np.ndarray:
    """Per-voxel class with the highest probability; ties to the lowest class."""
    return np.argmax(tile_probs, axis=0)


def _check_tile(acc: VoteAccumulator, tile: Tile, spatial: Sequence[int]) -> None:
    if any(o < 0 or o + t > d for o, t, d in zip(tile.origin, tile.extent, acc.grid.dims)):
        raise IndexError(f"tile {tile.index} at {tile.origin} lies outside the accumulator grid {acc.grid.dims}")
    x, y, z = tile.extent
    if tuple(spatial) != (z, y, x):
        raise ShapeError(f"tile {tile.index} output has spatial shape {tuple(spatial)}, tile extent is {tile.extent}")


def vote_labels(acc: VoteAccumulator, tile: Tile, labels: np.ndarray) -> VoteAccumulator:
    """Add one vote per voxel for the given tile-local labels."""
    _check_tile(acc, tile, labels.shape)
    if labels.size and int(labels.max()) >= acc.num_labels:
        raise ShapeError(f"tile {tile.index} voted for label {int(labels.max())} >= {acc.num_labels}")
    acc.counts[(slice(None), *tile.slices)] += np.arange(acc.num_labels).reshape(-1, 1, 1, 1) == labels[None]
    return acc


def vote(acc: VoteAccumulator, tile: Tile, tile_probs: np.ndarray) -> VoteAccumulator:
    """
    Hard vote of one tile: each covered voxel gets +1 for the tile's argmax class.
    :raises IndexError: if the tile lies outside the accumulator grid.
    :raises ShapeError: if the probabilities do not match the tile extent or label count.
    """
    if tile_probs.shape[0] != acc.num_labels:
        raise ShapeError(f"tile {tile.index} has {tile_probs.shape[0]} classes, accumulator {acc.num_labels}")
    _check_tile(acc, tile, tile_probs.shape[1:])
    return vote_labels(acc, tile, tile_argmax(tile_probs))


def finalize_vote(acc: VoteAccumulator) -> LabelMap:
    """
    Majority label per voxel, ties to the lowest label.
    :raises DataError: if a voxel received no vote.
    """
    uncovered = acc.total_votes() == 0
    if np.any(uncovered):
        z, y, x = np.argwhere(uncovered)[0]
        raise DataError(f"voxel {(int(x), int(y), int(z))} received no vote")
    return LabelMap(acc.grid, np.argmax(acc.counts, axis=0), acc.num_labels)


def aggregate_tile_votes(tile_grid: TileGrid, probs_by_tile: Mapping, num_labels: int) -> VoteAccumulator:
    """Vote every tile's probabilities into a fresh accumulator, in lexicographic tile order."""
    acc = VoteAccumulator(tile_grid.grid, num_labels)
    for tile in tile_grid.tiles():
        vote(acc, tile, probs_by_tile[tile.index])
    return acc
