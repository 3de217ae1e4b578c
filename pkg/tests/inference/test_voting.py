import itertools

import numpy as np
import pytest

from assemblynet.errors import DataError, ShapeError
from assemblynet.inference.voting import (
    VoteAccumulator,
    aggregate_tile_votes,
    finalize_vote,
    tile_argmax,
    vote,
    vote_labels,
)
from assemblynet.volume import GridSpec, build_tile_grid, read_avol
from assemblynet.volume.tiling import Tile


def _brute_force(tile_grid, probs_by_tile, num_labels):
    x_dim, y_dim, z_dim = tile_grid.grid.dims
    out = np.zeros((z_dim, y_dim, x_dim), dtype=np.int64)
    for z, y, x in itertools.product(range(z_dim), range(y_dim), range(x_dim)):
        counts = [0] * num_labels
        for tile in tile_grid.tiles():
            if tile.contains((x, y, z)):
                ox, oy, oz = tile.origin
                local = probs_by_tile[tile.index][:, z - oz, y - oy, x - ox]
                best = max(range(num_labels), key=lambda c: (local[c], -c))
                counts[best] += 1
        out[z, y, x] = max(range(num_labels), key=lambda c: (counts[c], -c))
    return out


def test_matches_brute_force_oracle(rng):
    for _ in range(50):
        dims = tuple(int(d) for d in rng.integers(3, 7, size=3))
        counts = tuple(int(c) for c in rng.integers(1, 3, size=3))
        tile_dims = []
        for d, c in zip(dims, counts):
            low = max(1, (2 * d) // (c + 1)) if c > 1 else d
            tile_dims.append(int(rng.integers(low, d - c + 2)) if c > 1 else d)
        tile_grid = build_tile_grid(GridSpec(dims), counts, tile_dims)
        num_labels = int(rng.integers(2, 5))
        probs = {}
        for tile in tile_grid.tiles():
            x, y, z = tile.extent
            # coarse values so ties actually occur
            raw = rng.integers(0, 3, size=(num_labels, z, y, x)).astype(np.float64)
            probs[tile.index] = raw
        acc = aggregate_tile_votes(tile_grid, probs, num_labels)
        np.testing.assert_array_equal(finalize_vote(acc).labels, _brute_force(tile_grid, probs, num_labels))


def test_tile_argmax_ties_go_low():
    probs = np.zeros((3, 1, 1, 2))
    probs[:, 0, 0, 1] = [0.2, 0.4, 0.4]
    np.testing.assert_array_equal(tile_argmax(probs)[0, 0], [0, 1])


def test_finalize_ties_go_low():
    grid = GridSpec((1, 1, 1))
    acc = VoteAccumulator(grid, 3)
    vote_labels(acc, Tile((0, 0, 0), (0, 0, 0), (1, 1, 1)), np.array([[[2]]]))
    vote_labels(acc, Tile((1, 0, 0), (0, 0, 0), (1, 1, 1)), np.array([[[1]]]))
    assert finalize_vote(acc).labels[0, 0, 0] == 1
    assert acc.total_votes()[0, 0, 0] == 2


def test_uncovered_voxel_is_an_error():
    acc = VoteAccumulator(GridSpec((2, 1, 1)), 2)
    vote_labels(acc, Tile((0, 0, 0), (0, 0, 0), (1, 1, 1)), np.array([[[1]]]))
    with pytest.raises(DataError, match=r"\(1, 0, 0\)"):
        finalize_vote(acc)


def test_vote_checks_tile():
    acc = VoteAccumulator(GridSpec((4, 4, 4)), 2)
    with pytest.raises(IndexError):
        vote(acc, Tile((0, 0, 0), (2, 0, 0), (3, 4, 4)), np.zeros((2, 4, 4, 3)))
    with pytest.raises(ShapeError):
        vote(acc, Tile((0, 0, 0), (0, 0, 0), (2, 2, 2)), np.zeros((3, 2, 2, 2)))
    with pytest.raises(ShapeError):
        vote(acc, Tile((0, 0, 0), (0, 0, 0), (2, 2, 2)), np.zeros((2, 2, 2, 3)))
    with pytest.raises(ShapeError):
        vote_labels(acc, Tile((0, 0, 0), (0, 0, 0), (1, 1, 1)), np.array([[[2]]]))


def test_merge_and_dump(tmp_path):
    grid = GridSpec((2, 2, 2))
    tile = Tile((0, 0, 0), (0, 0, 0), (2, 2, 2))
    a = vote_labels(VoteAccumulator(grid, 2), tile, np.ones((2, 2, 2), dtype=np.int64))
    b = vote_labels(VoteAccumulator(grid, 2), tile, np.zeros((2, 2, 2), dtype=np.int64))
    a.merge(b)
    np.testing.assert_array_equal(a.total_votes(), np.full((2, 2, 2), 2))
    with pytest.raises(ShapeError):
        a.merge(VoteAccumulator(grid, 3))
    a.dump(tmp_path, prefix="case")
    ones = read_avol(tmp_path / "case_1.avol")
    np.testing.assert_array_equal(ones.data, np.ones((2, 2, 2)))
