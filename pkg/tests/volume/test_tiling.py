import itertools

import numpy as np
import pytest

from assemblynet.errors import ConfigError
from assemblynet.volume import (
    GridSpec,
    MultiChannelVolume,
    Volume,
    build_tile_grid,
    extract_tile,
    tiles_covering,
    tiling_preset,
)
from assemblynet.volume.tiling import Tile


def test_mni_fine_origins():
    tg = tiling_preset("mni-fine")
    assert tg.origins[0] == (0, 29, 58, 87, 117)
    assert tg.origins[1] == (0, 36, 72, 108, 145)
    assert tg.origins[2] == (0, 29, 58, 87, 117)
    assert tg.num_tiles == 125
    assert tg.min_overlap(0) == 34
    assert tg.min_overlap(1) == 35
    for axis in range(3):
        assert tg.min_overlap(axis) >= -(-tg.tile_dims[axis] // 2) - 1


def test_mni_fine_full_coverage():
    assert tiling_preset("mni-fine").coverage_counts().min() >= 1


def test_single_tile_axis():
    tg = build_tile_grid(GridSpec((10, 10, 10)), (1, 1, 1), (10, 10, 10))
    assert tg.origins == ((0,), (0,), (0,))


def test_infeasible_configs_name_axis():
    grid = GridSpec((20, 20, 20))
    with pytest.raises(ConfigError, match="axis y"):
        build_tile_grid(grid, (2, 3, 2), (14, 5, 14))
    with pytest.raises(ConfigError, match="axis x"):
        build_tile_grid(grid, (1, 1, 1), (10, 20, 20))
    with pytest.raises(ConfigError, match="axis z"):
        build_tile_grid(grid, (2, 2, 2), (14, 14, 21))


def test_random_feasible_configs_cover_grid(rng):
    for _ in range(30):
        length = int(rng.integers(4, 25))
        count = int(rng.integers(2, 5))
        minimum = max(1, (2 * length) // (count + 1))
        highest = length - count + 1
        if minimum > highest:
            continue
        tile = int(rng.integers(minimum, highest + 1))
        tg = build_tile_grid(GridSpec((length, length, 3)), (count, count, 1), (tile, tile, 3))
        assert tg.coverage_counts().min() >= 1
        gap_bound = -(-(length - tile) // (count - 1))
        assert tg.max_gap(0) <= gap_bound
        assert tg.min_overlap(0) >= tile - gap_bound


def test_deterministic():
    grid = GridSpec((17, 13, 11))
    assert build_tile_grid(grid, (3, 2, 2), (9, 8, 7)) == build_tile_grid(grid, (3, 2, 2), (9, 8, 7))


def test_tiles_covering_origin_voxel():
    tg = build_tile_grid(GridSpec((10, 10, 10)), (2, 2, 2), (7, 7, 7))
    assert tiles_covering(tg, (0, 0, 0)) == [(0, 0, 0)]


def test_tiles_covering_brute_force_small_grid():
    tg = build_tile_grid(GridSpec((10, 10, 10)), (2, 2, 2), (7, 7, 7))
    tiles = list(tg.tiles())
    for voxel in itertools.product(range(10), repeat=3):
        expected = [t.index for t in tiles if t.contains(voxel)]
        found = tg.tiles_covering(voxel)
        assert found == expected
        assert len(found) in (1, 2, 4, 8)


def test_tiles_covering_mni_voxel():
    tg = tiling_preset("mni-fine")
    voxel = (60, 100, 90)
    expected = [t.index for t in tg.tiles() if t.contains(voxel)]
    assert tg.tiles_covering(voxel) == expected
    assert expected


def test_tiles_covering_out_of_bounds():
    tg = build_tile_grid(GridSpec((4, 4, 4)), (1, 1, 1), (4, 4, 4))
    with pytest.raises(IndexError):
        tg.tiles_covering((4, 0, 0))
    with pytest.raises(IndexError):
        tg.tile((1, 0, 0))


def test_extract_full_tile_is_copy(ramp_volume):
    mc = MultiChannelVolume([ramp_volume])
    tile = Tile((0, 0, 0), (0, 0, 0), ramp_volume.grid.dims)
    assert extract_tile(mc, tile) == mc


def test_extract_ramp_offset(ramp_volume):
    mc = MultiChannelVolume([ramp_volume])
    sub = extract_tile(mc, Tile((1, 0, 0), (1, 0, 0), (2, 2, 2)))
    assert sub.grid.dims == (2, 2, 2)
    assert set(np.unique(sub.channels[0].data)) == {1.0, 2.0}
    np.testing.assert_array_equal(sub.channels[0].data[0, 0], [1.0, 2.0])


def test_extract_out_of_bounds(ramp_volume):
    with pytest.raises(IndexError):
        extract_tile(ramp_volume, Tile((0, 0, 0), (3, 0, 0), (2, 2, 2)))


def test_tile_grid_json_roundtrip():
    tg = tiling_preset("desk-fine")
    assert type(tg).from_dict(tg.to_dict()) == tg
    assert tg.origins[0] == (0, 8, 16)


def test_duplicate_origins_rejected():
    with pytest.raises(ConfigError, match="axis x"):
        build_tile_grid(GridSpec((10, 10, 10)), (3, 1, 1), (10, 10, 10))
