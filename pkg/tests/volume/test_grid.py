import numpy as np
import pytest

from assemblynet.errors import DataError, ShapeError
from assemblynet.volume import GridSpec, LabelMap, MultiChannelVolume, Volume


def test_gridspec_shape_is_zyx():
    grid = GridSpec((4, 3, 2), (1.0, 2.0, 3.0))
    assert grid.shape == (2, 3, 4)
    assert grid.num_voxels == 24
    assert grid.contains((3, 2, 1))
    assert not grid.contains((4, 0, 0))


def test_gridspec_rejects_bad_values():
    with pytest.raises(ValueError):
        GridSpec((0, 1, 1))
    with pytest.raises(ValueError):
        GridSpec((1, 1, 1), (1.0, 0.0, 1.0))
    with pytest.raises(ValueError):
        GridSpec((1, 1))


def test_gridspec_dict_roundtrip():
    grid = GridSpec((5, 6, 7), (2.0, 2.0, 2.0))
    assert GridSpec.from_dict(grid.to_dict()) == grid


def test_volume_is_float32_and_readonly(ramp_volume):
    assert ramp_volume.data.dtype == np.float32
    with pytest.raises(ValueError):
        ramp_volume.data[0, 0, 0] = 1.0


def test_volume_validation():
    grid = GridSpec((2, 2, 2))
    with pytest.raises(ShapeError):
        Volume(grid, np.zeros((2, 2, 3)))
    data = np.zeros(grid.shape)
    data[0, 0, 0] = np.nan
    with pytest.raises(DataError):
        Volume(grid, data)


def test_labelmap_range_check():
    grid = GridSpec((2, 2, 2))
    with pytest.raises(DataError):
        LabelMap(grid, np.full(grid.shape, 3), 3)
    with pytest.raises(DataError):
        LabelMap(grid, np.full(grid.shape, -1), 3)
    with pytest.raises(ShapeError):
        LabelMap(grid, np.zeros((1, 2, 2)), 3)


def test_labelmap_counts_and_set(small_labels):
    counts = small_labels.counts()
    assert counts.sum() == small_labels.grid.num_voxels
    assert counts[1] == 4 * 4 * 3
    assert counts[2] == 4 * 4 * 3
    assert small_labels.label_set() == {0, 1, 2}
    assert small_labels.labels.dtype == np.uint16


def test_labelmap_equality():
    grid = GridSpec((2, 2, 2))
    a = LabelMap(grid, np.zeros(grid.shape), 2)
    b = LabelMap(grid, np.zeros(grid.shape), 2)
    c = LabelMap(grid, np.zeros(grid.shape), 3)
    assert a == b
    assert a != c


def test_multichannel_requires_shared_grid(ramp_volume):
    other = Volume(GridSpec((2, 2, 2)), np.zeros((2, 2, 2)))
    with pytest.raises(ShapeError):
        MultiChannelVolume([ramp_volume, other])
    with pytest.raises(DataError):
        MultiChannelVolume([])


def test_multichannel_tensor_roundtrip(ramp_volume):
    mc = MultiChannelVolume([ramp_volume, ramp_volume])
    tensor = mc.as_tensor()
    assert tensor.shape == (2, 2, 3, 4)
    assert tensor.dtype == np.float64
    assert MultiChannelVolume.from_tensor(mc.grid, tensor) == mc
