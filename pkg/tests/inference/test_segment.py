import numpy as np
import pytest

from assemblynet.errors import ShapeError
from assemblynet.inference.segment import (
    accumulate_assembly_votes,
    assemble_channels,
    cascade_segment,
    mc_dropout_infer,
    segment_assembly,
)
from assemblynet.nn.unet import Mode, UNetConfig, init_params, unet_forward
from assemblynet.training.scheduler import TrainedAssembly
from assemblynet.volume import GridSpec, LabelMap, MultiChannelVolume, Volume, build_tile_grid


def _assembly(dims, counts, tile_dims, channels, num_labels, scale="fine", seed=0):
    tile_grid = build_tile_grid(GridSpec(dims), counts, tile_dims)
    config = UNetConfig(len(channels), num_labels, base_filters=2, depth=1, dropout_rate=0.3)
    rng = np.random.default_rng(seed)
    members = {index: init_params(config, rng) for index in tile_grid.indices()}
    return TrainedAssembly(tile_grid, scale, members, config, tuple(channels))


@pytest.fixture
def t1():
    grid = GridSpec((8, 8, 8))
    return Volume(grid, np.random.default_rng(5).random(grid.shape))


@pytest.fixture
def prior(t1):
    labels = np.zeros(t1.grid.shape, dtype=np.uint16)
    labels[2:6, 2:6, 2:6] = 1
    labels[3:5, 3:5, 3:5] = 2
    return LabelMap(t1.grid, labels, 3)


def test_mc_dropout_mean(rng):
    params = init_params(UNetConfig(1, 3, base_filters=2, depth=1, dropout_rate=0.5), rng)
    x = rng.random((1, 4, 4, 4))
    single = mc_dropout_infer(params, x, 1, np.random.default_rng(8))
    np.testing.assert_allclose(single, unet_forward(params, x, Mode.STOCHASTIC, rng=np.random.default_rng(8)))
    mean = mc_dropout_infer(params, x, 5, np.random.default_rng(8))
    np.testing.assert_allclose(mean.sum(axis=0), np.ones((4, 4, 4)))
    with pytest.raises(ValueError):
        mc_dropout_infer(params, x, 0, rng)


def test_assemble_channels(t1, prior):
    inputs = assemble_channels(("t1", "prior"), t1, prior)
    assert len(inputs) == 2
    np.testing.assert_allclose(inputs.channels[1].data, prior.labels / 2.0)
    with pytest.raises(ShapeError):
        assemble_channels(("t1", "prior"), t1)
    with pytest.raises(ShapeError):
        assemble_channels(("t1", "edges"), t1, prior)
    small = LabelMap(GridSpec((4, 4, 4)), np.zeros((4, 4, 4)), 3)
    with pytest.raises(ShapeError):
        assemble_channels(("t1", "prior"), t1, small)


def test_votes_do_not_depend_on_workers(t1, prior):
    assembly = _assembly((8, 8, 8), (2, 2, 2), (6, 6, 6), ("t1", "prior"), 3)
    inputs = assemble_channels(assembly.channels, t1, prior)
    serial = accumulate_assembly_votes(assembly, inputs, 3, np.random.default_rng(1), workers=1)
    parallel = accumulate_assembly_votes(assembly, inputs, 3, np.random.default_rng(1), workers=4)
    np.testing.assert_array_equal(serial.counts, parallel.counts)
    # one vote per covering tile, whatever the passes
    np.testing.assert_array_equal(serial.total_votes(), assembly.tile_grid.coverage_counts())
    assert serial.total_votes().max() == 8


def test_segment_assembly_shape(t1, prior):
    assembly = _assembly((8, 8, 8), (2, 2, 2), (6, 6, 6), ("t1",), 3)
    seg = segment_assembly(assembly, MultiChannelVolume([t1]), 2, np.random.default_rng(0))
    assert seg.grid.dims == (8, 8, 8)
    assert seg.num_labels == 3


def test_input_mismatch_names_stage(t1):
    assembly = _assembly((8, 8, 8), (2, 2, 2), (6, 6, 6), ("t1", "prior"), 3)
    with pytest.raises(ShapeError, match="fine stage"):
        accumulate_assembly_votes(assembly, MultiChannelVolume([t1]), 1, np.random.default_rng(0))


def test_cascade(t1, prior):
    coarse = _assembly((4, 4, 4), (1, 1, 1), (4, 4, 4), ("t1", "prior"), 3, scale="coarse", seed=1)
    fine = _assembly((8, 8, 8), (2, 2, 2), (6, 6, 6), ("t1", "prior", "coarse"), 3, seed=2)
    result = cascade_segment(coarse, fine, t1, prior, passes=2, rng=np.random.default_rng(4))
    assert result.coarse_seg.grid.dims == (4, 4, 4)
    assert result.fine_seg.grid.dims == (8, 8, 8)
    np.testing.assert_array_equal(result.fine_seg.labels, np.argmax(result.fine_votes.counts, axis=0))
    again = cascade_segment(coarse, fine, t1, prior, passes=2, rng=np.random.default_rng(4), workers=3)
    assert again.fine_seg == result.fine_seg
    assert again.coarse_seg == result.coarse_seg


def test_cascade_stage_errors(t1, prior):
    fine = _assembly((8, 8, 8), (2, 2, 2), (6, 6, 6), ("t1", "prior", "coarse"), 3)
    with pytest.raises(ShapeError, match="coarse segmentation"):
        cascade_segment(None, fine, t1, prior)
    wrong_coarse = _assembly((6, 6, 6), (1, 1, 1), (6, 6, 6), ("t1", "prior"), 3, scale="coarse")
    with pytest.raises(ShapeError, match="coarse stage"):
        cascade_segment(wrong_coarse, fine, t1, prior)
    other = Volume(GridSpec((6, 6, 6)), np.zeros((6, 6, 6)))
    with pytest.raises(ShapeError, match="fine stage"):
        cascade_segment(None, fine, other, None)


def test_fine_only_model(t1):
    fine = _assembly((8, 8, 8), (2, 2, 2), (6, 6, 6), ("t1",), 3)
    result = cascade_segment(None, fine, t1, None, passes=1)
    assert result.coarse_seg is None
    assert result.fine_seg.num_labels == 3
