import numpy as np
import pytest

from assemblynet.data.phantom import PhantomSpec, generate_phantom
from assemblynet.data.priors import MAX_DISPLACEMENT, displacement_field, encode_prior_channel, noisy_rater, synthetic_prior
from assemblynet.errors import DataError
from assemblynet.evaluation.dice import mean_dice
from assemblynet.volume import GridSpec, LabelMap


def test_displacement_field_peak(rng):
    field = displacement_field((6, 7, 8), 2.5, rng)
    assert field.shape == (3, 6, 7, 8)
    assert np.abs(field).max() == pytest.approx(2.5)


def test_zero_strength_is_identity(small_labels, rng):
    assert synthetic_prior(small_labels, 0.0, rng) == small_labels


def test_prior_keeps_labels_and_grid(small_labels):
    prior = synthetic_prior(small_labels, 1.0, np.random.default_rng(3))
    assert prior.grid == small_labels.grid
    assert prior.num_labels == small_labels.num_labels
    assert prior.label_set() <= small_labels.label_set()


def test_prior_is_seeded(small_labels):
    a = synthetic_prior(small_labels, 0.5, np.random.default_rng(3))
    b = synthetic_prior(small_labels, 0.5, np.random.default_rng(3))
    assert a == b


def test_prior_strength_range(small_labels, rng):
    with pytest.raises(ValueError):
        synthetic_prior(small_labels, 1.5, rng)
    with pytest.raises(ValueError):
        synthetic_prior(small_labels, -0.1, rng)


def test_weak_prior_overlaps_truth():
    grid = GridSpec((24, 24, 24))
    labels = np.zeros(grid.shape, dtype=np.uint16)
    labels[4:20, 4:20, 4:20] = 1
    gt = LabelMap(grid, labels, 2)
    prior = synthetic_prior(gt, 0.25, np.random.default_rng(0))
    # at most one voxel of displacement: the 16^3 cube keeps most of its voxels
    assert 0.25 * MAX_DISPLACEMENT == 1.0
    assert (prior.labels == labels).mean() > 0.8


def test_encode_prior_channel(small_labels):
    channel = encode_prior_channel(small_labels)
    assert channel.data.dtype == np.float32
    np.testing.assert_allclose(np.unique(channel.data), [0.0, 0.5, 1.0])
    with pytest.raises(DataError):
        encode_prior_channel(LabelMap(small_labels.grid, np.zeros(small_labels.grid.shape), 1))


def test_noisy_rater(small_labels):
    rater = noisy_rater(small_labels, np.random.default_rng(1))
    assert rater.grid == small_labels.grid
    assert rater.num_labels == 3


def test_full_strength_prior_on_default_phantom():
    gt = generate_phantom(PhantomSpec(seed=42)).gt
    strong = mean_dice(synthetic_prior(gt, 1.0, np.random.default_rng(42)), gt)
    weak = mean_dice(synthetic_prior(gt, 0.25, np.random.default_rng(42)), gt)
    assert strong == mean_dice(synthetic_prior(gt, 1.0, np.random.default_rng(42)), gt)
    # same field shape, four times the amplitude
    assert 0.0 < strong < weak < 1.0
    assert weak > 0.6
