import numpy as np
import pytest

from assemblynet.errors import ShapeError
from assemblynet.evaluation.consistency import consistency_scores, scan_rescan_consistency
from assemblynet.volume import GridSpec, LabelMap, RigidTransform, rigid_resample


@pytest.fixture
def blob():
    grid = GridSpec((16, 16, 16))
    labels = np.zeros(grid.shape, dtype=np.uint16)
    labels[4:12, 4:12, 4:8] = 1
    labels[4:12, 4:12, 8:12] = 2
    return LabelMap(grid, labels, 3)


def test_identity_transform(blob):
    assert scan_rescan_consistency(blob, blob, RigidTransform()) == 1.0


def test_translation_is_undone_exactly(blob):
    transform = RigidTransform(translation=(2.0, -1.0, 1.0))
    moved = rigid_resample(blob, transform)
    assert scan_rescan_consistency(blob, moved, transform) == 1.0
    # compared without the inverse the maps no longer agree
    assert scan_rescan_consistency(blob, moved, RigidTransform()) < 1.0


def test_small_rotation_is_mostly_undone(blob):
    transform = RigidTransform(rotation=(0.0, 0.0, 0.05), translation=(1.0, 0.0, 0.0))
    moved = rigid_resample(blob, transform)
    assert scan_rescan_consistency(blob, moved, transform) > 0.75


def test_grid_mismatch(blob):
    other = LabelMap(GridSpec((8, 8, 8)), np.zeros((8, 8, 8)), 3)
    with pytest.raises(ShapeError):
        scan_rescan_consistency(blob, other, RigidTransform())


def test_three_scores(blob):
    transform = RigidTransform(translation=(1.0, 0.0, 0.0))
    manual = blob
    auto = LabelMap(blob.grid, np.where(blob.labels == 2, 1, blob.labels), 3)
    scores = consistency_scores(auto, rigid_resample(auto, transform), manual, rigid_resample(manual, transform), transform)
    assert scores.intra_method == 1.0
    assert scores.intra_rater == 1.0
    assert scores.method_expert < 1.0
    assert scores.method_expert == pytest.approx(scan_rescan_consistency(manual, rigid_resample(auto, transform), transform))


@pytest.mark.parametrize("p", [0.5, 0.3])
def test_independent_random_maps_match_expected_overlap(p):
    # label 1 drawn with probability p in each map: expected Dice 2p^2 / 2p = p
    rng = np.random.default_rng(99)
    grid = GridSpec((32, 32, 32))
    scan = LabelMap(grid, (rng.random(grid.shape) < p).astype(np.uint16), 2)
    rescan = LabelMap(grid, (rng.random(grid.shape) < p).astype(np.uint16), 2)
    assert scan_rescan_consistency(scan, rescan, RigidTransform()) == pytest.approx(p, abs=0.02)
