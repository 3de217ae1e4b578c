import numpy as np
import pytest

from assemblynet.volume import GridSpec, LabelMap, Volume


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid8():
    return GridSpec((8, 8, 8))


@pytest.fixture
def ramp_volume():
    grid = GridSpec((4, 3, 2))
    z, y, x = np.indices(grid.shape)
    return Volume(grid, x.astype(np.float32))


@pytest.fixture
def small_labels(grid8):
    labels = np.zeros(grid8.shape, dtype=np.uint16)
    labels[2:6, 2:6, 1:4] = 1
    labels[2:6, 2:6, 4:7] = 2
    return LabelMap(grid8, labels, 3)


@pytest.fixture
def tiny_config():
    from assemblynet.config import ExperimentConfig

    return ExperimentConfig.from_dict({
        "seed": 3,
        "workers": 2,
        "mc_passes": 2,
        "coarse": {"counts": [1, 1, 1], "tile_dims": [4, 4, 4]},
        "fine": {"counts": [2, 2, 2], "tile_dims": [6, 6, 6]},
        "unet": {"base_filters": 2, "depth": 1, "dropout_rate": 0.2},
        "train_plan": {"epochs_main": 1, "epochs_avg": 1, "lr": 0.01},
        "ssl": {
            "pseudo_plan": {"epochs_main": 1, "epochs_avg": 0, "lr": 0.01},
            "finetune_plan": {"epochs_main": 1, "epochs_avg": 0, "lr": 0.01},
        },
    })


@pytest.fixture
def tiny_subjects():
    from assemblynet.data.phantom import PhantomSpec, generate_pool
    from assemblynet.data.priors import synthetic_prior
    from assemblynet.pipeline import prepare_subject

    template = PhantomSpec(dims=(8, 8, 8), num_labels=3)
    subjects = []
    for position, (sample_id, phantom) in enumerate(generate_pool(3, True, 21, template=template)):
        prior = synthetic_prior(phantom.gt, 0.25, np.random.default_rng(position))
        subjects.append(prepare_subject(sample_id, phantom.t1, prior, phantom.gt, phantom.mask))
    return subjects
