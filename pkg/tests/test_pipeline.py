import json

import numpy as np
import pytest

from assemblynet.errors import ConfigError, DataError
from assemblynet.pipeline import (
    channel_layout,
    load_model,
    prepare_subject,
    save_model,
    segment_subject,
    train_model,
)
from assemblynet.volume import GridSpec, LabelMap, Volume


@pytest.fixture
def trained(tiny_subjects, tiny_config):
    return train_model(tiny_subjects, tiny_config, 3)


def test_prepare_subject_normalizes(rng):
    grid = GridSpec((4, 4, 4))
    t1 = Volume(grid, rng.random(grid.shape) * 100.0)
    subject = prepare_subject("s", t1)
    assert subject.t1.data.mean() == pytest.approx(0.0, abs=1e-5)
    assert subject.t1.data.std() == pytest.approx(1.0, rel=1e-4)
    with pytest.raises(DataError):
        prepare_subject("s", t1, gt=LabelMap(GridSpec((2, 2, 2)), np.zeros((2, 2, 2)), 3))


def test_channel_layout(tiny_config):
    assert channel_layout(tiny_config, "coarse") == ("t1", "prior")
    assert channel_layout(tiny_config, "fine") == ("t1", "prior", "coarse")
    ablated = tiny_config.replace(use_prior=False, cascade=False)
    assert channel_layout(ablated, "fine") == ("t1",)


def test_train_model_builds_cascade(trained, tiny_subjects):
    assert trained.num_labels == 3
    assert trained.coarse.tile_grid.grid.dims == (4, 4, 4)
    assert trained.fine.channels == ("t1", "prior", "coarse")
    assert trained.fine.tile_grid.num_tiles == 8
    result = segment_subject(trained, tiny_subjects[0], passes=2, rng=np.random.default_rng(0))
    assert result.fine_seg.grid.dims == (8, 8, 8)
    assert result.coarse_seg.grid.dims == (4, 4, 4)


def test_training_is_reproducible(trained, tiny_subjects, tiny_config):
    again = train_model(tiny_subjects, tiny_config.replace(workers=1), 3)
    for index in trained.fine.tile_grid.indices():
        assert again.fine.member(index).equals(trained.fine.member(index))
    assert again.coarse.member((0, 0, 0)).equals(trained.coarse.member((0, 0, 0)))


def test_ablations(tiny_subjects, tiny_config):
    config = tiny_config.replace(use_prior=False, cascade=False, transfer_learning=False, flip_augmentation=False)
    model = train_model(tiny_subjects, config, 3)
    assert model.coarse is None
    assert model.fine.channels == ("t1",)
    assert model.fine.manifest["transfer_learning"] is False
    assert model.segment(tiny_subjects[1], 1, np.random.default_rng(2)).coarse_seg is None


def test_training_input_checks(tiny_subjects, tiny_config):
    with pytest.raises(DataError):
        train_model([], tiny_config, 3)
    with pytest.raises(DataError, match="expected 4"):
        train_model(tiny_subjects, tiny_config, 4)
    unlabeled = [prepare_subject("u", tiny_subjects[0].t1, tiny_subjects[0].prior)]
    with pytest.raises(DataError, match="no labels"):
        train_model(unlabeled, tiny_config, 3)
    no_prior = [prepare_subject("n", tiny_subjects[0].t1, gt=tiny_subjects[0].gt)]
    with pytest.raises(DataError, match="no prior"):
        train_model(no_prior, tiny_config, 3)


def test_finetune_requires_same_layout(trained, tiny_subjects, tiny_config):
    tuned = train_model(tiny_subjects[:1], tiny_config, 3, init=trained, plan=tiny_config.plan("finetune_plan"))
    assert tuned.fine.manifest["phase"] == "finetune"
    assert not tuned.fine.member((0, 0, 0)).equals(trained.fine.member((0, 0, 0)))
    with pytest.raises(ConfigError):
        train_model(tiny_subjects, tiny_config.replace(use_prior=False), 3, init=trained)


def test_save_and_load_round_trip(trained, tiny_subjects, tiny_config, tmp_path):
    save_model(tmp_path / "run", trained, tiny_config, extra={"data_dir": "pool"})
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert manifest["num_labels"] == 3
    assert manifest["data_dir"] == "pool"
    assert set(manifest["assemblies"]) == {"coarse", "fine"}
    assert (tmp_path / "run" / "weights" / "fine" / "1_0_1.awts").exists()
    run = load_model(tmp_path / "run")
    assert run.config == tiny_config
    for index in trained.fine.tile_grid.indices():
        assert run.model.fine.member(index).equals(trained.fine.member(index))
    before = segment_subject(trained, tiny_subjects[2], 2, np.random.default_rng(5))
    after = segment_subject(run.model, tiny_subjects[2], 2, np.random.default_rng(5))
    assert before.fine_seg == after.fine_seg


def test_load_missing_run(trained, tiny_config, tmp_path):
    with pytest.raises(DataError, match="missing weights"):
        load_model(tmp_path / "nothing")
    save_model(tmp_path / "run", trained, tiny_config)
    (tmp_path / "run" / "weights" / "fine" / "0_0_0.awts").unlink()
    with pytest.raises(DataError, match="missing weights"):
        load_model(tmp_path / "run")
