"""
Seeded desk-scale experiments on 32^3 phantoms. Deselected by default: run with ``pytest -m slow``.
"""

import numpy as np
import pytest

from assemblynet.cli import main
from assemblynet.config import ExperimentConfig
from assemblynet.data.pool import load_pool
from assemblynet.data.priors import noisy_rater
from assemblynet.evaluation.consistency import consistency_scores
from assemblynet.evaluation.dice import mean_dice
from assemblynet.pipeline import subject_from_sample, train_model
from assemblynet.ssl import SslPlan, pseudo_label, train_student
from assemblynet.volume import upsample_label_nn

pytestmark = pytest.mark.slow

SEED = 20210419


@pytest.fixture(scope="module")
def pool(tmp_path_factory):
    out = tmp_path_factory.mktemp("experiments") / "pool"
    assert main([
        "phantom-gen", "--out", str(out), "--n-labeled", "10", "--n-unlabeled", "6", "--n-test", "8",
        "--n-rescan", "5", "--seed", str(SEED), "--stratify",
    ]) == 0
    return load_pool(out)


def _subjects(pool, role):
    return [subject_from_sample(s) for s in pool.samples(role)]


def _test_scores(model, subjects, seed=SEED):
    fine, coarse = [], []
    for position, subject in enumerate(subjects):
        result = model.segment(subject, 3, np.random.default_rng([seed, position]))
        fine.append(mean_dice(result.fine_seg, subject.gt))
        if result.coarse_seg is not None:
            coarse.append(mean_dice(upsample_label_nn(result.coarse_seg, subject.t1.grid), subject.gt))
    return np.mean(fine), (np.mean(coarse) if coarse else None)


def test_cascade_and_assembly_gains(pool):
    labeled, test = _subjects(pool, "labeled"), _subjects(pool, "test")
    config = ExperimentConfig(seed=SEED)
    cascade = train_model(labeled, config, pool.num_labels, pool.label_pairs)
    fine, coarse = _test_scores(cascade, test)
    assert fine >= coarse + 0.01

    flat = config.replace(cascade=False, fine={"counts": [2, 2, 2], "tile_dims": [24, 24, 24]})
    assembly = train_model(labeled, flat, pool.num_labels, pool.label_pairs)
    single = train_model(
        labeled, flat.replace(fine={"counts": [1, 1, 1], "tile_dims": [32, 32, 32]}), pool.num_labels, pool.label_pairs
    )
    assembly_dice, _ = _test_scores(assembly, test)
    single_dice, _ = _test_scores(single, test)
    assert assembly_dice >= single_dice + 0.01


def test_student_matches_teacher(pool):
    labeled, unlabeled, test = _subjects(pool, "labeled"), _subjects(pool, "unlabeled"), _subjects(pool, "test")
    config = ExperimentConfig(seed=SEED)
    teacher = train_model(labeled, config, pool.num_labels, pool.label_pairs)
    pseudo = pseudo_label(teacher, unlabeled, config.mc_passes, config.seed)
    result = train_student(pseudo, labeled, SslPlan.from_config(config), config, pool.num_labels, pool.label_pairs)
    pseudo_ids = set(result.lineage["pseudo_phase"]["sample_ids"])
    assert pseudo_ids == set(pool.ids("unlabeled"))
    assert not pseudo_ids & set(pool.ids("labeled"))
    teacher_dice, _ = _test_scores(teacher, test)
    student_dice, _ = _test_scores(result.student, test)
    assert student_dice >= teacher_dice


def test_method_is_more_consistent_than_rater(pool):
    config = ExperimentConfig(seed=SEED)
    model = train_model(_subjects(pool, "labeled"), config, pool.num_labels, pool.label_pairs)
    intra, expert = [], []
    for position, sample in enumerate(pool.samples("rescan")):
        rng = np.random.default_rng([SEED, position])
        auto_scan = model.segment(subject_from_sample(sample), 3, rng).fine_seg
        auto_rescan = model.segment(subject_from_sample(sample, rescan=True), 3, rng).fine_seg
        scores = consistency_scores(
            auto_scan, auto_rescan, noisy_rater(sample.gt, rng), noisy_rater(sample.rescan.gt, rng), sample.transform
        )
        intra.append(scores.intra_method)
        expert.append(scores.method_expert)
    assert np.mean(intra) > np.mean(expert)
