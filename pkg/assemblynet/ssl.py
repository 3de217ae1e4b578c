"""
Teacher-student semi-supervised training.

A trained model segments an unlabeled pool; a student is trained from scratch on
those pseudo-labels and then fine-tuned on the labeled set. The student can teach
the next generation.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np

from .config import ExperimentConfig
from .errors import AssemblyNetError, DataError, NumericalError, UsageError
from .pipeline import AssemblyNetModel, Subject, train_model
from .training.trainer import TrainPlan

__all__ = ["SslPlan", "StudentResult", "Generation", "pseudo_label", "train_student", "ssl_generations"]

logger = logging.getLogger(__name__)

# SeedSequence stream of the pseudo-labeling passes
_PSEUDO_STREAM = 11


@dataclass(frozen=True)
class SslPlan:
    pseudo_plan: TrainPlan
    finetune_plan: TrainPlan
    generations: int = 1

    def __post_init__(self) -> None:
        if self.generations < 1:
            raise ValueError(f"generations must be >= 1, got {self.generations}")

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> "SslPlan":
        return cls(config.plan("pseudo_plan"), config.plan("finetune_plan"), config.ssl.generations)


def _tagged(exc: BaseException, position: int, sample_id: str) -> AssemblyNetError:
    message = f"pseudo-labeling sample {position} ({sample_id}): {exc}"
    if isinstance(exc, (DataError, UsageError, NumericalError)):
        return type(exc)(message)
    return DataError(message)


def pseudo_label(
    teacher: AssemblyNetModel,
    unlabeled: Sequence[Subject],
    passes: int,
    seed: int,
    workers: int = 1,
    generation: int = 1,
) -> List[Subject]:
    """
    Replace the labels of every unlabeled subject by the teacher's cascade
    segmentation. Samples run in parallel; output order follows the input and each
    sample has its own random stream, so ``workers`` does not change the result.
    :raises DataError: (or the original error class) naming the failing sample.
    """

    def label(item: Tuple[int, Subject]) -> Subject:
        position, subject = item
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_PSEUDO_STREAM, generation, position)))
        try:
            result = teacher.segment(subject, passes, rng)
        except Exception as exc:
            raise _tagged(exc, position, subject.sample_id) from exc
        return replace(subject, gt=result.fine_seg)

    items = list(enumerate(unlabeled))
    if not items:
        return []
    with ThreadPoolExecutor(max_workers=max(1, workers), thread_name_prefix="pseudo") as pool:
        labeled = list(pool.map(label, items))
    logger.info("pseudo-labeled %d samples (generation %d)", len(labeled), generation)
    return labeled


class StudentResult(NamedTuple):
    pseudo_model: AssemblyNetModel
    student: AssemblyNetModel
    lineage: dict


def _ids(subjects: Sequence[Subject]) -> List[str]:
    return [s.sample_id for s in subjects]


def _check_nonempty(pseudo: Sequence[Subject], labeled: Sequence[Subject]) -> None:
    if not pseudo or not labeled:
        raise DataError("the pseudo-labeled and labeled sets must both be nonempty")


def _check_disjoint(unlabeled: Sequence[Subject], labeled: Sequence[Subject]) -> None:
    _check_nonempty(unlabeled, labeled)
    shared = sorted(set(_ids(unlabeled)) & set(_ids(labeled)))
    if shared:
        raise DataError(f"unlabeled and labeled pools share sample ids: {shared}")


def train_student(
    pseudo: Sequence[Subject],
    labeled: Sequence[Subject],
    plan: SslPlan,
    config: ExperimentConfig,
    num_labels: int,
    label_pairs: Sequence[Tuple[int, int]] = (),
) -> StudentResult:
    """
    Train both assemblies from scratch on ``pseudo`` (transfer DAG included), then
    fine-tune the weights on ``labeled``. The model before fine-tuning is returned too.
    :raises DataError: if either set is empty.
    """
    _check_nonempty(pseudo, labeled)
    logger.info("training student on %d pseudo-labeled samples", len(pseudo))
    pseudo_model = train_model(pseudo, config, num_labels, label_pairs, plan=plan.pseudo_plan)
    logger.info("fine-tuning student on %d labeled samples", len(labeled))
    student = train_model(labeled, config, num_labels, label_pairs, init=pseudo_model, plan=plan.finetune_plan)
    lineage = {
        "pseudo_phase": {"sample_ids": _ids(pseudo), "plan": plan.pseudo_plan.to_dict()},
        "finetune_phase": {"sample_ids": _ids(labeled), "plan": plan.finetune_plan.to_dict()},
    }
    return StudentResult(pseudo_model, student, lineage)


@dataclass
class Generation:
    index: int
    teacher_id: str
    student_id: str
    pseudo_ids: List[str]
    labeled_ids: List[str]
    result: StudentResult

    def to_dict(self) -> dict:
        return {
            "generation": self.index,
            "teacher": self.teacher_id,
            "student": self.student_id,
            "pseudo_ids": list(self.pseudo_ids),
            "labeled_ids": list(self.labeled_ids),
            "lineage": self.result.lineage,
        }


def ssl_generations(
    teacher: AssemblyNetModel,
    unlabeled: Sequence[Subject],
    labeled: Sequence[Subject],
    plan: SslPlan,
    config: ExperimentConfig,
    teacher_id: str = "teacher",
) -> List[Generation]:
    """
    Run ``plan.generations`` rounds; generation g is taught by the fine-tuned student
    of generation g - 1 (the given teacher for g = 1).
    """
    _check_disjoint(unlabeled, labeled)
    chain: List[Generation] = []
    current, current_id = teacher, teacher_id
    for g in range(1, plan.generations + 1):
        pseudo = pseudo_label(current, unlabeled, config.mc_passes, config.seed, config.resolved_workers, g)
        result = train_student(pseudo, labeled, plan, config, current.num_labels, current.label_pairs)
        student_id = f"generation-{g}"
        chain.append(Generation(g, current_id, student_id, _ids(pseudo), _ids(labeled), result))
        current, current_id = result.student, student_id
    return chain
