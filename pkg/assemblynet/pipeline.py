"""
Whole-model workflow: subjects in, a coarse + fine assembly pair out, and back again
through the run directory on disk.

Run directory::

    config.json                      config echo
    manifest.json                    plans, tile grids, DAG edges, member records, lineage
    weights/<scale>/<i>_<j>_<k>.awts one file per member
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .config import SCHEMA_VERSION, ExperimentConfig, load_config, save_config
from .data.pool import PoolSample
from .errors import ConfigError, DataError
from .inference.segment import CascadeResult, assemble_channels, cascade_segment, segment_assembly
from .nn.unet import UNetConfig
from .nn.weights import read_weights, write_weights
from .training.trainer import TrainPlan
from .training.scheduler import TrainedAssembly, augment_with_flips, finetune_assembly, train_assembly
from .volume.grid import LabelMap, MultiChannelVolume, Volume
from .volume.ops import coarse_grid, downsample_intensity, downsample_label_nn, normalize_intensity, upsample_label_nn
from .volume.tiling import TileGrid, build_tile_grid

__all__ = [
    "Subject",
    "prepare_subject",
    "subject_from_sample",
    "channel_layout",
    "AssemblyNetModel",
    "train_model",
    "segment_subject",
    "save_model",
    "load_model",
    "LoadedRun",
]

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

CONFIG_FILE = "config.json"
MANIFEST_FILE = "manifest.json"
WEIGHTS_DIR = "weights"
# SeedSequence stream for segmenting the training set with the coarse assembly
_CASCADE_STREAM = 7


@dataclass(frozen=True)
class Subject:
    """A normalized T1w image with its optional prior and ground truth."""

    sample_id: str
    t1: Volume
    prior: Optional[LabelMap] = None
    gt: Optional[LabelMap] = None


def prepare_subject(
    sample_id: str,
    t1: Volume,
    prior: Optional[LabelMap] = None,
    gt: Optional[LabelMap] = None,
    mask: Optional[LabelMap] = None,
) -> Subject:
    """
    Normalize ``t1`` inside ``mask`` (the whole volume when no mask is given).
    :raises ShapeError: if the mask, prior or labels live on another grid.
    """
    if mask is None:
        mask = LabelMap(t1.grid, np.ones(t1.grid.shape, dtype=np.uint16), 2)
    for name, item in (("prior", prior), ("gt", gt)):
        if item is not None and item.grid.dims != t1.grid.dims:
            raise DataError(f"subject {sample_id}: {name} dims {item.grid.dims} differ from t1 dims {t1.grid.dims}")
    return Subject(sample_id, normalize_intensity(t1, mask), prior, gt)


def subject_from_sample(sample: PoolSample, rescan: bool = False) -> Subject:
    """Subject built from a pool sample, or from its rescan images."""
    if rescan:
        if sample.rescan is None:
            raise DataError(f"sample {sample.sample_id} has no rescan")
        images = sample.rescan
        return prepare_subject(sample.sample_id, images.t1, images.prior, images.gt, images.mask)
    return prepare_subject(sample.sample_id, sample.t1, sample.prior, sample.gt, sample.mask)


def channel_layout(config: ExperimentConfig, scale: str) -> Tuple[str, ...]:
    """Input channel names of the ``scale`` assembly under the ablation switches."""
    channels: Tuple[str, ...] = ("t1", "prior") if config.use_prior else ("t1",)
    if scale == "fine" and config.cascade:
        channels += ("coarse",)
    return channels


@dataclass
class AssemblyNetModel:
    """
    Coarse and fine assemblies of one trained model. ``coarse`` is None when the
    cascade is switched off.
    """

    fine: TrainedAssembly
    coarse: Optional[TrainedAssembly] = None
    label_pairs: Tuple[Tuple[int, int], ...] = ()

    @property
    def num_labels(self) -> int:
        return self.fine.config.num_classes

    def assemblies(self) -> List[TrainedAssembly]:
        return [a for a in (self.coarse, self.fine) if a is not None]

    def segment(self, subject: Subject, passes: int, rng: np.random.Generator, workers: int = 1) -> CascadeResult:
        return cascade_segment(self.coarse, self.fine, subject.t1, subject.prior, passes, rng, workers)


def _check_subjects(subjects: Sequence[Subject], config: ExperimentConfig, num_labels: int) -> None:
    if not subjects:
        raise DataError("no training subjects")
    dims = subjects[0].t1.grid.dims
    for subject in subjects:
        if subject.gt is None:
            raise DataError(f"subject {subject.sample_id} has no labels to train on")
        if subject.gt.num_labels != num_labels:
            raise DataError(f"subject {subject.sample_id} has {subject.gt.num_labels} labels, expected {num_labels}")
        if config.use_prior and subject.prior is None:
            raise DataError(f"subject {subject.sample_id} has no prior but the config uses one")
        if subject.t1.grid.dims != dims:
            raise DataError(f"subject {subject.sample_id} dims {subject.t1.grid.dims} differ from {dims}")


def _label_channels(channels: Sequence[str], num_labels: int) -> Dict[int, int]:
    return {i: num_labels for i, name in enumerate(channels) if name in ("prior", "coarse")}


def _coarse_inputs(subject: Subject, channels: Sequence[str]) -> MultiChannelVolume:
    prior = downsample_label_nn(subject.prior) if subject.prior is not None else None
    return assemble_channels(channels, downsample_intensity(subject.t1), prior)


def _unet_config(config: ExperimentConfig, channels: Sequence[str], num_labels: int) -> UNetConfig:
    return UNetConfig(
        in_channels=len(channels),
        num_classes=num_labels,
        base_filters=config.unet.base_filters,
        depth=config.unet.depth,
        dropout_rate=config.unet.dropout_rate,
    )


def _fit(
    dataset: List[Tuple[MultiChannelVolume, LabelMap]],
    tile_grid: TileGrid,
    channels: Tuple[str, ...],
    scale: str,
    config: ExperimentConfig,
    num_labels: int,
    label_pairs: Sequence[Tuple[int, int]],
    plan: TrainPlan,
    init: Optional[TrainedAssembly],
) -> TrainedAssembly:
    if config.flip_augmentation:
        dataset = augment_with_flips(dataset, label_pairs, _label_channels(channels, num_labels))
    if init is None:
        return train_assembly(
            tile_grid, dataset, plan, _unet_config(config, channels, num_labels),
            scale=scale, channels=channels, transfer_learning=config.transfer_learning,
        )
    if init.channels != channels or init.tile_grid != tile_grid:
        raise ConfigError(f"{scale} assembly to fine-tune has channels {init.channels}, config asks for {channels}")
    return finetune_assembly(init, dataset, plan)


def train_model(
    subjects: Sequence[Subject],
    config: ExperimentConfig,
    num_labels: int,
    label_pairs: Sequence[Tuple[int, int]] = (),
    init: Optional[AssemblyNetModel] = None,
    plan: Optional[TrainPlan] = None,
) -> AssemblyNetModel:
    """
    Train (or, given ``init``, fine-tune) the coarse assembly on 2x-downsampled
    subjects, segment the training subjects with it, then train the fine assembly
    with the up-sampled coarse segmentation as an extra channel. ``plan`` defaults
    to the config's ``train_plan``.
    :raises DataError: for unlabeled subjects or inconsistent grids.
    :raises MemberTrainingError: if a member fails to train.
    """
    _check_subjects(subjects, config, num_labels)
    plan = plan if plan is not None else config.plan("train_plan")
    label_pairs = tuple(tuple(p) for p in label_pairs)
    grid = subjects[0].t1.grid
    coarse = None
    coarse_ups: List[Optional[LabelMap]] = [None] * len(subjects)
    if config.cascade:
        channels = channel_layout(config, "coarse")
        tile_grid = build_tile_grid(coarse_grid(grid), config.coarse.counts, config.coarse.tile_dims)
        inputs = [_coarse_inputs(s, channels) for s in subjects]
        dataset = [(x, downsample_label_nn(s.gt)) for x, s in zip(inputs, subjects)]
        coarse = _fit(
            dataset, tile_grid, channels, "coarse", config, num_labels, label_pairs,
            plan, init.coarse if init is not None else None,
        )
        workers = plan.workers
        for position, x in enumerate(inputs):
            rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(_CASCADE_STREAM, position)))
            seg = segment_assembly(coarse, x, config.mc_passes, rng, workers)
            coarse_ups[position] = upsample_label_nn(seg, grid)
    channels = channel_layout(config, "fine")
    tile_grid = build_tile_grid(grid, config.fine.counts, config.fine.tile_dims)
    dataset = [
        (assemble_channels(channels, s.t1, s.prior, up), s.gt) for s, up in zip(subjects, coarse_ups)
    ]
    fine = _fit(
        dataset, tile_grid, channels, "fine", config, num_labels, label_pairs,
        plan, init.fine if init is not None else None,
    )
    return AssemblyNetModel(fine, coarse, label_pairs)


def segment_subject(
    model: AssemblyNetModel,
    subject: Subject,
    passes: int = 3,
    rng: Optional[np.random.Generator] = None,
    workers: int = 1,
) -> CascadeResult:
    return model.segment(subject, passes, rng if rng is not None else np.random.default_rng(0), workers)


def _weight_path(scale: str, index: Sequence[int]) -> str:
    return f"{WEIGHTS_DIR}/{scale}/{'_'.join(str(i) for i in index)}.awts"


def save_model(
    run_dir: PathLike,
    model: AssemblyNetModel,
    config: ExperimentConfig,
    extra: Optional[dict] = None,
) -> Path:
    """
    Write config echo, weights and manifest. ``extra`` is merged into the manifest
    (data directory, sample ids per phase, lineage).
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(run_dir / CONFIG_FILE, config)
    assemblies = {}
    for assembly in model.assemblies():
        weights = {}
        for index in assembly.tile_grid.indices():
            relative = _weight_path(assembly.scale, index)
            write_weights(run_dir / relative, assembly.member(index))
            weights["_".join(str(i) for i in index)] = relative
        assemblies[assembly.scale] = {
            **assembly.manifest,
            "scale": assembly.scale,
            "channels": list(assembly.channels),
            "config": assembly.config.to_dict(),
            "tile_grid": assembly.tile_grid.to_dict(),
            "weights": weights,
        }
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "num_labels": model.num_labels,
        "label_pairs": [list(p) for p in model.label_pairs],
        "assemblies": assemblies,
        **(extra or {}),
    }
    (run_dir / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    logger.info("saved model to %s", run_dir)
    return run_dir


class LoadedRun(NamedTuple):
    model: AssemblyNetModel
    config: ExperimentConfig
    manifest: dict


def _load_assembly(run_dir: Path, entry: dict) -> TrainedAssembly:
    tile_grid = TileGrid.from_dict(entry["tile_grid"])
    config = UNetConfig(**entry["config"])
    members = {}
    for index in tile_grid.indices():
        path = run_dir / entry["weights"].get("_".join(str(i) for i in index), _weight_path(entry["scale"], index))
        if not path.exists():
            raise DataError(f"missing weights: {path}")
        members[index] = read_weights(path)
    return TrainedAssembly(tile_grid, entry["scale"], members, config, tuple(entry["channels"]), entry)


def load_model(run_dir: PathLike) -> LoadedRun:
    """
    :raises DataError: "missing weights" when the directory holds no trained run.
    """
    run_dir = Path(run_dir)
    manifest_path = run_dir / MANIFEST_FILE
    if not manifest_path.exists():
        raise DataError(f"missing weights: no trained run at {run_dir}")
    manifest = json.loads(manifest_path.read_text())
    config = load_config(run_dir / CONFIG_FILE)
    assemblies = manifest.get("assemblies", {})
    if "fine" not in assemblies:
        raise DataError(f"missing weights: {run_dir} has no fine assembly")
    fine = _load_assembly(run_dir, assemblies["fine"])
    coarse = _load_assembly(run_dir, assemblies["coarse"]) if "coarse" in assemblies else None
    pairs = tuple(tuple(p) for p in manifest.get("label_pairs", []))
    return LoadedRun(AssemblyNetModel(fine, coarse, pairs), config, manifest)
