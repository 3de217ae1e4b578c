"""
Assembly training: one U-Net per tile, trained in transfer-DAG order on a thread pool.

A member starts only after its DAG parent finished; its random stream is derived from
the global seed and its tile index, so the trained assembly does not depend on the
number of workers or on completion order.
"""

import logging
import threading
import time
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..errors import MemberTrainingError, ShapeError
from ..nn.unet import UNetConfig, UNetParams, init_params
from ..volume.grid import LabelMap, MultiChannelVolume, Volume
from ..volume.ops import flip_sagittal
from ..volume.tiling import TileGrid, extract_tile
from .dag import build_transfer_dag
from .queues import TaskQueue
from .trainer import TrainOutcome, TrainPlan, train_unet, transfer_weights

__all__ = [
    "SCALES",
    "TrainedAssembly",
    "EventLog",
    "MemberEvent",
    "member_rng",
    "round_to_float32",
    "train_assembly",
    "finetune_assembly",
    "augment_with_flips",
]

logger = logging.getLogger(__name__)

Triple = Tuple[int, int, int]
Sample = Tuple[MultiChannelVolume, LabelMap]

SCALES = ("coarse", "fine")
PHASE_TRAIN = 0
PHASE_FINETUNE = 1


def member_rng(seed: int, scale: str, index: Sequence[int], phase: int = PHASE_TRAIN) -> np.random.Generator:
    """Random stream of one member, keyed by (scale, tile index, phase)."""
    key = (SCALES.index(scale), *(int(i) for i in index), phase)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def round_to_float32(params: UNetParams) -> UNetParams:
    """Weights as they are stored on disk, so in-memory and reloaded models agree."""
    return params.map(lambda t: t.astype(np.float32).astype(np.float64))


@dataclass(frozen=True)
class MemberEvent:
    index: Triple
    kind: str
    sequence: int
    time: float


class EventLog:
    """
    Append-only record of member start/finish events with a global sequence number.
    """

    def __init__(self) -> None:
        self._events: List[MemberEvent] = []
        self._lock = threading.Lock()
        self._origin = time.perf_counter()

    def record(self, index: Triple, kind: str) -> MemberEvent:
        with self._lock:
            event = MemberEvent(index, kind, len(self._events), time.perf_counter() - self._origin)
            self._events.append(event)
        return event

    def events(self) -> List[MemberEvent]:
        with self._lock:
            return list(self._events)

    def find(self, index: Sequence[int], kind: str) -> MemberEvent:
        index = tuple(index)
        for event in self.events():
            if event.index == index and event.kind == kind:
                return event
        raise KeyError((index, kind))

    def __len__(self) -> int:
        return len(self._events)


@dataclass
class TrainedAssembly:
    """
    One trained U-Net per tile plus everything needed to segment with them.
    ``channels`` names the input channels in order ("t1", "prior", "coarse").
    """

    tile_grid: TileGrid
    scale: str
    members: Dict[Triple, UNetParams]
    config: UNetConfig
    channels: Tuple[str, ...]
    manifest: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.scale not in SCALES:
            raise ValueError(f"scale must be one of {SCALES}, got {self.scale!r}")
        missing = set(self.tile_grid.indices()) - set(self.members)
        if missing:
            raise ShapeError(f"{self.scale} assembly has no member for tiles {sorted(missing)}")
        for index, params in self.members.items():
            if params.config != self.config:
                raise ShapeError(f"member {index} does not share the assembly config")
        if len(self.channels) != self.config.in_channels:
            raise ShapeError(f"{len(self.channels)} channel names for {self.config.in_channels} input channels")

    def member(self, index: Sequence[int]) -> UNetParams:
        return self.members[tuple(index)]


def augment_with_flips(
    dataset: Sequence[Sample],
    label_pairs: Sequence[Tuple[int, int]] = (),
    label_channels: Optional[Mapping[int, int]] = None,
) -> List[Sample]:
    """
    Double the dataset with mid-sagittal mirror images.
    Targets swap left/right labels; channels listed in ``label_channels``
    (channel index -> label count) hold encoded label maps and get the same swap.
    """
    label_channels = dict(label_channels or {})
    flipped = []
    for inputs, target in dataset:
        channels = []
        for position, channel in enumerate(inputs.channels):
            if position in label_channels:
                channels.append(_flip_encoded_labels(channel, label_pairs, label_channels[position]))
            else:
                channels.append(flip_sagittal(channel))
        flipped.append((MultiChannelVolume(channels), flip_sagittal(target, label_pairs)))
    return list(dataset) + flipped


def _flip_encoded_labels(channel: Volume, label_pairs: Sequence[Tuple[int, int]], num_labels: int) -> Volume:
    scale = num_labels - 1
    labels = LabelMap(channel.grid, np.rint(channel.data.astype(np.float64) * scale), num_labels)
    flipped = flip_sagittal(labels, label_pairs)
    return Volume(channel.grid, flipped.labels / scale)


MemberInit = Callable[[Triple, Optional[UNetParams], np.random.Generator], UNetParams]


def _run_members(
    tile_grid: TileGrid,
    parents: Mapping[Triple, Optional[Triple]],
    dataset: Sequence[Sample],
    plan: TrainPlan,
    scale: str,
    phase: int,
    make_init: MemberInit,
    events: EventLog,
) -> Tuple[Dict[Triple, UNetParams], Dict[Triple, TrainOutcome]]:
    children: Dict[Triple, List[Triple]] = {index: [] for index in parents}
    for child, parent in parents.items():
        if parent is not None:
            children[parent].append(child)

    def depth(index: Triple) -> int:
        steps = 0
        while parents[index] is not None:
            index = parents[index]
            steps += 1
        return steps

    def task(index: Triple, parent_params: Optional[UNetParams]) -> TrainOutcome:
        events.record(index, "start")
        started = time.perf_counter()
        rng = member_rng(plan.seed, scale, index, phase)
        init = make_init(index, parent_params, rng)
        tile = tile_grid.tile(index)
        samples = [(extract_tile(inputs, tile), extract_tile(target, tile)) for inputs, target in dataset]
        outcome = train_unet(init, samples, plan, rng, tag=f"{scale} {index}")
        outcome = outcome._replace(params=round_to_float32(outcome.params))
        events.record(index, "finish")
        logger.info("%s member %s done: loss %.4f in %.1fs", scale, index, outcome.final_loss, time.perf_counter() - started)
        return outcome

    ready: TaskQueue[Triple] = TaskQueue()
    for index, parent in parents.items():
        if parent is None:
            ready.push(index, (0, index))
    trained: Dict[Triple, UNetParams] = {}
    outcomes: Dict[Triple, TrainOutcome] = {}
    failures: Dict[Triple, BaseException] = {}
    running: Dict[Future, Triple] = {}
    with ThreadPoolExecutor(max_workers=plan.workers, thread_name_prefix=f"{scale}-member") as pool:
        while running or (not ready.is_empty() and not failures):
            while not failures and not ready.is_empty() and len(running) < plan.workers:
                index = ready.pop()
                parent = parents[index]
                running[pool.submit(task, index, trained[parent] if parent is not None else None)] = index
            done, _ = wait(list(running), return_when=FIRST_COMPLETED)
            for future in done:
                index = running.pop(future)
                try:
                    outcome = future.result()
                except Exception as exc:
                    failures[index] = exc
                    continue
                trained[index] = outcome.params
                outcomes[index] = outcome
                for child in children[index]:
                    ready.push(child, (depth(child), child))
    if failures:
        index = min(failures)
        raise MemberTrainingError(index, failures[index], scale) from failures[index]
    return trained, outcomes


def _check_dataset(tile_grid: TileGrid, dataset: Sequence[Sample], config: UNetConfig) -> None:
    if not dataset:
        raise ShapeError("cannot train an assembly on an empty dataset")
    for position, (inputs, target) in enumerate(dataset):
        if inputs.grid.dims != tile_grid.grid.dims or target.grid.dims != tile_grid.grid.dims:
            raise ShapeError(
                f"sample {position} has dims {inputs.grid.dims}, assembly grid is {tile_grid.grid.dims}"
            )
        if len(inputs) != config.in_channels:
            raise ShapeError(f"sample {position} has {len(inputs)} channels, expected {config.in_channels}")


def _member_manifest(
    parents: Mapping[Triple, Optional[Triple]], outcomes: Mapping[Triple, TrainOutcome], events: EventLog
) -> List[dict]:
    rows = []
    for index in sorted(outcomes):
        start, finish = events.find(index, "start"), events.find(index, "finish")
        parent = parents[index]
        rows.append({
            "index": list(index),
            "parent": list(parent) if parent is not None else None,
            "final_loss": outcomes[index].final_loss,
            "start": start.time,
            "finish": finish.time,
            "start_seq": start.sequence,
            "finish_seq": finish.sequence,
        })
    return rows


def train_assembly(
    tile_grid: TileGrid,
    dataset: Sequence[Sample],
    plan: TrainPlan,
    config: UNetConfig,
    scale: str = "fine",
    channels: Optional[Sequence[str]] = None,
    transfer_learning: bool = True,
    events: Optional[EventLog] = None,
) -> TrainedAssembly:
    """
    Train every member of an assembly on its tile of each sample.
    Member (i, j, k) starts from its DAG parent's final weights (descending path only);
    with ``transfer_learning`` off every member starts from a fresh init, in the same order.
    :raises ShapeError: if the dataset does not live on the tile grid.
    :raises MemberTrainingError: naming the first failing tile.
    """
    _check_dataset(tile_grid, dataset, config)
    channels = tuple(channels) if channels is not None else tuple(f"c{i}" for i in range(config.in_channels))
    dag = build_transfer_dag(tile_grid.counts)
    events = events if events is not None else EventLog()

    def make_init(index: Triple, parent: Optional[UNetParams], rng: np.random.Generator) -> UNetParams:
        if parent is None or not transfer_learning:
            return init_params(config, rng)
        return transfer_weights(parent, config, rng)

    logger.info(
        "training %s assembly: %d members, %d samples, %d workers",
        scale, tile_grid.num_tiles, len(dataset), plan.workers,
    )
    members, outcomes = _run_members(tile_grid, dag.parents, dataset, plan, scale, PHASE_TRAIN, make_init, events)
    manifest = {
        "phase": "train",
        "scale": scale,
        "seed": plan.seed,
        "plan": plan.to_dict(),
        "config": config.to_dict(),
        "channels": list(channels),
        "transfer_learning": transfer_learning,
        "tile_grid": tile_grid.to_dict(),
        "dag_edges": dag.to_dict()["edges"],
        "members": _member_manifest(dag.parents, outcomes, events),
    }
    return TrainedAssembly(tile_grid, scale, members, config, channels, manifest)


def finetune_assembly(
    assembly: TrainedAssembly,
    dataset: Sequence[Sample],
    plan: TrainPlan,
    events: Optional[EventLog] = None,
) -> TrainedAssembly:
    """
    Continue training every member from its own weights (no transfer, no ordering).
    The previous manifest is kept under ``"previous"``.
    """
    _check_dataset(assembly.tile_grid, dataset, assembly.config)
    parents = {index: None for index in assembly.tile_grid.indices()}
    events = events if events is not None else EventLog()

    def make_init(index: Triple, parent: Optional[UNetParams], rng: np.random.Generator) -> UNetParams:
        return assembly.members[index]

    logger.info("fine-tuning %s assembly on %d samples", assembly.scale, len(dataset))
    members, outcomes = _run_members(
        assembly.tile_grid, parents, dataset, plan, assembly.scale, PHASE_FINETUNE, make_init, events
    )
    manifest = {
        "phase": "finetune",
        "scale": assembly.scale,
        "seed": plan.seed,
        "plan": plan.to_dict(),
        "config": assembly.config.to_dict(),
        "channels": list(assembly.channels),
        "transfer_learning": assembly.manifest.get("transfer_learning", True),
        "tile_grid": assembly.tile_grid.to_dict(),
        "dag_edges": assembly.manifest.get("dag_edges", []),
        "members": _member_manifest(parents, outcomes, events),
        "previous": assembly.manifest,
    }
    return TrainedAssembly(assembly.tile_grid, assembly.scale, members, assembly.config, assembly.channels, manifest)
