"""
Pool directories: AVOL files per sample plus an ``index.json``.

Layout::

    <pool>/index.json
    <pool>/<id>/t1.avol, gt.avol, mask.avol, prior.avol
    <pool>/<id>/t1_rescan.avol, gt_rescan.avol, mask_rescan.avol, prior_rescan.avol   (rescan role)
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from ..errors import DataError
from ..volume.avol import read_avol, write_avol
from ..volume.grid import LabelMap, Volume
from ..volume.ops import RigidTransform

__all__ = ["ROLES", "RescanImages", "PoolSample", "Pool", "write_pool", "load_pool"]

logger = logging.getLogger(__name__)

ROLES = ("labeled", "unlabeled", "test", "rescan", "pathological")
INDEX_FILE = "index.json"
_IMAGES = ("t1", "gt", "mask", "prior")


@dataclass(frozen=True)
class RescanImages:
    t1: Volume
    gt: LabelMap
    mask: LabelMap
    prior: LabelMap


@dataclass(frozen=True)
class PoolSample:
    """One subject of the pool. ``transform`` and ``rescan`` are set for the rescan role only."""

    sample_id: str
    role: str
    t1: Volume
    gt: LabelMap
    mask: LabelMap
    prior: LabelMap
    spec: Optional[dict] = None
    transform: Optional[RigidTransform] = None
    rescan: Optional[RescanImages] = None

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise DataError(f"sample {self.sample_id}: unknown role {self.role!r}")
        if (self.transform is None) != (self.rescan is None):
            raise DataError(f"sample {self.sample_id}: a rescan needs both its images and its transform")


PathLike = Union[str, Path]


def write_pool(
    directory: PathLike,
    samples: Sequence[PoolSample],
    num_labels: int,
    label_pairs: Sequence[Tuple[int, int]] = (),
) -> Path:
    """
    Write every sample and the index.
    :raises DataError: on duplicate ids or samples on different grids.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ids = [s.sample_id for s in samples]
    if len(set(ids)) != len(ids):
        raise DataError("sample ids in a pool must be unique")
    dims = {s.t1.grid.dims for s in samples}
    if len(dims) > 1:
        raise DataError(f"pool samples live on different grids: {sorted(dims)}")
    entries = []
    for sample in samples:
        folder = directory / sample.sample_id
        for name in _IMAGES:
            write_avol(folder / f"{name}.avol", getattr(sample, name))
        entry: Dict = {"id": sample.sample_id, "role": sample.role, "spec": sample.spec}
        if sample.rescan is not None:
            for name in _IMAGES:
                write_avol(folder / f"{name}_rescan.avol", getattr(sample.rescan, name))
            entry["transform"] = sample.transform.to_dict()
        entries.append(entry)
    index = {
        "num_labels": int(num_labels),
        "dims": list(dims.pop()) if dims else None,
        "label_pairs": [list(p) for p in label_pairs],
        "samples": entries,
    }
    (directory / INDEX_FILE).write_text(json.dumps(index, indent=2) + "\n")
    logger.info("wrote pool of %d samples to %s", len(samples), directory)
    return directory


def _read(path: Path, kind: type):
    if not path.exists():
        raise DataError(f"missing pool file {path}")
    item = read_avol(path)
    if not isinstance(item, kind):
        raise DataError(f"{path} holds a {type(item).__name__}, expected a {kind.__name__}")
    return item


class Pool:
    """
    Read side of a pool directory. Samples are loaded on demand.
    """

    def __init__(self, directory: PathLike, index: dict) -> None:
        self.directory = Path(directory)
        self.num_labels: int = int(index["num_labels"])
        self.dims = tuple(index["dims"]) if index.get("dims") else None
        self.label_pairs: Tuple[Tuple[int, int], ...] = tuple(tuple(p) for p in index.get("label_pairs", []))
        self._entries: Dict[str, dict] = {}
        for entry in index["samples"]:
            self._entries[entry["id"]] = entry

    def ids(self, role: Optional[str] = None) -> List[str]:
        """Sample ids in index order, optionally restricted to one role."""
        return [i for i, e in self._entries.items() if role is None or e["role"] == role]

    def roles(self) -> List[str]:
        return [r for r in ROLES if self.ids(r)]

    def role_of(self, sample_id: str) -> str:
        return self._entry(sample_id)["role"]

    def _entry(self, sample_id: str) -> dict:
        try:
            return self._entries[sample_id]
        except KeyError:
            raise DataError(f"sample {sample_id!r} not in pool {self.directory}") from None

    def sample(self, sample_id: str) -> PoolSample:
        """
        :raises DataError: for unknown ids or missing files.
        """
        entry = self._entry(sample_id)
        folder = self.directory / sample_id
        kinds = {"t1": Volume, "gt": LabelMap, "mask": LabelMap, "prior": LabelMap}
        images = {name: _read(folder / f"{name}.avol", kinds[name]) for name in _IMAGES}
        transform = rescan = None
        if "transform" in entry:
            transform = RigidTransform.from_dict(entry["transform"])
            rescan = RescanImages(**{name: _read(folder / f"{name}_rescan.avol", kinds[name]) for name in _IMAGES})
        return PoolSample(sample_id, entry["role"], spec=entry.get("spec"), transform=transform, rescan=rescan, **images)

    def samples(self, role: Optional[str] = None) -> List[PoolSample]:
        return [self.sample(i) for i in self.ids(role)]

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, sample_id: object) -> bool:
        return sample_id in self._entries

    def __repr__(self) -> str:
        return f"Pool({self.directory}, samples={len(self)})"


def load_pool(directory: PathLike) -> Pool:
    """
    :raises DataError: if the directory has no readable index.
    """
    path = Path(directory) / INDEX_FILE
    if not path.exists():
        raise DataError(f"no pool index at {path}")
    try:
        index = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
    return Pool(directory, index)
