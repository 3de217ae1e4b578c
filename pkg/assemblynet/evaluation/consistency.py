"""
Scan-rescan consistency: segmentations of a rescan are mapped back into the scan's
space with the exact inverse of the known motion before they are compared.
"""

from typing import NamedTuple

from ..errors import ShapeError
from ..volume.grid import LabelMap
from ..volume.ops import RigidTransform, rigid_resample
from .dice import mean_dice

__all__ = ["scan_rescan_consistency", "ConsistencyScores", "consistency_scores"]


def scan_rescan_consistency(seg_scan: LabelMap, seg_rescan: LabelMap, transform: RigidTransform) -> float:
    """
    Mean Dice between ``seg_scan`` and ``seg_rescan`` resampled (nearest neighbour) by
    the inverse of ``transform``.
    :raises ShapeError: if the maps do not share a grid.
    """
    if seg_scan.grid != seg_rescan.grid:
        raise ShapeError(f"scan grid {seg_scan.grid.dims} differs from rescan grid {seg_rescan.grid.dims}")
    back = seg_rescan if transform.is_identity() else rigid_resample(seg_rescan, transform, inverse=True)
    return mean_dice(seg_scan, back)


class ConsistencyScores(NamedTuple):
    intra_method: float
    method_expert: float
    intra_rater: float


def consistency_scores(
    auto_scan: LabelMap,
    auto_rescan: LabelMap,
    manual_scan: LabelMap,
    manual_rescan: LabelMap,
    transform: RigidTransform,
) -> ConsistencyScores:
    """
    The three consistencies of one subject: automatic vs automatic, automatic rescan
    vs manual scan, and manual vs manual.
    """
    return ConsistencyScores(
        scan_rescan_consistency(auto_scan, auto_rescan, transform),
        scan_rescan_consistency(manual_scan, auto_rescan, transform),
        scan_rescan_consistency(manual_scan, manual_rescan, transform),
    )
