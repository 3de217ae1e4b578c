"""
Assembly inference: MC-dropout per member, hard votes over tiles, and the
coarse-to-fine cascade.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ..data.priors import encode_prior_channel
from ..errors import ShapeError
from ..nn.unet import Mode, UNetParams, unet_forward
from ..training.scheduler import TrainedAssembly
from ..volume.grid import LabelMap, MultiChannelVolume, Volume
from ..volume.ops import coarse_grid, downsample_intensity, downsample_label_nn, upsample_label_nn
from ..volume.tiling import Tile, extract_tile
from .voting import VoteAccumulator, finalize_vote, tile_argmax, vote_labels

__all__ = [
    "CHANNEL_NAMES",
    "CascadeResult",
    "assemble_channels",
    "mc_dropout_infer",
    "accumulate_assembly_votes",
    "segment_assembly",
    "cascade_segment",
]

logger = logging.getLogger(__name__)

CHANNEL_NAMES = ("t1", "prior", "coarse")


def mc_dropout_infer(params: UNetParams, tile_input: np.ndarray, passes: int, rng: np.random.Generator) -> np.ndarray:
    """
    Mean class probabilities of ``passes`` forwards with dropout active.
    :raises ValueError: if passes < 1.
    """
    if passes < 1:
        raise ValueError(f"passes must be >= 1, got {passes}")
    mean = unet_forward(params, tile_input, Mode.STOCHASTIC, rng=rng)
    for k in range(1, passes):
        probs = unet_forward(params, tile_input, Mode.STOCHASTIC, rng=rng)
        mean = mean + (probs - mean) / (k + 1)
    return mean


def assemble_channels(
    channels: Sequence[str],
    t1: Volume,
    prior: Optional[LabelMap] = None,
    coarse: Optional[LabelMap] = None,
) -> MultiChannelVolume:
    """
    Network input in the named channel order. Label maps enter through
    ``encode_prior_channel``.
    :raises ShapeError: if a named channel is missing or lives on another grid.
    """
    sources = {"t1": t1, "prior": prior, "coarse": coarse}
    volumes = []
    for name in channels:
        if name not in sources:
            raise ShapeError(f"unknown input channel {name!r}")
        item = sources[name]
        if item is None:
            raise ShapeError(f"input channel {name!r} requested but not provided")
        if item.grid.dims != t1.grid.dims:
            raise ShapeError(f"channel {name!r} dims {item.grid.dims} differ from t1 dims {t1.grid.dims}")
        volumes.append(item if isinstance(item, Volume) else Volume(t1.grid, encode_prior_channel(item).data))
    return MultiChannelVolume(volumes)


def _tile_seed(base_seed: int, index: Sequence[int]) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=tuple(int(i) for i in index)))


def accumulate_assembly_votes(
    assembly: TrainedAssembly,
    inputs: MultiChannelVolume,
    passes: int,
    rng: np.random.Generator,
    workers: int = 1,
) -> VoteAccumulator:
    """
    Run every member on its tile and collect the hard votes. Tiles run concurrently;
    per-tile labels are merged in lexicographic tile order and every tile draws from
    its own stream, so the result does not depend on ``workers``.
    :raises ShapeError: if the input grid or channel count does not match the assembly.
    """
    if inputs.grid.dims != assembly.tile_grid.grid.dims:
        raise ShapeError(
            f"{assembly.scale} stage: input dims {inputs.grid.dims} differ from assembly grid {assembly.tile_grid.grid.dims}"
        )
    if len(inputs) != assembly.config.in_channels:
        raise ShapeError(
            f"{assembly.scale} stage: {len(inputs)} input channels, members expect {assembly.config.in_channels}"
        )
    base_seed = int(rng.integers(2 ** 63))

    def infer(tile: Tile) -> np.ndarray:
        tile_input = extract_tile(inputs, tile).as_tensor()
        probs = mc_dropout_infer(assembly.member(tile.index), tile_input, passes, _tile_seed(base_seed, tile.index))
        logger.debug("%s tile %s inferred", assembly.scale, tile.index)
        return tile_argmax(probs)

    tiles = list(assembly.tile_grid.tiles())
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix=f"{assembly.scale}-infer") as pool:
            labels = list(pool.map(infer, tiles))
    else:
        labels = [infer(tile) for tile in tiles]
    acc = VoteAccumulator(inputs.grid, assembly.config.num_classes)
    for tile, tile_labels in zip(tiles, labels):
        vote_labels(acc, tile, tile_labels)
    return acc


def segment_assembly(
    assembly: TrainedAssembly,
    inputs: MultiChannelVolume,
    passes: int,
    rng: np.random.Generator,
    workers: int = 1,
) -> LabelMap:
    """Majority-vote segmentation of ``inputs`` by every member of ``assembly``."""
    return finalize_vote(accumulate_assembly_votes(assembly, inputs, passes, rng, workers))


class CascadeResult(NamedTuple):
    coarse_seg: Optional[LabelMap]
    fine_seg: LabelMap
    fine_votes: VoteAccumulator


def cascade_segment(
    coarse: Optional[TrainedAssembly],
    fine: TrainedAssembly,
    t1: Volume,
    prior: Optional[LabelMap],
    passes: int = 3,
    rng: Optional[np.random.Generator] = None,
    workers: int = 1,
) -> CascadeResult:
    """
    Coarse assembly on the 2x-downsampled inputs, then the fine assembly with the
    up-sampled coarse segmentation as an extra channel. Channels follow each
    assembly's own layout, so ablated models (no prior, no cascade) work too.
    :raises ShapeError: naming the stage whose grid does not line up.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    if t1.grid.dims != fine.tile_grid.grid.dims:
        raise ShapeError(f"fine stage: t1 dims {t1.grid.dims} differ from assembly grid {fine.tile_grid.grid.dims}")
    if prior is not None and prior.grid.dims != t1.grid.dims:
        raise ShapeError(f"fine stage: prior dims {prior.grid.dims} differ from t1 dims {t1.grid.dims}")
    coarse_seg = None
    coarse_up = None
    if coarse is not None:
        target = coarse_grid(t1.grid)
        if coarse.tile_grid.grid.dims != target.dims:
            raise ShapeError(
                f"coarse stage: assembly grid {coarse.tile_grid.grid.dims} is not the downsampled grid {target.dims}"
            )
        coarse_prior = downsample_label_nn(prior) if prior is not None else None
        coarse_inputs = assemble_channels(coarse.channels, downsample_intensity(t1), coarse_prior)
        coarse_seg = segment_assembly(coarse, coarse_inputs, passes, rng, workers)
        coarse_up = upsample_label_nn(coarse_seg, t1.grid)
    elif "coarse" in fine.channels:
        raise ShapeError("fine stage: the fine assembly needs a coarse segmentation but no coarse assembly was given")
    fine_inputs = assemble_channels(fine.channels, t1, prior, coarse_up)
    votes = accumulate_assembly_votes(fine, fine_inputs, passes, rng, workers)
    return CascadeResult(coarse_seg, finalize_vote(votes), votes)
