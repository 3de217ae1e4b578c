"""
Single-member training: epoch loop with MixUp and Adam, temporal weight averaging,
and encoder transfer between neighbouring members.
"""

import logging
from dataclasses import asdict, dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ..errors import NumericalError, ShapeError
from ..nn.losses import dice_loss, one_hot
from ..nn.optim import AdamState, adam_step, mixup, sample_mixup_lambda
from ..nn.unet import UNetConfig, UNetParams, init_decoder, unet_loss_and_grads
from ..volume.grid import LabelMap, MultiChannelVolume

__all__ = ["TrainPlan", "TrainOutcome", "train_unet", "swa_update", "transfer_weights", "as_training_tensors"]

logger = logging.getLogger(__name__)

Sample = Tuple[MultiChannelVolume, LabelMap]


@dataclass(frozen=True)
class TrainPlan:
    """
    Optimisation schedule of one member: ``epochs_main`` plain epochs followed by
    ``epochs_avg`` epochs whose end-of-epoch weights are averaged.
    """

    epochs_main: int = 10
    epochs_avg: int = 2
    lr: float = 1e-3
    mixup_alpha: float = 0.4
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.epochs_main < 1:
            raise ValueError(f"epochs_main must be >= 1, got {self.epochs_main}")
        if self.epochs_avg < 0:
            raise ValueError(f"epochs_avg must be >= 0, got {self.epochs_avg}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if self.lr < 0 or self.mixup_alpha < 0:
            raise ValueError("lr and mixup_alpha must be >= 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def to_dict(self) -> dict:
        return asdict(self)


class TrainOutcome(NamedTuple):
    params: UNetParams
    final_loss: float
    epoch_losses: List[float]


def as_training_tensors(dataset: Sequence[Sample], config: UNetConfig) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    (input tensor, one-hot target) pairs.
    :raises ShapeError: if samples disagree with each other or with the config.
    """
    if not dataset:
        raise ShapeError("cannot train on an empty dataset")
    grid = dataset[0][0].grid
    tensors = []
    for index, (inputs, target) in enumerate(dataset):
        if inputs.grid.dims != grid.dims or target.grid.dims != grid.dims:
            raise ShapeError(f"sample {index} has dims {inputs.grid.dims}, expected {grid.dims}")
        if len(inputs) != config.in_channels:
            raise ShapeError(f"sample {index} has {len(inputs)} channels, config expects {config.in_channels}")
        if target.num_labels != config.num_classes:
            raise ShapeError(f"sample {index} has {target.num_labels} labels, config expects {config.num_classes}")
        tensors.append((inputs.as_tensor(), one_hot(target.labels, config.num_classes)))
    return tensors


def swa_update(avg: UNetParams, new: UNetParams, k: int) -> UNetParams:
    """
    Fold ``new`` into a running mean of ``k`` models: (avg * k + new) / (k + 1).
    Computed as avg + (new - avg) / (k + 1) so identical inputs stay bit-exact.
    :raises ValueError: if k < 1.
    :raises ShapeError: if the models do not share a config.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if avg.config != new.config:
        raise ShapeError("cannot average models with different configs")
    theirs = new.as_dict()
    return avg.with_tensors({n: t + (theirs[n] - t) / (k + 1) for n, t in avg.named()})


def transfer_weights(parent: UNetParams, config: UNetConfig, rng: np.random.Generator) -> UNetParams:
    """
    Child initialisation: the descending path is copied bit for bit from ``parent``,
    the ascending path and the head are drawn fresh from ``rng``.
    :raises ShapeError: if the parent was built for another config.
    """
    if parent.config != config:
        raise ShapeError(f"parent config {parent.config} does not match {config}")
    decoder, head = init_decoder(config, rng)
    return UNetParams(config, dict(parent.encoder), decoder, head)


def _run_epoch(
    params: UNetParams,
    state: AdamState,
    tensors: List[Tuple[np.ndarray, np.ndarray]],
    plan: TrainPlan,
    rng: np.random.Generator,
    epoch: int,
) -> Tuple[UNetParams, AdamState, float]:
    order = rng.permutation(len(tensors))
    losses = []
    for position, a in enumerate(order):
        b = order[(position + 1) % len(order)]
        lam = sample_mixup_lambda(rng, plan.mixup_alpha)
        x, y = mixup(tensors[a], tensors[b], lam)
        loss, grads, _ = unet_loss_and_grads(params, x, y, dice_loss, "train", rng=rng)
        if not np.isfinite(loss):
            raise NumericalError(f"non-finite loss at epoch {epoch}, sample {int(a)}")
        params, state = adam_step(params, grads, state)
        losses.append(loss)
    return params, state, float(np.mean(losses))


def train_unet(
    init: UNetParams,
    dataset: Sequence[Sample],
    plan: TrainPlan,
    rng: np.random.Generator,
    tag: Optional[str] = None,
) -> TrainOutcome:
    """
    Train one U-Net with batch size 1. Each epoch is one shuffled pass in which every
    sample is mixed with its successor in the shuffled order (lambda ~ Beta(alpha, alpha)).
    When ``plan.epochs_avg`` > 0 the returned weights are the arithmetic mean of the
    end-of-epoch weights of the averaging epochs.
    :raises NumericalError: on a non-finite loss or gradient.
    """
    tensors = as_training_tensors(dataset, init.config)
    params = init
    state = AdamState.create(init, lr=plan.lr)
    average: Optional[UNetParams] = None
    losses: List[float] = []
    for epoch in range(plan.epochs_main + plan.epochs_avg):
        params, state, loss = _run_epoch(params, state, tensors, plan, rng, epoch)
        losses.append(loss)
        averaged = epoch - plan.epochs_main
        if averaged == 0:
            average = params
        elif averaged > 0:
            average = swa_update(average, params, averaged)
        logger.debug("%s epoch %d/%d loss %.5f", tag or "member", epoch + 1, plan.epochs_main + plan.epochs_avg, loss)
    return TrainOutcome(average if average is not None else params, losses[-1], losses)
