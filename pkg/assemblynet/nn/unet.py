"""
Small 3D U-Net with hand-written gradients; the learner behind every assembly member.

Topology (depth D, f_l = base_filters * 2**l):

- descending path, level l = 0..D: conv3 + ReLU, conv3 + ReLU, dropout; levels below D
  keep the output as a skip connection and max-pool it
- ascending path, level l = D-1..0: NN upsample + conv3 (f_{l+1} -> f_l), concatenate
  [skip_l, upsampled], conv3 + ReLU, conv3 + ReLU
- head: 1x1x1 conv to ``num_classes`` followed by a channel softmax

The encoder (descending path, bottleneck included) and the decoder + head are kept in
separate dictionaries so transfer learning can copy one without touching the other.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Tuple, Union

import numpy as np

from ..errors import ShapeError
from . import layers

__all__ = [
    "UNetConfig",
    "UNetParams",
    "Mode",
    "ForwardCache",
    "UNET_PRESETS",
    "init_params",
    "init_decoder",
    "parameter_count",
    "unet_forward",
    "unet_forward_cached",
    "unet_backward",
    "unet_loss_and_grads",
]

Tensors = Dict[str, np.ndarray]


class Mode(str, Enum):
    TRAIN = "train"
    STOCHASTIC = "eval-stochastic"
    DETERMINISTIC = "eval-deterministic"


@dataclass(frozen=True)
class UNetConfig:
    in_channels: int
    num_classes: int
    base_filters: int = 8
    depth: int = 2
    dropout_rate: float = 0.5
    kernel: int = 3

    def __post_init__(self) -> None:
        if self.in_channels < 1 or self.num_classes < 2:
            raise ValueError("a U-Net needs >= 1 input channel and >= 2 classes")
        if self.base_filters < 1:
            raise ValueError(f"base_filters must be >= 1, got {self.base_filters}")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.kernel != 3:
            raise ValueError("only 3x3x3 kernels are supported")

    def filters(self, level: int) -> int:
        return self.base_filters * 2 ** level

    @property
    def divisor(self) -> int:
        """Spatial dims of the input must be multiples of this."""
        return 2 ** self.depth

    def check_input(self, shape: Tuple[int, ...]) -> None:
        """
        :raises ShapeError: unless ``shape`` is (in_channels, z, y, x) with spatial dims
            divisible by 2**depth.
        """
        if len(shape) != 4 or shape[0] != self.in_channels:
            raise ShapeError(f"expected input ({self.in_channels}, z, y, x), got {tuple(shape)}")
        if any(n % self.divisor for n in shape[1:]):
            raise ShapeError(f"input spatial dims {tuple(shape[1:])} not divisible by {self.divisor}")

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "num_classes": self.num_classes,
            "base_filters": self.base_filters,
            "depth": self.depth,
            "dropout_rate": self.dropout_rate,
        }


UNET_PRESETS = {
    "desk": {"base_filters": 8, "depth": 2, "dropout_rate": 0.5},
    "full": {"base_filters": 24, "depth": 4, "dropout_rate": 0.5},
}


def _readonly(tensors: Mapping[str, np.ndarray]) -> Tensors:
    out = {}
    for name, value in tensors.items():
        array = np.array(value, dtype=np.float64, copy=True)
        array.setflags(write=False)
        out[name] = array
    return out


@dataclass(frozen=True, eq=False)
class UNetParams:
    """
    All learnable weights of one U-Net. Immutable: updates build new instances.
    """

    config: UNetConfig
    encoder: Tensors = field(repr=False)
    decoder: Tensors = field(repr=False)
    head: Tensors = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "encoder", _readonly(self.encoder))
        object.__setattr__(self, "decoder", _readonly(self.decoder))
        object.__setattr__(self, "head", _readonly(self.head))
        expected = _expected_shapes(self.config)
        actual = {name: t.shape for name, t in self.named()}
        if actual != expected:
            missing = sorted(set(expected) ^ set(actual))
            wrong = sorted(n for n in expected if n in actual and actual[n] != expected[n])
            raise ShapeError(f"parameters do not match config (names: {missing}, shapes: {wrong})")

    def named(self) -> Iterator[Tuple[str, np.ndarray]]:
        """Every tensor in canonical order: encoder, decoder, head."""
        yield from self.encoder.items()
        yield from self.decoder.items()
        yield from self.head.items()

    def as_dict(self) -> Tensors:
        return dict(self.named())

    def num_parameters(self) -> int:
        return sum(t.size for _, t in self.named())

    def with_tensors(self, tensors: Mapping[str, np.ndarray]) -> "UNetParams":
        """New parameters from a flat name -> tensor mapping (same names)."""
        return UNetParams(
            self.config,
            {n: tensors[n] for n in self.encoder},
            {n: tensors[n] for n in self.decoder},
            {n: tensors[n] for n in self.head},
        )

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "UNetParams":
        return self.with_tensors({n: fn(t) for n, t in self.named()})

    def equals(self, other: "UNetParams") -> bool:
        """Bitwise equality of config and every tensor."""
        if self.config != other.config:
            return False
        theirs = other.as_dict()
        return all(np.array_equal(t, theirs[n]) for n, t in self.named())

    @classmethod
    def from_flat(cls, config: UNetConfig, tensors: Mapping[str, np.ndarray]) -> "UNetParams":
        expected = _expected_shapes(config)
        if set(tensors) != set(expected):
            raise ShapeError(f"tensor names do not match config: {sorted(set(tensors) ^ set(expected))}")
        encoder = {n: tensors[n] for n in expected if n.startswith("enc")}
        decoder = {n: tensors[n] for n in expected if n.startswith("dec")}
        head = {n: tensors[n] for n in expected if n.startswith("head")}
        return cls(config, encoder, decoder, head)


def _conv_shapes(prefix: str, c_in: int, c_out: int, k: int) -> List[Tuple[str, Tuple[int, ...]]]:
    return [(f"{prefix}.w", (c_out, c_in, k, k, k)), (f"{prefix}.b", (c_out,))]


def _encoder_shapes(config: UNetConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    shapes = []
    c_in = config.in_channels
    for level in range(config.depth + 1):
        f = config.filters(level)
        shapes += _conv_shapes(f"enc{level}.conv1", c_in, f, config.kernel)
        shapes += _conv_shapes(f"enc{level}.conv2", f, f, config.kernel)
        c_in = f
    return shapes


def _decoder_shapes(config: UNetConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    shapes = []
    for level in reversed(range(config.depth)):
        f = config.filters(level)
        shapes += _conv_shapes(f"dec{level}.up", config.filters(level + 1), f, config.kernel)
        shapes += _conv_shapes(f"dec{level}.conv1", 2 * f, f, config.kernel)
        shapes += _conv_shapes(f"dec{level}.conv2", f, f, config.kernel)
    return shapes


def _head_shapes(config: UNetConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    return _conv_shapes("head", config.filters(0), config.num_classes, 1)


def _expected_shapes(config: UNetConfig) -> Dict[str, Tuple[int, ...]]:
    return dict(_encoder_shapes(config) + _decoder_shapes(config) + _head_shapes(config))


def _init(shapes: List[Tuple[str, Tuple[int, ...]]], rng: np.random.Generator) -> Tensors:
    """He-style fan-in scaled uniform weights, zero biases, drawn in list order."""
    tensors = {}
    for name, shape in shapes:
        if name.endswith(".b"):
            tensors[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(6.0 / fan_in)
            tensors[name] = rng.uniform(-bound, bound, size=shape)
    return tensors


def init_params(config: UNetConfig, rng: np.random.Generator) -> UNetParams:
    """Fresh weights for every tensor (encoder first, then decoder, then head)."""
    encoder = _init(_encoder_shapes(config), rng)
    decoder, head = init_decoder(config, rng)
    return UNetParams(config, encoder, decoder, head)


def init_decoder(config: UNetConfig, rng: np.random.Generator) -> Tuple[Tensors, Tensors]:
    """Fresh ascending-path and head weights."""
    return _init(_decoder_shapes(config), rng), _init(_head_shapes(config), rng)


def parameter_count(config: UNetConfig) -> int:
    """
    Closed-form number of learnable scalars. The kernel terms grow with
    base_filters**2 except for the first convolution and the head, which are linear.
    """
    k3 = config.kernel ** 3

    def conv(c_in: int, c_out: int, volume: int = k3) -> int:
        return c_out * c_in * volume + c_out

    total = conv(config.in_channels, config.filters(0)) + conv(config.filters(0), config.filters(0))
    for level in range(1, config.depth + 1):
        f = config.filters(level)
        total += conv(config.filters(level - 1), f) + conv(f, f)
    for level in range(config.depth):
        f = config.filters(level)
        total += conv(config.filters(level + 1), f) + conv(2 * f, f) + conv(f, f)
    return total + conv(config.filters(0), config.num_classes, 1)


@dataclass
class ForwardCache:
    """Intermediate values of one forward pass, consumed by ``unet_backward``."""

    mode: Mode
    inputs: Dict[str, np.ndarray] = field(default_factory=dict)
    pre_activations: Dict[str, np.ndarray] = field(default_factory=dict)
    pool_argmax: Dict[int, np.ndarray] = field(default_factory=dict)
    masks: Dict[int, np.ndarray] = field(default_factory=dict)
    probs: Optional[np.ndarray] = None


def _conv_relu(name: str, h: np.ndarray, p: Tensors, cache: ForwardCache) -> np.ndarray:
    cache.inputs[name] = h
    z = layers.conv3d_forward(h, p[f"{name}.w"], p[f"{name}.b"])
    cache.pre_activations[name] = z
    return layers.relu(z)


def unet_forward_cached(
    params: UNetParams,
    x: np.ndarray,
    mode: Union[Mode, str] = Mode.DETERMINISTIC,
    rng: Optional[np.random.Generator] = None,
    masks: Optional[Mapping[int, np.ndarray]] = None,
) -> Tuple[np.ndarray, ForwardCache]:
    """
    Forward pass keeping what the backward pass needs.
    Dropout follows every descending-path block in ``train`` and ``eval-stochastic``
    modes; ``masks`` (level -> mask) replays fixed masks, otherwise they are drawn from ``rng``.
    :raises ShapeError: on input shape violations.
    :raises ValueError: if dropout is active and neither masks nor rng are given.
    """
    config = params.config
    mode = Mode(mode)
    x = np.asarray(x, dtype=np.float64)
    config.check_input(x.shape)
    active = mode is not Mode.DETERMINISTIC and config.dropout_rate > 0.0
    cache = ForwardCache(mode)
    enc, dec, head = params.encoder, params.decoder, params.head
    skips = []
    h = x
    for level in range(config.depth + 1):
        h = _conv_relu(f"enc{level}.conv1", h, enc, cache)
        h = _conv_relu(f"enc{level}.conv2", h, enc, cache)
        if active:
            if masks is not None and level in masks:
                mask = np.asarray(masks[level], dtype=np.float64)
            elif rng is not None:
                mask = layers.dropout_mask(h.shape, config.dropout_rate, rng)
            else:
                raise ValueError(f"dropout is active in {mode.value} mode but no rng or masks were given")
            cache.masks[level] = mask
            h = h * mask
        if level < config.depth:
            skips.append(h)
            h, cache.pool_argmax[level] = layers.maxpool3d(h)
    for level in reversed(range(config.depth)):
        name = f"dec{level}.up"
        cache.inputs[name] = h
        up = layers.upsample_conv(h, dec[f"{name}.w"], dec[f"{name}.b"])
        h = np.concatenate([skips[level], up], axis=0)
        h = _conv_relu(f"dec{level}.conv1", h, dec, cache)
        h = _conv_relu(f"dec{level}.conv2", h, dec, cache)
    cache.inputs["head"] = h
    logits = layers.conv3d_forward(h, head["head.w"], head["head.b"])
    probs = layers.softmax(logits)
    cache.probs = probs
    return probs, cache


def unet_forward(
    params: UNetParams,
    x: np.ndarray,
    mode: Union[Mode, str] = Mode.DETERMINISTIC,
    rng: Optional[np.random.Generator] = None,
    masks: Optional[Mapping[int, np.ndarray]] = None,
) -> np.ndarray:
    """
    Per-class probabilities of shape (num_classes, z, y, x); they sum to 1 per voxel.
    """
    probs, _ = unet_forward_cached(params, x, mode, rng, masks)
    return probs


def _conv_relu_backward(name: str, grad: np.ndarray, p: Tensors, cache: ForwardCache, grads: Tensors) -> np.ndarray:
    grad = layers.relu_backward(grad, cache.pre_activations[name])
    g_in, grads[f"{name}.w"], grads[f"{name}.b"] = layers.conv3d_backward(grad, cache.inputs[name], p[f"{name}.w"])
    return g_in


def unet_backward(params: UNetParams, cache: ForwardCache, grad_probs: np.ndarray) -> Tensors:
    """
    Gradients of a scalar loss with respect to every parameter, given dL/dprobs.
    :return: flat name -> gradient mapping with the parameter names.
    """
    config = params.config
    enc, dec, head = params.encoder, params.decoder, params.head
    grads: Tensors = {}
    g = layers.softmax_backward(grad_probs, cache.probs)
    g, grads["head.w"], grads["head.b"] = layers.conv3d_backward(g, cache.inputs["head"], head["head.w"])
    skip_grads = {}
    for level in range(config.depth):
        g = _conv_relu_backward(f"dec{level}.conv2", g, dec, cache, grads)
        g = _conv_relu_backward(f"dec{level}.conv1", g, dec, cache, grads)
        f = config.filters(level)
        skip_grads[level], g_up = g[:f], g[f:]
        name = f"dec{level}.up"
        g, grads[f"{name}.w"], grads[f"{name}.b"] = layers.upsample_conv_backward(g_up, cache.inputs[name], dec[f"{name}.w"])
    for level in reversed(range(config.depth + 1)):
        if level < config.depth:
            g = skip_grads[level] + layers.maxpool3d_backward(g, cache.pool_argmax[level])
        if level in cache.masks:
            g = g * cache.masks[level]
        g = _conv_relu_backward(f"enc{level}.conv2", g, enc, cache, grads)
        g = _conv_relu_backward(f"enc{level}.conv1", g, enc, cache, grads)
    return {name: grads[name] for name, _ in params.named()}


def unet_loss_and_grads(
    params: UNetParams,
    x: np.ndarray,
    target: np.ndarray,
    loss_fn: Callable[[np.ndarray, np.ndarray], Tuple[float, np.ndarray]],
    mode: Union[Mode, str] = Mode.TRAIN,
    rng: Optional[np.random.Generator] = None,
    masks: Optional[Mapping[int, np.ndarray]] = None,
) -> Tuple[float, Tensors, ForwardCache]:
    """Forward, loss and backward in one call. Returns (loss, grads, cache)."""
    probs, cache = unet_forward_cached(params, x, mode, rng, masks)
    loss, grad_probs = loss_fn(probs, target)
    return loss, unet_backward(params, cache, grad_probs), cache
