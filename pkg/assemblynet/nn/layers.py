"""
Differentiable 3D building blocks on float64 numpy arrays.

Activations are shaped (channel, z, y, x) and kernels (out, in, kz, ky, kx); the batch
size is always 1 so there is no batch axis. Every forward function has a matching
``*_backward`` that returns gradients with respect to its inputs.
"""

from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError

__all__ = [
    "conv3d_forward",
    "conv3d_backward",
    "maxpool3d",
    "maxpool3d_backward",
    "upsample_nn",
    "upsample_nn_backward",
    "upsample_conv",
    "upsample_conv_backward",
    "relu",
    "relu_backward",
    "dropout_mask",
    "softmax",
    "softmax_backward",
]


def _check_conv(x: np.ndarray, kernel: np.ndarray, bias: Optional[np.ndarray] = None) -> int:
    if x.ndim != 4:
        raise ShapeError(f"conv input must be (C, Z, Y, X), got shape {x.shape}")
    if kernel.ndim != 5 or len(set(kernel.shape[2:])) != 1 or kernel.shape[2] % 2 == 0:
        raise ShapeError(f"conv kernel must be (O, C, k, k, k) with odd k, got {kernel.shape}")
    if kernel.shape[1] != x.shape[0]:
        raise ShapeError(f"channel mismatch: input has {x.shape[0]}, kernel expects {kernel.shape[1]}")
    if bias is not None and bias.shape != (kernel.shape[0],):
        raise ShapeError(f"bias shape {bias.shape} does not match {kernel.shape[0]} output channels")
    return kernel.shape[2]


def _windows(x: np.ndarray, size: int) -> np.ndarray:
    """Zero-padded sliding windows, shape (C, Z, Y, X, k, k, k). No copy."""
    pad = size // 2
    padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (pad, pad)))
    return sliding_window_view(padded, (size, size, size), axis=(1, 2, 3))


def conv3d_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """
    Same-padded, stride-1 3D convolution (cross-correlation).
    Output spatial dims equal the input's.
    :raises ShapeError: on channel or kernel shape mismatch.
    """
    size = _check_conv(x, kernel, bias)
    if size == 1:
        out = np.tensordot(kernel[:, :, 0, 0, 0], x, axes=([1], [0]))
    else:
        out = np.tensordot(kernel, _windows(x, size), axes=([1, 2, 3, 4], [0, 4, 5, 6]))
    return out + bias[:, None, None, None]


def conv3d_backward(grad: np.ndarray, x: np.ndarray, kernel: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Gradients of ``conv3d_forward`` given the upstream gradient.
    :return: (grad_input, grad_kernel, grad_bias)
    """
    size = _check_conv(x, kernel)
    grad_bias = grad.sum(axis=(1, 2, 3))
    if size == 1:
        weights = kernel[:, :, 0, 0, 0]
        grad_kernel = np.tensordot(grad, x, axes=([1, 2, 3], [1, 2, 3]))[:, :, None, None, None]
        grad_input = np.tensordot(weights, grad, axes=([0], [0]))
        return grad_input, grad_kernel, grad_bias
    grad_kernel = np.tensordot(grad, _windows(x, size), axes=([1, 2, 3], [1, 2, 3]))
    flipped = kernel[:, :, ::-1, ::-1, ::-1]
    grad_input = np.tensordot(flipped, _windows(grad, size), axes=([0, 2, 3, 4], [0, 4, 5, 6]))
    return grad_input, grad_kernel, grad_bias


def maxpool3d(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    2x2x2 max pooling with stride 2.
    Ties go to the first position of the window in layout order (x fastest).
    :return: (pooled, argmax record)
    :raises ShapeError: if a spatial dim is odd.
    """
    c, z, y, x_ = x.shape
    if z % 2 or y % 2 or x_ % 2:
        raise ShapeError(f"max pooling needs even spatial dims, got {x.shape[1:]}")
    blocks = x.reshape(c, z // 2, 2, y // 2, 2, x_ // 2, 2).transpose(0, 1, 3, 5, 2, 4, 6)
    blocks = blocks.reshape(c, z // 2, y // 2, x_ // 2, 8)
    argmax = blocks.argmax(axis=-1)
    pooled = np.take_along_axis(blocks, argmax[..., None], axis=-1)[..., 0]
    return pooled, argmax


def maxpool3d_backward(grad: np.ndarray, argmax: np.ndarray) -> np.ndarray:
    """Route each pooled gradient to the recorded argmax position."""
    c, z, y, x = grad.shape
    blocks = np.zeros((c, z, y, x, 8), dtype=grad.dtype)
    np.put_along_axis(blocks, argmax[..., None], grad[..., None], axis=-1)
    blocks = blocks.reshape(c, z, y, x, 2, 2, 2).transpose(0, 1, 4, 2, 5, 3, 6)
    return blocks.reshape(c, 2 * z, 2 * y, 2 * x)


def upsample_nn(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbour 2x upsampling of every spatial axis."""
    return x.repeat(2, axis=1).repeat(2, axis=2).repeat(2, axis=3)


def upsample_nn_backward(grad: np.ndarray) -> np.ndarray:
    c, z, y, x = grad.shape
    return grad.reshape(c, z // 2, 2, y // 2, 2, x // 2, 2).sum(axis=(2, 4, 6))


def upsample_conv(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Nearest-neighbour 2x upsampling followed by a same-padded convolution."""
    return conv3d_forward(upsample_nn(x), kernel, bias)


def upsample_conv_backward(grad: np.ndarray, x: np.ndarray, kernel: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    grad_up, grad_kernel, grad_bias = conv3d_backward(grad, upsample_nn(x), kernel)
    return upsample_nn_backward(grad_up), grad_kernel, grad_bias


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(grad: np.ndarray, pre_activation: np.ndarray) -> np.ndarray:
    return grad * (pre_activation > 0)


def dropout_mask(shape: Tuple[int, ...], rate: float, rng: np.random.Generator) -> np.ndarray:
    """
    Inverted-dropout mask: 0 with probability ``rate``, else 1 / (1 - rate).
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Softmax over the channel axis (axis 0)."""
    shifted = logits - logits.max(axis=0, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=0, keepdims=True)


def softmax_backward(grad: np.ndarray, probs: np.ndarray) -> np.ndarray:
    return probs * (grad - (grad * probs).sum(axis=0, keepdims=True))
