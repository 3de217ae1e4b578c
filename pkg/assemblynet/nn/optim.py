"""
Adam optimizer and MixUp augmentation.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Tuple, TypeVar, Union

import numpy as np

from ..errors import NumericalError, ShapeError
from .unet import UNetParams

__all__ = ["AdamState", "adam_step", "mixup", "sample_mixup_lambda"]


Params = TypeVar("Params", UNetParams, Dict[str, np.ndarray])


@dataclass(frozen=True)
class AdamState:
    """
    Bias-corrected Adam state. Moments are keyed by parameter name.
    """

    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    v: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.step < 0:
            raise ValueError(f"step must be >= 0, got {self.step}")
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")

    @classmethod
    def create(cls, params: Union[UNetParams, Mapping[str, np.ndarray]], lr: float = 1e-3, **kwargs) -> "AdamState":
        """Zero moments shaped like ``params``."""
        tensors = params.as_dict() if isinstance(params, UNetParams) else params
        return cls(
            step=0,
            m={n: np.zeros_like(t, dtype=np.float64) for n, t in tensors.items()},
            v={n: np.zeros_like(t, dtype=np.float64) for n, t in tensors.items()},
            lr=lr,
            **kwargs,
        )


def adam_step(params: Params, grads: Mapping[str, np.ndarray], state: AdamState) -> Tuple[Params, AdamState]:
    """
    One Adam update. Returns new parameters and state; inputs are left untouched.
    :raises NumericalError: if any gradient is not finite.
    :raises ShapeError: if gradient names or shapes do not match the parameters.
    """
    tensors = params.as_dict() if isinstance(params, UNetParams) else dict(params)
    if set(grads) != set(tensors):
        raise ShapeError(f"gradient names do not match parameters: {sorted(set(grads) ^ set(tensors))}")
    for name, g in grads.items():
        if g.shape != tensors[name].shape:
            raise ShapeError(f"gradient {name} has shape {g.shape}, expected {tensors[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {name} at step {state.step + 1}")
    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** step
    correction2 = 1.0 - b2 ** step
    new_tensors, m, v = {}, {}, {}
    for name, w in tensors.items():
        g = grads[name]
        m[name] = b1 * state.m.get(name, 0.0) + (1.0 - b1) * g
        v[name] = b2 * state.v.get(name, 0.0) + (1.0 - b2) * g * g
        m_hat = m[name] / correction1
        v_hat = v[name] / correction2
        new_tensors[name] = w - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = replace(state, step=step, m=m, v=v)
    if isinstance(params, UNetParams):
        return params.with_tensors(new_tensors), new_state
    return new_tensors, new_state


Sample = Tuple[np.ndarray, np.ndarray]


def mixup(sample_a: Sample, sample_b: Sample, lam: float) -> Sample:
    """
    Linear interpolation of two (input, one-hot target) pairs:
    x = lam * x_a + (1 - lam) * x_b, and the same for targets.
    :raises ValueError: if lam is outside [0, 1].
    :raises ShapeError: if the samples do not share shapes.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"mixup lambda must lie in [0, 1], got {lam}")
    (xa, ya), (xb, yb) = sample_a, sample_b
    if xa.shape != xb.shape or ya.shape != yb.shape:
        raise ShapeError(f"cannot mix samples of shapes {xa.shape}/{ya.shape} and {xb.shape}/{yb.shape}")
    if lam == 1.0:
        return np.array(xa, dtype=np.float64), np.array(ya, dtype=np.float64)
    return lam * xa + (1.0 - lam) * xb, lam * ya + (1.0 - lam) * yb


def sample_mixup_lambda(rng: np.random.Generator, alpha: float) -> float:
    """lambda ~ Beta(alpha, alpha); alpha <= 0 disables mixing (returns 1.0)."""
    if alpha <= 0:
        return 1.0
    return float(rng.beta(alpha, alpha))
