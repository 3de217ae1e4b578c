"""
Synthetic labeled phantoms: the desk-scale stand-in for annotated T1w MRI.

Anatomy is a stack of nested ellipsoidal shells (label k sits inside label k - 1)
plus one left/right pair of small spheres, so multi-label Dice, flip pairing and the
coarse-to-fine cascade all have something to work on. Intensity is a per-label mean
times a smooth bias field plus seeded Gaussian noise.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from ..errors import DataError
from ..volume.grid import GridSpec, LabelMap, Volume
from ..volume.ops import RigidTransform, rigid_resample

__all__ = [
    "PhantomSpec",
    "Phantom",
    "PhantomGeometry",
    "phantom_geometry",
    "RigidTransform",
    "generate_phantom",
    "generate_pool",
    "phantom_label_pairs",
    "phantom_noise",
    "simulate_rescan",
    "random_rigid_transform",
    "foreground_mask",
]

logger = logging.getLogger(__name__)

SHAPE_SCALE_RANGE = (0.8, 1.2)
# outer shell semi-axes as a fraction of dims (x, y, z)
_OUTER_RADII = (0.34, 0.38, 0.32)
_INNERMOST_FACTOR = 0.55
_PAIR_RADIUS = 0.09
_PAIR_OFFSET = 0.5
_BACKGROUND, _ODD_SHELL, _EVEN_SHELL, _PAIR = 0.05, 0.8, 0.45, 0.2
_MAX_OUT_OF_FRAME = 0.05
_GEOMETRY_STREAM = 1
# centre jitter as a fraction of dims, y and z only so the pair stays mirrored
_CENTRE_JITTER = 0.02


@dataclass(frozen=True)
class PhantomSpec:
    dims: Tuple[int, int, int] = (32, 32, 32)
    num_labels: int = 5
    noise_sigma: float = 0.05
    bias_amplitude: float = 0.1
    shape_scale: float = 1.0
    seed: int = 0
    jitter: float = 0.05

    def __post_init__(self) -> None:
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d < 4 or d % 4 for d in dims):
            raise ValueError(f"phantom dims must be three positive multiples of 4, got {self.dims}")
        if self.num_labels < 2:
            raise ValueError(f"num_labels must be >= 2, got {self.num_labels}")
        if self.noise_sigma < 0 or not 0 <= self.bias_amplitude < 1:
            raise ValueError("noise_sigma must be >= 0 and bias_amplitude in [0, 1)")
        lo, hi = SHAPE_SCALE_RANGE
        if not lo <= self.shape_scale <= hi:
            raise ValueError(f"shape_scale must lie in [{lo}, {hi}], got {self.shape_scale}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if not 0 <= self.jitter <= 0.1:
            raise ValueError(f"jitter must lie in [0, 0.1], got {self.jitter}")
        object.__setattr__(self, "dims", dims)

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.dims)

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "num_labels": self.num_labels,
            "noise_sigma": self.noise_sigma,
            "bias_amplitude": self.bias_amplitude,
            "shape_scale": self.shape_scale,
            "seed": self.seed,
            "jitter": self.jitter,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PhantomSpec":
        return cls(
            tuple(data["dims"]), data["num_labels"], data["noise_sigma"],
            data["bias_amplitude"], data["shape_scale"], data["seed"], data.get("jitter", 0.0),
        )


@dataclass(frozen=True)
class Phantom:
    """
    One generated subject. Unpacks as ``t1, gt, mask``; ``clean`` is the noise-free
    biased image (float64, storage order) that rescans are resampled from.
    """

    spec: PhantomSpec
    t1: Volume
    gt: LabelMap
    mask: LabelMap
    clean: np.ndarray

    def __iter__(self) -> Iterator:
        return iter((self.t1, self.gt, self.mask))


def phantom_label_pairs(num_labels: int) -> Tuple[Tuple[int, int], ...]:
    """The (left, right) label pair, present when there are at least 4 labels."""
    return ((num_labels - 2, num_labels - 1),) if num_labels >= 4 else ()


def _shell_count(num_labels: int) -> int:
    return num_labels - 3 if num_labels >= 4 else num_labels - 1


class PhantomGeometry(NamedTuple):
    """Ellipsoid parameters of one phantom, (x, y, z) voxel units."""

    centre: np.ndarray
    radii: np.ndarray
    pair_radius: np.ndarray

    def shell_factors(self, num_labels: int) -> List[float]:
        """Semi-axis scale of shells 1..n, outermost first."""
        shells = _shell_count(num_labels)
        return [1.0 - (1.0 - _INNERMOST_FACTOR) * (k - 1) / max(shells - 1, 1) for k in range(1, shells + 1)]

    def pair_centres(self) -> Tuple[np.ndarray, np.ndarray]:
        offset = np.array([_PAIR_OFFSET * self.radii[0], 0.0, 0.0])
        return self.centre - offset, self.centre + offset


def phantom_geometry(spec: PhantomSpec) -> PhantomGeometry:
    """
    Seeded anatomy of ``spec``: outer semi-axes scaled by ``shape_scale`` and jittered by
    up to ``jitter`` per axis, centre moved in y and z only. The x centre stays on the
    mid-sagittal plane so the left/right pair mirrors exactly.
    """
    dims = np.asarray(spec.dims, dtype=np.float64)
    centre = (dims - 1.0) / 2.0
    radii = np.asarray(_OUTER_RADII) * dims * spec.shape_scale
    pair_radius = _PAIR_RADIUS * dims * spec.shape_scale
    if spec.jitter > 0:
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(_GEOMETRY_STREAM,)))
        radii = radii * rng.uniform(1.0 - spec.jitter, 1.0 + spec.jitter, size=3)
        shift = rng.uniform(-_CENTRE_JITTER, _CENTRE_JITTER, size=3) * dims
        shift[0] = 0.0
        centre = centre + shift
    return PhantomGeometry(centre, radii, pair_radius)


def _label_field(spec: PhantomSpec) -> np.ndarray:
    geometry = phantom_geometry(spec)
    z, y, x = np.indices(spec.grid.shape, dtype=np.float64)
    coords = (x, y, z)

    def inside(centre: np.ndarray, radii: np.ndarray) -> np.ndarray:
        return sum(((c - m) / r) ** 2 for c, m, r in zip(coords, centre, radii)) <= 1.0

    labels = np.zeros(spec.grid.shape, dtype=np.int64)
    for k, factor in enumerate(geometry.shell_factors(spec.num_labels), start=1):
        labels[inside(geometry.centre, geometry.radii * factor)] = k
    for left, right in phantom_label_pairs(spec.num_labels):
        for label, centre in zip((left, right), geometry.pair_centres()):
            labels[inside(centre, geometry.pair_radius)] = label
    return labels


def _bias_field(shape: Tuple[int, int, int], amplitude: float, rng: np.random.Generator) -> np.ndarray:
    if amplitude == 0:
        return np.ones(shape)
    axes = np.meshgrid(*(np.linspace(0.0, 1.0, n) for n in shape), indexing="ij")
    direction = rng.uniform(-1.0, 1.0, size=3)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    field = np.cos(np.pi * sum(d * a for d, a in zip(direction, axes)) + phase)
    peak = np.abs(field).max()
    return 1.0 + amplitude * (field / peak if peak > 0 else field)


def phantom_noise(shape: Tuple[int, int, int], sigma: float, seed: int) -> np.ndarray:
    """Gaussian noise from a counter-based Philox stream keyed by ``seed``."""
    if sigma == 0:
        return np.zeros(shape)
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    return sigma * rng.standard_normal(shape)


def foreground_mask(gt: LabelMap) -> LabelMap:
    dilated = ndimage.binary_dilation(gt.binary(), iterations=1)
    return LabelMap(gt.grid, dilated.astype(np.uint16), 2)


def generate_phantom(spec: PhantomSpec) -> Phantom:
    """
    Deterministic in ``spec.seed``: the same spec gives identical bytes.
    """
    labels = _label_field(spec)
    shells = _shell_count(spec.num_labels)
    means = np.full(spec.num_labels, _PAIR)
    means[0] = _BACKGROUND
    for k in range(1, shells + 1):
        means[k] = _ODD_SHELL if k % 2 else _EVEN_SHELL
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    clean = means[labels] * _bias_field(spec.grid.shape, spec.bias_amplitude, rng)
    clean.setflags(write=False)
    t1 = Volume(spec.grid, clean + phantom_noise(spec.grid.shape, spec.noise_sigma, spec.seed))
    gt = LabelMap(spec.grid, labels, spec.num_labels)
    return Phantom(spec, t1, gt, foreground_mask(gt), clean)


def generate_pool(
    n: int,
    stratify: bool,
    base_seed: int,
    template: Optional[PhantomSpec] = None,
    prefix: str = "p",
    scale_range: Sequence[float] = SHAPE_SCALE_RANGE,
    workers: int = 1,
) -> List[Tuple[str, Phantom]]:
    """
    ``n`` phantoms with ids ``<prefix>000``, ``<prefix>001``, ...
    Stratified pools place shape_scale on a uniform grid over ``scale_range`` (a single
    phantom sits at the midpoint); otherwise scales are drawn i.i.d. from the base seed.
    Every phantom gets its own seed derived from ``base_seed`` and its position.
    :raises ValueError: if n < 1.
    """
    if n < 1:
        raise ValueError(f"pool size must be >= 1, got {n}")
    template = template if template is not None else PhantomSpec()
    lo, hi = (float(s) for s in scale_range)
    if stratify:
        scales = [(lo + hi) / 2.0] if n == 1 else list(np.linspace(lo, hi, n))
    else:
        scales = list(np.random.default_rng(np.random.SeedSequence(base_seed)).uniform(lo, hi, size=n))
    specs = [
        replace(
            template,
            shape_scale=float(scale),
            seed=int(np.random.SeedSequence(base_seed, spawn_key=(i,)).generate_state(1, dtype=np.uint64)[0]),
        )
        for i, scale in enumerate(scales)
    ]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        phantoms = list(pool.map(generate_phantom, specs))
    logger.info("generated %d phantoms (%s) from seed %d", n, "stratified" if stratify else "random", base_seed)
    return [(f"{prefix}{i:03d}", phantom) for i, phantom in enumerate(phantoms)]


def random_rigid_transform(
    rng: np.random.Generator, max_angle: float = 0.05, max_shift: float = 1.5
) -> RigidTransform:
    """Small random head motion: angles within +-max_angle rad, shifts within +-max_shift voxels."""
    return RigidTransform(
        tuple(rng.uniform(-max_angle, max_angle, size=3)),
        tuple(rng.uniform(-max_shift, max_shift, size=3)),
    )


def simulate_rescan(phantom: Phantom, transform: RigidTransform, noise_seed: int) -> Tuple[Volume, LabelMap]:
    """
    Second acquisition of ``phantom`` after rigid motion: the noise-free image moves by
    ``transform`` (trilinear), fresh noise keyed by ``noise_seed`` is added, and the
    ground truth moves with it (nearest neighbour).
    :raises ValueError: if a shift exceeds dims / 8 or an angle exceeds 0.2 rad.
    :raises DataError: if more than 5% of the foreground leaves the frame.
    """
    spec = phantom.spec
    for axis, (shift, dim) in enumerate(zip(transform.translation, spec.dims)):
        if abs(shift) > dim / 8:
            raise ValueError(f"translation {shift} on axis {'xyz'[axis]} exceeds {dim / 8}")
    if any(abs(angle) > 0.2 for angle in transform.rotation):
        raise ValueError(f"rotation {transform.rotation} exceeds 0.2 rad")
    if transform.is_identity():
        moved = phantom.clean
        gt_rescan = phantom.gt
    else:
        moved = rigid_resample(Volume(spec.grid, phantom.clean), transform).data.astype(np.float64)
        gt_rescan = rigid_resample(phantom.gt, transform)
    before = int(phantom.gt.binary().sum())
    after = int(gt_rescan.binary().sum())
    if before and (before - after) / before > _MAX_OUT_OF_FRAME:
        raise DataError(f"rescan moved {before - after} of {before} foreground voxels out of frame")
    t1 = Volume(spec.grid, moved + phantom_noise(spec.grid.shape, spec.noise_sigma, noise_seed))
    return t1, gt_rescan
