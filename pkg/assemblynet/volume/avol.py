"""
AVOL binary volume format (little-endian):

    magic "AVOL" | version u32 = 1 | dtype u32 (0 = float32 intensity, 1 = uint16 labels)
    | num_labels u32 (0 for intensity) | dims u32 x 3 | spacing float32 x 3 | payload

The header is 40 bytes; the payload is the voxel array in x-fastest order.
"""

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import AvolFormatError, BadMagicError, PayloadSizeMismatchError, TruncatedPayloadError
from .grid import INTENSITY_DTYPE, LABEL_DTYPE, GridSpec, LabelMap, Volume

__all__ = ["read_avol", "write_avol", "encode_avol", "decode_avol", "HEADER_SIZE"]

logger = logging.getLogger(__name__)

MAGIC = b"AVOL"
VERSION = 1
DTYPE_INTENSITY = 0
DTYPE_LABELS = 1
_HEADER = struct.Struct("<4sIII3I3f")
HEADER_SIZE = _HEADER.size

PathLike = Union[str, Path]


def encode_avol(item: Union[Volume, LabelMap]) -> bytes:
    """Serialize a volume or label map to AVOL bytes."""
    if isinstance(item, LabelMap):
        dtype_code, num_labels, payload = DTYPE_LABELS, item.num_labels, item.labels.astype(LABEL_DTYPE)
    elif isinstance(item, Volume):
        dtype_code, num_labels, payload = DTYPE_INTENSITY, 0, item.data.astype(INTENSITY_DTYPE)
    else:
        raise TypeError(f"cannot encode {type(item).__name__} as AVOL")
    header = _HEADER.pack(MAGIC, VERSION, dtype_code, num_labels, *item.grid.dims, *item.grid.spacing)
    return header + np.ascontiguousarray(payload).tobytes()


def decode_avol(raw: bytes) -> Union[Volume, LabelMap]:
    """
    Parse AVOL bytes.
    :raises BadMagicError: if the file does not start with "AVOL".
    :raises TruncatedPayloadError: if the header or payload is shorter than declared.
    :raises PayloadSizeMismatchError: if bytes remain after the declared payload.
    :raises AvolFormatError: on an unknown version or dtype code.
    """
    if raw[:4] != MAGIC:
        raise BadMagicError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < HEADER_SIZE:
        raise TruncatedPayloadError(f"header truncated: {len(raw)} of {HEADER_SIZE} bytes")
    _, version, dtype_code, num_labels, dx, dy, dz, sx, sy, sz = _HEADER.unpack_from(raw)
    if version != VERSION:
        raise AvolFormatError(f"unsupported AVOL version {version}")
    if dtype_code == DTYPE_INTENSITY:
        dtype = INTENSITY_DTYPE
    elif dtype_code == DTYPE_LABELS:
        dtype = LABEL_DTYPE
    else:
        raise AvolFormatError(f"unknown AVOL dtype code {dtype_code}")
    try:
        grid = GridSpec((dx, dy, dz), (sx, sy, sz))
    except ValueError as exc:
        raise AvolFormatError(f"invalid AVOL grid: {exc}") from exc
    expected = grid.num_voxels * dtype.itemsize
    payload = raw[HEADER_SIZE:]
    if len(payload) < expected:
        raise TruncatedPayloadError(f"payload truncated: {len(payload)} of {expected} bytes")
    if len(payload) > expected:
        raise PayloadSizeMismatchError(
            f"payload has {len(payload)} bytes but dims {grid.dims} need {expected}"
        )
    array = np.frombuffer(payload, dtype=dtype).reshape(grid.shape)
    if dtype_code == DTYPE_LABELS:
        return LabelMap(grid, array, num_labels)
    return Volume(grid, array)


def write_avol(path: PathLike, item: Union[Volume, LabelMap]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_avol(item))
    logger.debug("wrote %s (%s)", path, item)


def read_avol(path: PathLike) -> Union[Volume, LabelMap]:
    """Read a volume or label map; see ``decode_avol`` for the error cases."""
    return decode_avol(Path(path).read_bytes())
