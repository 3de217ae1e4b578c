"""
AWTS weights file (little-endian):

    magic "AWTS" | version u32 = 1 | in_channels, num_classes, base_filters, depth u32 x 4
    | dropout_rate f64 | tensor count u32
    | per tensor: name length u32 | UTF-8 name | ndim u32 | shape u32 x ndim | float32 payload

Tensors are stored in canonical order (encoder, decoder, head).
"""

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import AvolFormatError, BadMagicError, TruncatedPayloadError, PayloadSizeMismatchError
from .unet import UNetConfig, UNetParams

__all__ = ["encode_weights", "decode_weights", "write_weights", "read_weights"]

logger = logging.getLogger(__name__)

MAGIC = b"AWTS"
VERSION = 1
_HEADER = struct.Struct("<4sI4IdI")
_U32 = struct.Struct("<I")
_WEIGHT_DTYPE = np.dtype("<f4")

PathLike = Union[str, Path]


def encode_weights(params: UNetParams) -> bytes:
    c = params.config
    tensors = list(params.named())
    chunks = [
        _HEADER.pack(MAGIC, VERSION, c.in_channels, c.num_classes, c.base_filters, c.depth, c.dropout_rate, len(tensors))
    ]
    for name, tensor in tensors:
        encoded = name.encode("utf-8")
        chunks.append(_U32.pack(len(encoded)) + encoded)
        chunks.append(struct.pack(f"<I{tensor.ndim}I", tensor.ndim, *tensor.shape))
        chunks.append(np.ascontiguousarray(tensor, dtype=_WEIGHT_DTYPE).tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, raw: bytes) -> None:
        self.raw = raw
        self.pos = 0

    def take(self, size: int, what: str) -> bytes:
        if self.pos + size > len(self.raw):
            raise TruncatedPayloadError(f"weights file truncated while reading {what}")
        chunk = self.raw[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]


def decode_weights(raw: bytes) -> UNetParams:
    """
    :raises BadMagicError: if the data does not start with "AWTS".
    :raises TruncatedPayloadError: if the data ends early.
    :raises PayloadSizeMismatchError: on trailing bytes.
    :raises AvolFormatError: on an unknown version or an invalid config echo.
    """
    if raw[:4] != MAGIC:
        raise BadMagicError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    reader = _Reader(raw)
    _, version, in_ch, classes, base, depth, rate, count = _HEADER.unpack(reader.take(_HEADER.size, "header"))
    if version != VERSION:
        raise AvolFormatError(f"unsupported AWTS version {version}")
    try:
        config = UNetConfig(in_ch, classes, base, depth, rate)
    except ValueError as exc:
        raise AvolFormatError(f"invalid config in weights file: {exc}") from exc
    tensors = {}
    for _ in range(count):
        name = reader.take(reader.u32("name length"), "name").decode("utf-8")
        ndim = reader.u32(f"{name} ndim")
        shape = struct.unpack(f"<{ndim}I", reader.take(4 * ndim, f"{name} shape"))
        size = int(np.prod(shape, dtype=np.int64)) * _WEIGHT_DTYPE.itemsize
        payload = np.frombuffer(reader.take(size, f"{name} payload"), dtype=_WEIGHT_DTYPE)
        tensors[name] = payload.reshape(shape).astype(np.float64)
    if reader.pos != len(raw):
        raise PayloadSizeMismatchError(f"{len(raw) - reader.pos} trailing bytes after the last tensor")
    try:
        return UNetParams.from_flat(config, tensors)
    except ValueError as exc:
        raise AvolFormatError(f"weights do not match their config: {exc}") from exc


def write_weights(path: PathLike, params: UNetParams) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_weights(params))
    logger.debug("wrote %s (%d parameters)", path, params.num_parameters())


def read_weights(path: PathLike) -> UNetParams:
    return decode_weights(Path(path).read_bytes())
