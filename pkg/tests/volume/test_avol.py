import numpy as np
import pytest

from assemblynet.errors import AvolFormatError, BadMagicError, PayloadSizeMismatchError, TruncatedPayloadError
from assemblynet.volume import GridSpec, LabelMap, Volume, read_avol, write_avol
from assemblynet.volume.avol import HEADER_SIZE, decode_avol, encode_avol


def test_header_is_40_bytes():
    assert HEADER_SIZE == 40


def test_float_volume_file_size(tmp_path):
    vol = Volume(GridSpec((2, 2, 2)), np.arange(8.0).reshape(2, 2, 2))
    path = tmp_path / "v.avol"
    write_avol(path, vol)
    assert path.stat().st_size == 40 + 32


def test_roundtrip_volume_bit_exact(tmp_path, rng):
    vol = Volume(GridSpec((5, 3, 4), (1.0, 0.5, 2.0)), rng.normal(size=(4, 3, 5)))
    path = tmp_path / "nested" / "v.avol"
    write_avol(path, vol)
    back = read_avol(path)
    assert isinstance(back, Volume)
    assert back == vol
    assert back.data.tobytes() == vol.data.tobytes()


def test_roundtrip_labels(tmp_path, small_labels):
    path = tmp_path / "l.avol"
    write_avol(path, small_labels)
    back = read_avol(path)
    assert isinstance(back, LabelMap)
    assert back == small_labels
    assert back.num_labels == 3


def test_bad_magic():
    raw = bytearray(encode_avol(Volume(GridSpec((1, 1, 1)), np.zeros((1, 1, 1)))))
    raw[:4] = b"NOPE"
    with pytest.raises(BadMagicError):
        decode_avol(bytes(raw))


def test_truncated_payload():
    raw = encode_avol(Volume(GridSpec((2, 2, 2)), np.zeros((2, 2, 2))))
    with pytest.raises(TruncatedPayloadError):
        decode_avol(raw[:-4])
    with pytest.raises(TruncatedPayloadError):
        decode_avol(raw[:20])


def test_payload_size_mismatch():
    raw = encode_avol(Volume(GridSpec((2, 2, 2)), np.zeros((2, 2, 2))))
    with pytest.raises(PayloadSizeMismatchError):
        decode_avol(raw + b"\x00\x00\x00\x00")


def test_distinct_error_classes_share_base():
    for cls in (BadMagicError, TruncatedPayloadError, PayloadSizeMismatchError):
        assert issubclass(cls, AvolFormatError)
    assert len({BadMagicError, TruncatedPayloadError, PayloadSizeMismatchError}) == 3
