import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qdrop2d.fileio import (MAGIC, ChecksumError, ShapeError, SnapshotError, VersionError,
                            decode_field, encode_field, read_csv, read_field, write_csv, write_field)
from qdrop2d.potential import ModelParams

any_float = st.floats(allow_nan=True, allow_infinity=True, width=64)


@settings(max_examples=60, deadline=None)
@given(arrays(np.complex128, st.tuples(st.integers(1, 9), st.integers(1, 9)),
              elements=st.builds(complex, any_float, any_float)))
def test_roundtrip_is_bit_exact(data):
    out, header = decode_field(encode_field(data, {"t": 1.25}))
    assert out.shape == data.shape
    assert out.view(np.uint64).tobytes() == data.view(np.uint64).tobytes()
    assert header["t"] == 1.25


def test_header_alignment_and_layout():
    blob = encode_field(np.zeros((2, 3), complex), {"note": "x"})
    assert blob[:4] == MAGIC
    version, hlen = struct.unpack_from("<II", blob, 4)
    assert version == 1 and (12 + hlen) % 8 == 0
    assert len(blob) == 12 + hlen + 16 * 6 + 32


def test_file_roundtrip_with_metadata(tmp_path, g32, rng):
    f = rng.standard_normal(g32.shape) + 1j * rng.standard_normal(g32.shape)
    path = write_field(tmp_path / "a.qd2d", f, g32, ModelParams(mu=3.0), t=0.5, extra={"tag": "x"})
    out, header = read_field(path)
    assert np.array_equal(out, f)
    assert header["grid"] == {"nx": 32, "ny": 32, "lx": 8.0, "ly": 8.0}
    assert header["params"]["mu"] == 3.0 and header["t"] == 0.5 and header["tag"] == "x"


def test_truncated_file(tmp_path):
    blob = encode_field(np.ones((4, 4), complex), {})
    with pytest.raises(ChecksumError):
        decode_field(blob[:-10])
    with pytest.raises(ChecksumError):
        decode_field(blob[:40])


def test_corrupted_payload():
    blob = bytearray(encode_field(np.ones((4, 4), complex), {}))
    blob[-40] ^= 1
    with pytest.raises(ChecksumError):
        decode_field(bytes(blob))


def test_version_and_magic():
    blob = bytearray(encode_field(np.ones((2, 2), complex), {}))
    blob[4:8] = struct.pack("<I", 2)
    with pytest.raises(VersionError):
        decode_field(bytes(blob))
    with pytest.raises(SnapshotError):
        decode_field(b"NOPE" + bytes(blob[4:]))


def test_grid_metadata_mismatch(g32):
    import hashlib
    import json

    # a self-consistent file whose grid block disagrees with its payload
    header = {"grid": {"nx": 16, "ny": 16, "lx": 8.0, "ly": 8.0}, "shape": [32, 32]}
    text = json.dumps(header).encode()
    text += b" " * (-(12 + len(text)) % 8)
    body = MAGIC + struct.pack("<II", 1, len(text)) + text + np.zeros((32, 32), "<c16").tobytes()
    with pytest.raises(ShapeError):
        decode_field(body + hashlib.sha256(body).digest())
    header = {"shape": [8, 8]}
    text = json.dumps(header).encode()
    text += b" " * (-(12 + len(text)) % 8)
    body = MAGIC + struct.pack("<II", 1, len(text)) + text + np.zeros((4, 4), "<c16").tobytes()
    with pytest.raises(ShapeError):
        decode_field(body + hashlib.sha256(body).digest())


def test_rejects_non_2d():
    with pytest.raises(ValueError):
        encode_field(np.zeros(4, complex), {})


def test_csv_roundtrip(tmp_path):
    rows = [(0.1, 1, True, None, 'quote "me", ok'), (1 / 3, 2, False, 5, "plain")]
    path = write_csv(tmp_path / "t.csv", ["a", "b", "c", "d", "e"], rows,
                     {"folds": [1.5, 2.0], "name": "x"})
    meta, out = read_csv(path)
    assert meta == {"folds": [1.5, 2.0], "name": "x"}
    assert float(out[1]["a"]) == 1 / 3
    assert out[0]["c"] == "1" and out[0]["d"] == "" and out[0]["e"] == 'quote "me", ok'
    assert path.read_bytes().count(b"\r\n") == 3
