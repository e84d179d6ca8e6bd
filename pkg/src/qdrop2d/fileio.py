"""Field snapshots and CSV tables.

Snapshot layout (all integers little-endian)::

    b"QD2D" | uint32 version | uint32 header length | JSON header (space padded
    to a multiple of 8 bytes) | float64 pairs (re, im), row-major | sha256 of
    everything before it (32 bytes)
"""
from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"QD2D"
VERSION = 1
_DIGEST = 32


class SnapshotError(ValueError):
    pass


class VersionError(SnapshotError):
    pass


class ShapeError(SnapshotError):
    pass


class ChecksumError(SnapshotError):
    pass


def encode_field(data: np.ndarray, header: dict) -> bytes:
    data = np.asarray(data)
    if data.ndim != 2:
        raise ValueError("field must be two-dimensional")
    header = dict(header, shape=list(data.shape))
    text = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    text += b" " * (-(len(MAGIC) + 8 + len(text)) % 8)
    payload = np.ascontiguousarray(data, dtype="<c16").tobytes()
    body = MAGIC + struct.pack("<II", VERSION, len(text)) + text + payload
    return body + hashlib.sha256(body).digest()


def decode_field(blob: bytes) -> tuple[np.ndarray, dict]:
    if len(blob) < len(MAGIC) + 8 or blob[:4] != MAGIC:
        raise SnapshotError("not a QD2D snapshot")
    version, hlen = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise VersionError(f"unsupported snapshot version {version} (expected {VERSION})")
    if len(blob) < 12 + hlen + _DIGEST:
        raise ChecksumError("snapshot truncated")
    body, digest = blob[:-_DIGEST], blob[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError("snapshot checksum mismatch")
    try:
        header = json.loads(body[12 : 12 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SnapshotError(f"unreadable snapshot header: {exc}") from exc
    payload = body[12 + hlen :]
    shape = tuple(header.get("shape", ()))
    grid = header.get("grid")
    if grid is not None and tuple(shape) != (grid["nx"], grid["ny"]):
        raise ShapeError(f"header shape {shape} disagrees with grid {grid['nx']}x{grid['ny']}")
    if len(shape) != 2 or len(payload) != 16 * shape[0] * shape[1]:
        raise ShapeError(f"payload of {len(payload)} bytes does not hold a field of shape {shape}")
    data = np.frombuffer(payload, dtype="<c16").reshape(shape).astype(complex)
    return data, header


def write_field(path, data: np.ndarray, grid=None, params=None, t: float = 0.0,
                extra: dict | None = None) -> Path:
    header = {"t": float(t)}
    if grid is not None:
        header["grid"] = {"nx": grid.nx, "ny": grid.ny, "lx": grid.lx, "ly": grid.ly}
    if params is not None:
        header["params"] = params.as_dict()
    if extra:
        header.update(extra)
    path = Path(path)
    path.write_bytes(encode_field(data, header))
    return path


def read_field(path) -> tuple[np.ndarray, dict]:
    return decode_field(Path(path).read_bytes())


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns: list[str], rows, meta: dict | None = None) -> Path:
    """RFC-4180 CSV preceded by ``# key: value`` metadata lines."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}: {json.dumps(v, sort_keys=True)}\n")
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[dict, list[dict]]:
    """Inverse of :func:`write_csv`; values stay strings, metadata is JSON-decoded."""
    meta, lines = {}, []
    with Path(path).open(newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition(": ")
                meta[k] = json.loads(v)
            else:
                lines.append(line)
    rows = list(csv.DictReader(lines))
    return meta, rows
