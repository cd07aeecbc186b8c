"""Binary feature shard files.

Little-endian layout, bit-exact across platforms:

    magic    8 bytes  b"PCFSHARD"
    u16      length of the schema version string, then that many utf-8 bytes
    u32      total feature dimension
    u64      row count
    rows     u16 pair-id length + utf-8 bytes, u8 label,
             total_dim float16 values

Values are computed in single precision and stored in half precision;
all feature magnitudes are <= 1 by construction except the scaled raw
distance, well inside float16 range.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import FormatError

MAGIC = b"PCFSHARD"
_HEAD = struct.Struct("<H")
_DIM = struct.Struct("<I")
_COUNT = struct.Struct("<Q")
_IDLEN = struct.Struct("<H")


@dataclass(frozen=True)
class ShardHeader:
    schema_version: str
    total_dim: int
    count: int


def write_feature_shard(
    path, ids: Sequence[str], X: np.ndarray, y: np.ndarray, schema_version: str
) -> None:
    X = np.asarray(X)
    if X.ndim != 2 or len(ids) != X.shape[0] or len(y) != X.shape[0]:
        raise ValueError("ids, X and y must agree on the row count")
    rows = X.astype("<f2")
    version_bytes = schema_version.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEAD.pack(len(version_bytes)))
        fh.write(version_bytes)
        fh.write(_DIM.pack(X.shape[1]))
        fh.write(_COUNT.pack(X.shape[0]))
        for i, pair_id in enumerate(ids):
            id_bytes = pair_id.encode("utf-8")
            fh.write(_IDLEN.pack(len(id_bytes)))
            fh.write(id_bytes)
            fh.write(b"\x01" if y[i] else b"\x00")
            fh.write(rows[i].tobytes())


def _read_exact(fh, n: int, path, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"{path}: truncated while reading {what}")
    return data


def read_shard_header(path) -> ShardHeader:
    with open(path, "rb") as fh:
        return _read_header(fh, path)


def _read_header(fh, path) -> ShardHeader:
    magic = _read_exact(fh, len(MAGIC), path, "magic")
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    (vlen,) = _HEAD.unpack(_read_exact(fh, _HEAD.size, path, "version length"))
    version = _read_exact(fh, vlen, path, "version").decode("utf-8")
    (dim,) = _DIM.unpack(_read_exact(fh, _DIM.size, path, "dimension"))
    (count,) = _COUNT.unpack(_read_exact(fh, _COUNT.size, path, "row count"))
    return ShardHeader(version, dim, count)


def read_feature_shard(path) -> tuple[list[str], np.ndarray, np.ndarray, ShardHeader]:
    """Read one shard fully; values come back as float32."""
    with open(path, "rb") as fh:
        header = _read_header(fh, path)
        row_bytes = header.total_dim * 2
        ids: list[str] = []
        X = np.zeros((header.count, header.total_dim), dtype=np.float32)
        y = np.zeros(header.count, dtype=bool)
        for i in range(header.count):
            (idlen,) = _IDLEN.unpack(_read_exact(fh, _IDLEN.size, path, f"row {i} id length"))
            ids.append(_read_exact(fh, idlen, path, f"row {i} id").decode("utf-8"))
            label = _read_exact(fh, 1, path, f"row {i} label")
            y[i] = label != b"\x00"
            values = np.frombuffer(_read_exact(fh, row_bytes, path, f"row {i} values"), dtype="<f2")
            X[i] = values.astype(np.float32)
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after {header.count} rows")
    return ids, X, y, header
