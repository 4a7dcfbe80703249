"""IMLY tensor container: the on-disk format for model checkpoints and
matrix dumps.

Layout (all integers little-endian):

    magic "IMLY" | format version u32 | tensor count u32
    per tensor: name length u16 | name UTF-8 | rank u8 | dims u32 each
                | row-major float32 little-endian data

Reads and writes operate on file objects so callers can append further
blocks after the tensor section (the language model stores its vocabulary
that way).
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

from .errors import DataError

MAGIC = b"IMLY"
FORMAT_VERSION = 1


def write_tensors(fp: BinaryIO, tensors: dict[str, np.ndarray]) -> None:
    """Write named tensors in insertion order. Data is cast to float32."""
    fp.write(MAGIC)
    fp.write(struct.pack("<II", FORMAT_VERSION, len(tensors)))
    for name, array in tensors.items():
        encoded = name.encode("utf-8")
        data = np.ascontiguousarray(array, dtype="<f4")
        fp.write(struct.pack("<H", len(encoded)))
        fp.write(encoded)
        fp.write(struct.pack("<B", data.ndim))
        for dim in data.shape:
            fp.write(struct.pack("<I", dim))
        fp.write(data.tobytes())


def read_tensors(fp: BinaryIO) -> dict[str, np.ndarray]:
    """Read the tensor section, leaving ``fp`` positioned just past it."""
    magic = fp.read(4)
    if magic != MAGIC:
        raise DataError(f"bad container magic {magic!r}, expected {MAGIC!r}")
    header = fp.read(8)
    if len(header) != 8:
        raise DataError("truncated container header")
    version, count = struct.unpack("<II", header)
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported container version {version}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        name_len = struct.unpack("<H", _read_exact(fp, 2))[0]
        name = _read_exact(fp, name_len).decode("utf-8")
        rank = struct.unpack("<B", _read_exact(fp, 1))[0]
        dims = struct.unpack(f"<{rank}I", _read_exact(fp, 4 * rank)) if rank else ()
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        raw = _read_exact(fp, 4 * size)
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    return tensors


def save_tensors(path: str, tensors: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fp:
        write_tensors(fp, tensors)


def load_tensors(path: str) -> dict[str, np.ndarray]:
    with open(path, "rb") as fp:
        return read_tensors(fp)


def _read_exact(fp: BinaryIO, n: int) -> bytes:
    data = fp.read(n)
    if len(data) != n:
        raise DataError("truncated container: unexpected end of file")
    return data
