"""Flat binary checkpoint format for named parameter arrays.

Layout (little-endian throughout):

    magic     8 bytes   b"LSKPT001"
    count     uint32    number of records
    records   repeated  uint16 name length, utf-8 name,
                        uint8 ndim, uint32 dims[ndim],
                        float64 values (row-major)

Records preserve insertion order and round-trip bit-exactly.
"""

from __future__ import annotations

import os
import struct
import tempfile
from collections import OrderedDict
from typing import Iterable, Mapping

import numpy as np

MAGIC = b"LSKPT001"


def save_params(path: str | os.PathLike, records: Mapping[str, np.ndarray] | Iterable[tuple[str, np.ndarray]]) -> None:
    items = list(records.items()) if isinstance(records, Mapping) else list(records)
    chunks = [MAGIC, struct.pack("<I", len(items))]
    for name, arr in items:
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype("<f8").tobytes())
    atomic_write_bytes(path, b"".join(chunks))


def load_params(path: str | os.PathLike) -> "OrderedDict[str, np.ndarray]":
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise ValueError(f"{path}: not a parameter checkpoint (bad magic)")
    (count,) = struct.unpack_from("<I", blob, 8)
    out: OrderedDict[str, np.ndarray] = OrderedDict()
    offset = 12
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        values = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).reshape(shape)
        offset += 8 * n
        out[name] = values.copy()
    return out


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
