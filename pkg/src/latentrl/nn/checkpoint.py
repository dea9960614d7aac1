"""Flat binary checkpoint archive.

A checkpoint is a single file holding named arrays (network weights,
optimizer accumulators, counters).  The byte layout is fixed so files
round-trip bit-exactly:

    magic   8 bytes   b"LRLCKPT1"
    count   uint32    number of entries (little-endian, as all ints below)
    entry*  repeated `count` times:
        name_len  uint16
        name      name_len bytes, UTF-8
        dtype     uint8      0 = float32, 1 = float64, 2 = int64
        ndim      uint8
        dims      ndim * uint32
        data      product(dims) elements, little-endian, C order

Entries are written in sorted-name order, making the encoding of a given
mapping unique.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

__all__ = ["save_arrays", "load_arrays", "CheckpointError"]

_MAGIC = b"LRLCKPT1"
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("int64"): 2}


class CheckpointError(RuntimeError):
    pass


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    chunks = [_MAGIC, struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        if arr.dtype not in _CODES:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for entry {name!r}")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes(order="C"))
    Path(path).write_bytes(b"".join(chunks))


def load_arrays(path: str | Path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:8] != _MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    pos = 8
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos : pos + nlen].decode("utf-8")
        pos += nlen
        code, ndim = struct.unpack_from("<BB", buf, pos)
        pos += 2
        dims = struct.unpack_from(f"<{ndim}I", buf, pos)
        pos += 4 * ndim
        dtype = _DTYPES.get(code)
        if dtype is None:
            raise CheckpointError(f"{path}: unknown dtype code {code} for entry {name!r}")
        n = int(np.prod(dims)) if ndim else 1
        arr = np.frombuffer(buf, dtype=dtype, count=n, offset=pos).reshape(dims)
        pos += n * dtype.itemsize
        out[name] = arr.astype(dtype.newbyteorder("="), copy=True)
    return out
