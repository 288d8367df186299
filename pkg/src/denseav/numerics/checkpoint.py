"""DAVT tensor container.

Layout (little-endian): b"DAVT", u32 version, u32 tensor count, then per
tensor: u32 name byte length, UTF-8 name, u32 rank, rank x u32 dims, and a
float32 row-major payload. Tensors are written in sorted-name order.
"""

import struct

import numpy as np

from ..errors import CheckpointFormatError

MAGIC = b"DAVT"
VERSION = 1


def write_tensors(path, tensors):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(tensors)))
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name], dtype="<f4")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointFormatError(f"truncated checkpoint while reading {what}")
    return buf


def read_tensors(path):
    out = {}
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise CheckpointFormatError(f"{path}: bad magic, expected {MAGIC!r}")
        version, count = struct.unpack("<II", _read_exact(fh, 8, "header"))
        if version != VERSION:
            raise CheckpointFormatError(f"{path}: unsupported version {version}")
        for _ in range(count):
            (n,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
            name = _read_exact(fh, n, "name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, "rank"))
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "dims"))
            size = int(np.prod(dims, dtype=np.int64))
            data = np.frombuffer(_read_exact(fh, 4 * size, name), dtype="<f4")
            if name in out:
                raise CheckpointFormatError(f"{path}: duplicate tensor {name!r}")
            out[name] = data.reshape(dims).astype(np.float32)
        if fh.read(1):
            raise CheckpointFormatError(f"{path}: trailing bytes after {count} tensors")
    return out
