"""Checkpoint container: named float64 arrays in one binary file.

Layout (all integers little-endian, payload C-order float64 little-endian):

    bytes 0-7   magic b"STRATA01"
    uint32      entry count
    per entry:
        uint16  name length in bytes
        bytes   name (UTF-8)
        uint8   ndim
        uint32* ndim dimension sizes
        float64* product(dims) values

Entries are written in sorted-name order, so a checkpoint's bytes are a
pure function of its contents. Model parameters are stored under their
parameter names, optimizer accumulators under "adagrad/<name>", and scalar
metadata (dimensions, mode flags, progress counters) under "meta/<key>".
The layout is append-only stable: readers must ignore unknown names.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"STRATA01"


def save_checkpoint(path, arrays: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            # tobytes() already emits C order; asarray (not ascontiguousarray)
            # keeps 0-d arrays 0-d
            arr = np.asarray(arrays[name], dtype="<f8")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read every entry back. Raises ValueError on a foreign or cut file."""
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        (count,) = struct.unpack("<I", fh.read(4))
        out = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim)) if ndim else ()
            size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            payload = fh.read(8 * size)
            if len(payload) != 8 * size:
                raise ValueError(f"{path}: truncated entry {name!r}")
            out[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
        return out


def meta_scalar(value) -> np.ndarray:
    return np.array(float(value))


def read_meta(arrays: dict[str, np.ndarray], key: str, default=None) -> float:
    name = f"meta/{key}"
    if name not in arrays:
        if default is None:
            raise KeyError(f"checkpoint missing {name}")
        return float(default)
    return float(arrays[name])
