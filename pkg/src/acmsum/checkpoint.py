"""Flat binary parameter checkpoints.

Layout (all integers little-endian):

    magic   4 bytes  b"ACMT"
    version u32      currently 1
    then per tensor, in write order:
        name_len u32
        name     UTF-8 bytes
        rank     u32
        dims     rank * u64
        payload  little-endian float64, row-major

Round trips are bit-exact; floats are written raw, never formatted.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"ACMT"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype=np.float64)
            if not arr.flags.c_contiguous:
                arr = np.ascontiguousarray(arr)  # keeps ndim, unlike the 0-d case above
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b"")
            fh.write(arr.astype("<f8", copy=False).tobytes())


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    offset = 8
    out: dict[str, np.ndarray] = {}
    while offset < len(blob):
        (name_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        dims = struct.unpack_from(f"<{rank}Q", blob, offset) if rank else ()
        offset += 8 * rank
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(dims)
        offset += 8 * count
        if name in out:
            raise CheckpointError(f"{path}: duplicate tensor name {name!r}")
        out[name] = arr.astype(np.float64)
    return out
