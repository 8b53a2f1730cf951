"""Binary parameter checkpoints.

Layout: magic "SHCK", u32 little-endian parameter count, then per parameter:
u16 name length, UTF-8 name, u8 rank, u32 per-dimension sizes, float32
little-endian row-major data. Values are stored as float32 regardless of the
in-memory dtype; 64-bit mode exists for checking, not persistence.
"""

import struct

import numpy as np

from ..errors import DataError

MAGIC = b"SHCK"


def save_checkpoint(path, params):
    """Write an ordered {name: ndarray} mapping."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", len(params))
    for name, arr in params.items():
        encoded = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<B", arr.ndim)
        for dim in arr.shape:
            blob += struct.pack("<I", dim)
        blob += arr.tobytes()
    with open(path, "wb") as fh:
        fh.write(blob)


def load_checkpoint(path):
    """Read a checkpoint back as an ordered {name: float32 ndarray} mapping."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic {blob[:4]!r})")
    offset = 4
    (count,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    params = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        shape = struct.unpack_from(f"<{rank}I", blob, offset)
        offset += 4 * rank
        size = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f4", count=size, offset=offset).reshape(shape)
        offset += 4 * size
        params[name] = arr.copy()
    if offset != len(blob):
        raise DataError(f"{path}: {len(blob) - offset} trailing bytes after last parameter")
    return params
