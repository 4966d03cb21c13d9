"""Binary tensor formats.

Snapshot (fixtures): magic 'MRHT', u32 version=1, u32 rank, u32 dims[rank],
then float32 little-endian values, row-major.

Checkpoint: magic 'MRHW', u32 version, u32 tensor count, then per tensor a
u16 name length, UTF-8 name, u32 rank, u32 dims[], float32 values. Round
trips are bit-exact.
"""

import struct

import numpy as np

SNAPSHOT_MAGIC = b"MRHT"
CHECKPOINT_MAGIC = b"MRHW"
VERSION = 1


def _write_array(f, arr):
    arr = np.ascontiguousarray(arr, dtype="<f4")
    f.write(struct.pack("<I", arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    f.write(arr.tobytes())


def _read_array(f):
    (rank,) = struct.unpack("<I", f.read(4))
    dims = struct.unpack(f"<{rank}I", f.read(4 * rank)) if rank else ()
    count = int(np.prod(dims)) if dims else 1
    raw = f.read(4 * count)
    if len(raw) != 4 * count:
        raise ValueError("truncated tensor payload")
    return np.frombuffer(raw, dtype="<f4").reshape(dims).copy()


def write_tensor(path, arr):
    with open(path, "wb") as f:
        f.write(SNAPSHOT_MAGIC)
        f.write(struct.pack("<I", VERSION))
        _write_array(f, arr)


def read_tensor(path):
    with open(path, "rb") as f:
        if f.read(4) != SNAPSHOT_MAGIC:
            raise ValueError(f"{path}: not a tensor snapshot")
        (version,) = struct.unpack("<I", f.read(4))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported snapshot version {version}")
        return _read_array(f)


def write_checkpoint(path, named_arrays):
    """named_arrays: ordered (name, ndarray) pairs or a dict."""
    items = list(named_arrays.items()) if isinstance(named_arrays, dict) else list(named_arrays)
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(items)))
        for name, arr in items:
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            _write_array(f, arr)


def read_checkpoint(path):
    out = {}
    with open(path, "rb") as f:
        if f.read(4) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", f.read(4))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (count,) = struct.unpack("<I", f.read(4))
        for _ in range(count):
            (nlen,) = struct.unpack("<H", f.read(2))
            name = f.read(nlen).decode("utf-8")
            out[name] = _read_array(f)
    return out
