"""MSPD tensor blobs: b"MSPD", u32 version, u32 rank, rank x u32 extents, f32 LE payload."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"MSPD"
VERSION = 1


class MSPDError(IOError):
    pass


def encode(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.ndim == 0:
        raise MSPDError("MSPD cannot store a rank-0 array")
    if any(n <= 0 for n in arr.shape):
        raise MSPDError(f"extents must be positive, got {arr.shape}")
    head = MAGIC + struct.pack("<II", VERSION, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode(buf: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(buf) < 12 or buf[:4] != MAGIC:
        raise MSPDError(f"{source}: not an MSPD blob")
    version, rank = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise MSPDError(f"{source}: unsupported MSPD version {version}")
    off = 12 + 4 * rank
    if len(buf) < off:
        raise MSPDError(f"{source}: truncated header")
    shape = struct.unpack_from(f"<{rank}I", buf, 12)
    count = int(np.prod(shape))
    if len(buf) != off + 4 * count:
        raise MSPDError(f"{source}: payload is {len(buf) - off} bytes, expected {4 * count}")
    return np.frombuffer(buf, dtype="<f4", count=count, offset=off).astype(np.float32).reshape(shape)


def save(path, arr: np.ndarray) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode(arr))
    except OSError as exc:
        raise MSPDError(f"cannot write {path}: {exc}") from exc


def load(path) -> np.ndarray:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise MSPDError(f"cannot read {path}: {exc}") from exc
    return decode(buf, str(path))
