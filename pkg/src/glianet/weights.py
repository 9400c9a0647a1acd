"""Binary weight-file format shared by the backbone, adapter, and head.

Layout (all little-endian):
    magic  b"GLIA"
    u32    version (1)
    u32    tensor count
    per tensor:
        u16   name length, then UTF-8 name
        u8    rank
        u32   dims[rank]
        f32   raw values (row-major)

Metadata (e.g. an embedded config text block) travels as a rank-1 entry whose
raw bytes are UTF-8 text padded with newlines to a multiple of 4.
"""

from __future__ import annotations

import struct

import numpy as np

__all__ = [
    "WeightFileError",
    "BadMagicError",
    "BadVersionError",
    "TruncatedFileError",
    "save_weights",
    "load_weights",
    "pack_text",
    "unpack_text",
    "MAGIC",
    "VERSION",
]

MAGIC = b"GLIA"
VERSION = 1


class WeightFileError(ValueError):
    pass


class BadMagicError(WeightFileError):
    pass


class BadVersionError(WeightFileError):
    pass


class TruncatedFileError(WeightFileError):
    pass


def save_weights(tensors: dict, path: str) -> None:
    """Write a name -> array mapping; arrays are stored as float32."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors.items():
            # note: ascontiguousarray would promote rank-0 to rank-1
            data = np.asarray(arr, dtype="<f4")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", data.ndim))
            for d in data.shape:
                f.write(struct.pack("<I", d))
            f.write(data.tobytes())


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedFileError(f"truncated weight file while reading {what}")
    return buf


def load_weights(path: str) -> dict:
    """Read a weight file back into a name -> float32 array mapping."""
    out: dict = {}
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != MAGIC:
            raise BadMagicError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        version, count = struct.unpack("<II", _read_exact(f, 8, "header"))
        if version != VERSION:
            raise BadVersionError(f"{path}: unsupported version {version}")
        for _ in range(count):
            (nlen,) = struct.unpack("<H", _read_exact(f, 2, "name length"))
            name = _read_exact(f, nlen, "name").decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(f, 1, "rank"))
            dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, "dims")) if rank else ()
            n = int(np.prod(dims, dtype=np.int64)) if rank else 1
            raw = _read_exact(f, 4 * n, f"data for {name}")
            out[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    return out


def pack_text(text: str) -> np.ndarray:
    """Encode UTF-8 text as a float32 carrier array (newline-padded)."""
    raw = text.encode("utf-8")
    pad = (-len(raw)) % 4
    raw += b"\n" * pad
    return np.frombuffer(raw, dtype="<f4").copy()


def unpack_text(arr: np.ndarray) -> str:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes().decode("utf-8").rstrip("\n")
