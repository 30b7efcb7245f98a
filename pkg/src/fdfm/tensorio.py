"""FPXT1 tensor files: the on-disk format shared by every module.

Layout: 5-byte magic ``FPXT1``, one u8 rank, then rank little-endian u32
dimensions, then the row-major (C-order) payload as little-endian IEEE-754
float64. Zero-length dimensions are legal (empty payload).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"FPXT1"
MAX_RANK = 255
_U32_MAX = 2**32 - 1


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    """Serialize `array` (any real dtype, rank <= 255) as an FPXT1 file."""
    a = np.asarray(array, dtype=np.float64)
    if a.ndim > MAX_RANK:
        raise FormatError(f"rank {a.ndim} exceeds FPXT1 maximum {MAX_RANK}")
    for d in a.shape:
        if d > _U32_MAX:
            raise FormatError(f"dimension {d} does not fit in u32")
    header = MAGIC + struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    payload = a.astype("<f8", copy=False).tobytes(order="C")
    Path(path).write_bytes(header + payload)


def read_tensor(path: str | Path) -> np.ndarray:
    """Read an FPXT1 file back into a float64 ndarray."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 1:
        raise FormatError(f"{path}: truncated header")
    if raw[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:len(MAGIC)]!r}")
    rank = raw[len(MAGIC)]
    dims_off = len(MAGIC) + 1
    dims_end = dims_off + 4 * rank
    if len(raw) < dims_end:
        raise FormatError(f"{path}: truncated dimension list")
    dims = struct.unpack(f"<{rank}I", raw[dims_off:dims_end])
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    expected = dims_end + 8 * count
    if len(raw) != expected:
        raise FormatError(f"{path}: payload is {len(raw) - dims_end} bytes, expected {8 * count}")
    flat = np.frombuffer(raw, dtype="<f8", count=count, offset=dims_end)
    return flat.reshape(dims).astype(np.float64, copy=True)
