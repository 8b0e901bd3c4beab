"""Binary checkpoint files.

Layout (little-endian): magic ``b"VTCK1"``, 32-byte config digest, then one
record per tensor until EOF: ``u32`` name length, UTF-8 name, ``u32`` rank,
``rank`` x ``u32`` dims, float32 payload in row-major order.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Union

import numpy as np

MAGIC = b"VTCK1"
HASH_BYTES = 32


class CheckpointError(ValueError):
    pass


def write_checkpoint(path: Union[str, Path], state: dict[str, np.ndarray], config_digest: bytes) -> None:
    if len(config_digest) != HASH_BYTES:
        raise ValueError(f"config digest must be {HASH_BYTES} bytes, got {len(config_digest)}")
    parts = [MAGIC, config_digest]
    for name, arr in state.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_checkpoint(path: Union[str, Path]) -> tuple[bytes, dict[str, np.ndarray]]:
    """Return ``(config_digest, {name: float64 array})``."""
    buf = Path(path).read_bytes()
    if buf[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic at byte 0")
    pos = len(MAGIC)
    if len(buf) < pos + HASH_BYTES:
        raise CheckpointError(f"{path}: truncated config digest at byte {pos}")
    digest = buf[pos: pos + HASH_BYTES]
    pos += HASH_BYTES
    state: dict[str, np.ndarray] = {}

    def need(n: int, what: str) -> None:
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated {what} at byte {pos}")

    while pos < len(buf):
        need(4, "name length")
        (nlen,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        need(nlen, "name")
        name = buf[pos: pos + nlen].decode("utf-8")
        pos += nlen
        need(4, "rank")
        (rank,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        need(4 * rank, "dims")
        dims = struct.unpack_from(f"<{rank}I", buf, pos)
        pos += 4 * rank
        count = int(np.prod(dims, dtype=np.int64))
        need(4 * count, f"payload of {name!r}")
        state[name] = np.frombuffer(buf, dtype="<f4", count=count, offset=pos).reshape(dims).astype(np.float64)
        pos += 4 * count
    return digest, state
