"""Dataset files.

Layout (little-endian): magic ``b"VTDS1"``, ``u32`` clip count, then per clip
``u32`` T_raw, ``u16`` H, ``u16`` W, ``u8`` arrow (0 forward, 1 backward),
``i16`` class id (-1 for none), ``u64`` generator seed and ``T_raw*H*W``
float32 pixels. An optional trailer ``b"META"``, ``u32`` length, UTF-8 JSON
carries the split tag, class names and per-clip fps and generator kind.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Union

import numpy as np

from .clip import ARROWS, Dataset, VideoClip

MAGIC = b"VTDS"
VERSION = b"1"
META = b"META"
_CLIP_HEADER = struct.Struct("<IHHBhQ")


class FormatError(ValueError):
    pass


def write_dataset(dataset: Dataset, path: Union[str, Path]) -> None:
    parts = [MAGIC + VERSION, struct.pack("<I", len(dataset.clips))]
    for clip in dataset.clips:
        T, _, H, W = clip.frames.shape
        cid = -1 if clip.class_id is None else clip.class_id
        parts.append(_CLIP_HEADER.pack(T, H, W, ARROWS.index(clip.arrow), cid, clip.seed))
        parts.append(clip.frames.astype("<f4").tobytes())
    meta = {
        "split": dataset.split,
        "class_names": list(dataset.class_names),
        "fps": [c.fps for c in dataset.clips],
        "kind": [c.kind for c in dataset.clips],
    }
    raw = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts += [META, struct.pack("<I", len(raw)), raw]
    Path(path).write_bytes(b"".join(parts))


def read_dataset(path: Union[str, Path]) -> Dataset:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic at byte 0")
    if buf[4:5] != VERSION:
        raise FormatError(f"{path}: unsupported format version {buf[4:5]!r} at byte 4")
    pos = 5

    def need(n: int, what: str) -> None:
        if pos + n > len(buf):
            raise FormatError(f"{path}: truncated {what} at byte {pos}")

    need(4, "clip count")
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    headers = []
    for i in range(count):
        need(_CLIP_HEADER.size, f"header of clip {i}")
        T, H, W, arrow, cid, seed = _CLIP_HEADER.unpack_from(buf, pos)
        if arrow >= len(ARROWS):
            raise FormatError(f"{path}: invalid arrow code {arrow} at byte {pos + 8}")
        pos += _CLIP_HEADER.size
        n = T * H * W
        need(4 * n, f"pixels of clip {i}")
        frames = np.frombuffer(buf, dtype="<f4", count=n, offset=pos).reshape(T, 1, H, W)
        pos += 4 * n
        headers.append((frames.astype(np.float32), ARROWS[arrow], None if cid < 0 else cid, seed))
    meta = {}
    if pos < len(buf):
        if buf[pos: pos + 4] != META:
            raise FormatError(f"{path}: unexpected trailing bytes at byte {pos}")
        pos += 4
        need(4, "metadata length")
        (mlen,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        need(mlen, "metadata")
        try:
            meta = json.loads(buf[pos: pos + mlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: malformed metadata at byte {pos}: {exc}") from None
        pos += mlen
        if pos != len(buf):
            raise FormatError(f"{path}: unexpected trailing bytes at byte {pos}")
    fps = meta.get("fps", [12.0] * count)
    kinds = meta.get("kind", [""] * count)
    clips = [VideoClip(f, fps=fps[i], arrow=a, class_id=c, seed=s, kind=kinds[i])
             for i, (f, a, c, s) in enumerate(headers)]
    try:
        return Dataset(clips, list(meta.get("class_names", [])), meta.get("split", "train"))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
