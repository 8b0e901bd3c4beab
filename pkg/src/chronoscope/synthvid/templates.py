"""Scripted two-blob clips standing in for template-labelled action classes.

Three classes are built as exact reversals of a partner (TAKE_OUT, UNCOVER,
PUSH_BACK), so within such a pair the set of frames is identical and only
their order tells the classes apart.
"""
from __future__ import annotations

import numpy as np

from .clip import MIN_FRAMES, VideoClip
from .generators import FPS, T_RAW
from .physics import FRAME
from .render import blob

CLASS_NAMES = (
    "MOVE_INTO",
    "TAKE_OUT",
    "PRETEND_MOVE_INTO",
    "COVER",
    "UNCOVER",
    "PUSH_PAST",
    "PUSH_BACK",
    "HOLD_STILL",
)
MOVE_INTO, TAKE_OUT, PRETEND_MOVE_INTO, COVER, UNCOVER, PUSH_PAST, PUSH_BACK, HOLD_STILL = range(8)

# class -> the class it is played backwards from
REVERSE_OF = {TAKE_OUT: MOVE_INTO, UNCOVER: COVER, PUSH_BACK: PUSH_PAST}
REVERSE_PAIRS = tuple((base, rev) for rev, base in REVERSE_OF.items())

_LO, _HI = 1.5, FRAME - 2.5


def _motion_profile(rng: np.random.Generator, T: int) -> np.ndarray:
    """Progress in [0, 1] per frame: rest, smooth move over a jittered window, rest."""
    start = int(rng.integers(int(0.15 * T), int(0.3 * T) + 1))
    stop = int(rng.integers(int(0.6 * T), int(0.8 * T) + 1))
    t = np.clip((np.arange(T) - start) / max(stop - start, 1), 0.0, 1.0)
    return 0.5 - 0.5 * np.cos(np.pi * t)


def _excursion_profile(rng: np.random.Generator, T: int) -> np.ndarray:
    """Out-and-back in [0, 1]: ease out, hover at 1 through the middle, ease back to 0."""
    a = int(rng.integers(int(0.05 * T), int(0.12 * T) + 1))
    b = int(rng.integers(int(0.25 * T), int(0.3 * T) + 1))
    c = int(rng.integers(int(0.7 * T), int(0.75 * T) + 1))
    d = int(rng.integers(int(0.88 * T), int(0.95 * T) + 1))
    t = np.arange(T)
    up = np.clip((t - a) / max(b - a, 1), 0.0, 1.0)
    down = np.clip((d - t) / max(d - c, 1), 0.0, 1.0)
    u = np.minimum(up, down)
    return 0.5 - 0.5 * np.cos(np.pi * u)


def _compose(*layers: np.ndarray) -> np.ndarray:
    return np.clip(np.maximum.reduce(layers), 0.0, 1.0)


def _container(rng):
    cx, cy = rng.uniform(6.0, 9.0), rng.uniform(6.0, 9.0)
    return cx, cy, rng.uniform(1.8, 2.4), rng.uniform(0.45, 0.6)


def _move_into(rng, T):
    cx, cy, csig, camp = _container(rng)
    angle = rng.uniform(0.0, 2 * np.pi)
    dist = rng.uniform(5.0, 6.5)
    sx = np.clip(cx + dist * np.cos(angle), _LO, _HI)
    sy = np.clip(cy + dist * np.sin(angle), _LO, _HI)
    osig = rng.uniform(0.8, 1.1)
    p = _motion_profile(rng, T)
    frames = []
    for u in p:
        x, y = sx + u * (cx - sx), sy + u * (cy - sy)
        d = np.hypot(x - cx, y - cy)
        # the object dims as it sinks into the container
        amp = 1.0 - 0.6 * np.clip(1.0 - d / (2.0 * csig), 0.0, 1.0)
        frames.append(_compose(blob(cx, cy, csig, camp), blob(x, y, osig, amp)))
    return frames


def _pretend_move_into(rng, T):
    cx, cy, csig, camp = _container(rng)
    angle = rng.uniform(0.0, 2 * np.pi)
    dist = rng.uniform(5.0, 6.5)
    sx = np.clip(cx + dist * np.cos(angle), _LO, _HI)
    sy = np.clip(cy + dist * np.sin(angle), _LO, _HI)
    reach = rng.uniform(0.45, 0.6)  # stops short of the container rim
    osig = rng.uniform(0.8, 1.1)
    p = _excursion_profile(rng, T)
    frames = []
    for u in p:
        a = reach * u
        x, y = sx + a * (cx - sx), sy + a * (cy - sy)
        frames.append(_compose(blob(cx, cy, csig, camp), blob(x, y, osig)))
    return frames


def _cover(rng, T):
    ox, oy = rng.uniform(5.0, 11.0), rng.uniform(8.0, 12.0)
    osig = rng.uniform(0.8, 1.1)
    lid_sig = (rng.uniform(2.6, 3.2), rng.uniform(1.1, 1.4))
    lid_amp = rng.uniform(0.7, 0.85)
    top = rng.uniform(_LO, 2.5)
    p = _motion_profile(rng, T)
    frames = []
    for u in p:
        ly = top + u * (oy - top)
        hidden = np.clip(1.0 - abs(oy - ly) / 3.0, 0.0, 1.0)
        frames.append(_compose(blob(ox, ly, lid_sig, lid_amp), blob(ox, oy, osig, 1.0 - 0.8 * hidden)))
    return frames


def _push_past(rng, T):
    cx, cy, csig, camp = _container(rng)
    lane = cy + rng.choice([-1.0, 1.0]) * rng.uniform(3.0, 4.0)
    lane = float(np.clip(lane, _LO, _HI))
    span = rng.uniform(4.5, 5.5)
    sx, ex = max(cx - span, _LO), min(cx + span, _HI)
    osig = rng.uniform(0.8, 1.1)
    p = _motion_profile(rng, T)
    return [_compose(blob(cx, cy, csig, camp), blob(sx + u * (ex - sx), lane, osig)) for u in p]


def _hold_still(rng, T):
    cx, cy, csig, camp = _container(rng)
    angle = rng.uniform(0.0, 2 * np.pi)
    dist = rng.uniform(4.0, 6.0)
    ox = np.clip(cx + dist * np.cos(angle), _LO, _HI)
    oy = np.clip(cy + dist * np.sin(angle), _LO, _HI)
    frame = _compose(blob(cx, cy, csig, camp), blob(ox, oy, rng.uniform(0.8, 1.1)))
    return [frame] * T


_SCRIPTS = {
    MOVE_INTO: _move_into,
    PRETEND_MOVE_INTO: _pretend_move_into,
    COVER: _cover,
    PUSH_PAST: _push_past,
    HOLD_STILL: _hold_still,
}


def gen_template_clip(seed: int, class_id: int, T_raw: int = T_RAW, fps: float = FPS) -> VideoClip:
    """One clip of template ``class_id``; reverse classes replay their partner backwards."""
    if not 0 <= int(class_id) < len(CLASS_NAMES):
        raise ValueError(f"class_id must be in [0, {len(CLASS_NAMES)}), got {class_id}")
    if T_raw < MIN_FRAMES:
        raise ValueError(f"T_raw must be >= {MIN_FRAMES}, got {T_raw}")
    class_id = int(class_id)
    base = REVERSE_OF.get(class_id, class_id)
    frames = np.stack(_SCRIPTS[base](np.random.default_rng(seed), T_raw)).astype(np.float32)[:, None]
    if base != class_id:
        frames = frames[::-1].copy()
    return VideoClip(frames, fps=fps, class_id=class_id, seed=seed, kind="template")
