"""Single-ball clips with and without a physical arrow of time."""
from __future__ import annotations

import numpy as np

from .clip import MIN_FRAMES, VideoClip
from .physics import simulate_damped, simulate_elastic
from .render import centroid_track, render_track

T_RAW = 48
FPS = 12.0


def _check_length(T_raw: int) -> None:
    if T_raw < MIN_FRAMES:
        raise ValueError(f"T_raw must be >= {MIN_FRAMES}, got {T_raw}")


def gen_asym_clip(seed: int, T_raw: int = T_RAW, fps: float = FPS) -> VideoClip:
    """Damped ball bouncing under gravity: energy only ever decreases."""
    _check_length(T_raw)
    traj = simulate_damped(np.random.default_rng(seed), T_raw)
    return VideoClip(render_track(traj.pos), fps=fps, seed=seed, kind="asym")


def gen_sym_clip(seed: int, T_raw: int = T_RAW, fps: float = FPS) -> VideoClip:
    """Free ball with elastic walls: forward and reversed clips are equally likely."""
    _check_length(T_raw)
    traj = simulate_elastic(np.random.default_rng(seed), T_raw)
    return VideoClip(render_track(traj.pos), fps=fps, seed=seed, kind="sym")


def speed_change_statistic(frames: np.ndarray) -> float:
    """Mean per-step change of the blob's centroid speed (negative when it slows down)."""
    c = centroid_track(frames)
    speed = np.linalg.norm(np.diff(c, axis=0), axis=1)
    return float(np.diff(speed).mean())
