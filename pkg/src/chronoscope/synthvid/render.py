"""Gaussian splatting of blobs onto small grayscale frames."""
from __future__ import annotations

import numpy as np

from .physics import FRAME

_GRID_Y, _GRID_X = np.mgrid[0:FRAME, 0:FRAME].astype(np.float64)


def blob(cx: float, cy: float, sigma, amplitude: float = 1.0, size: int = FRAME) -> np.ndarray:
    """Gaussian evaluated at pixel centres; sub-pixel centres shift intensity smoothly.

    ``sigma`` is a scalar or an ``(sx, sy)`` pair for an axis-aligned ellipse.
    """
    if size == FRAME:
        gy, gx = _GRID_Y, _GRID_X
    else:
        gy, gx = np.mgrid[0:size, 0:size].astype(np.float64)
    sx, sy = (sigma, sigma) if np.isscalar(sigma) else sigma
    return amplitude * np.exp(-0.5 * (((gx - cx) / sx) ** 2 + ((gy - cy) / sy) ** 2))


def render_track(pos: np.ndarray, sigma: float = 1.0) -> np.ndarray:
    """Frames ``[T, 1, H, W]`` (float32, in [0, 1]) of a single blob following ``pos[T, 2]``."""
    frames = np.stack([blob(x, y, sigma) for x, y in pos])
    return np.clip(frames, 0.0, 1.0).astype(np.float32)[:, None]


def centroid_track(frames: np.ndarray) -> np.ndarray:
    """Intensity-weighted centre ``(x, y)`` per frame of ``[T, 1, H, W]`` frames."""
    f = np.asarray(frames, dtype=np.float64)[:, 0]
    mass = f.sum(axis=(1, 2))
    h, w = f.shape[1:]
    ys, xs = np.mgrid[0:h, 0:w]
    cx = (f * xs).sum(axis=(1, 2)) / mass
    cy = (f * ys).sum(axis=(1, 2)) / mass
    return np.stack([cx, cy], axis=1)
