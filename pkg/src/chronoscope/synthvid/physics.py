"""Ball trajectories in pixel units (y grows downward, one step per frame)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FRAME = 16
MARGIN = 1.5
LO = MARGIN
HI = FRAME - 1 - MARGIN

GRAVITY = 0.05
DAMPING = 0.98
RESTITUTION = 0.8
REST_SPEED = 0.05


@dataclass
class Trajectory:
    """Per-frame ball state; ``energy`` is kinetic plus potential above the floor."""

    pos: np.ndarray  # [T, 2] as (x, y)
    vel: np.ndarray  # [T, 2]
    energy: np.ndarray  # [T]


def _energy(vx: float, vy: float, y: float, g: float) -> float:
    return 0.5 * (vx * vx + vy * vy) + g * (HI - y)


def _first_hit(y: float, vy: float, g: float, target: float, below: bool) -> float:
    """Earliest t > 0 with ``y + vy t + g t^2 / 2 == target``; inf if never."""
    c = y - target
    if g == 0.0:
        if vy == 0.0:
            return math.inf
        t = -c / vy
        return t if t > 1e-12 else math.inf
    disc = vy * vy - 2.0 * g * c
    if disc < 0.0:
        return math.inf
    root = math.sqrt(disc)
    # floor (below=True) is reached on the rising root, ceiling on the falling one
    t = (-vy + root) / g if below else (-vy - root) / g
    return t if t > 1e-12 else math.inf


def _advance(state: list, g: float, e: float, resting: bool) -> bool:
    """Move ``state = [x, y, vx, vy]`` through one unit of time with exact ballistic flight."""
    x, y, vx, vy = state
    remaining = 1.0
    for _ in range(16):
        if not resting and y >= HI and vy > 0:
            y = HI
            vy = -e * vy
            if abs(vy) < REST_SPEED:
                vy = 0.0
                resting = True
        geff = 0.0 if resting else g
        t_floor = math.inf if resting else _first_hit(y, vy, geff, HI, below=True)
        t_ceil = _first_hit(y, vy, geff, LO, below=False) if (not resting and vy < 0) else math.inf
        if vx > 0:
            t_wall = (HI - x) / vx
        elif vx < 0:
            t_wall = (LO - x) / vx
        else:
            t_wall = math.inf
        t_wall = t_wall if t_wall > 1e-12 else math.inf
        t_hit = min(t_floor, t_ceil, t_wall)
        if t_hit >= remaining:
            x += vx * remaining
            y += vy * remaining + 0.5 * geff * remaining * remaining
            vy += geff * remaining
            break
        x += vx * t_hit
        y += vy * t_hit + 0.5 * geff * t_hit * t_hit
        vy += geff * t_hit
        remaining -= t_hit
        if t_hit == t_wall:
            x = HI if vx > 0 else LO
            vx = -e * vx
        elif t_hit == t_floor:
            y = HI
            vy = -e * vy
            if abs(vy) < REST_SPEED:
                vy = 0.0
                resting = True
        else:
            y = LO
            vy = -e * vy
    state[:] = [min(max(x, LO), HI), min(max(y, LO), HI), vx, vy]
    return resting


def simulate_damped(rng: np.random.Generator, n_frames: int,
                    gravity: float = GRAVITY, damping: float = DAMPING,
                    restitution: float = RESTITUTION) -> Trajectory:
    """Ball under gravity with per-step velocity damping and inelastic bounces."""
    direction = 1.0 if rng.random() < 0.5 else -1.0
    state = [rng.uniform(LO, HI), rng.uniform(LO, HI), direction * rng.uniform(0.6, 1.2), rng.uniform(-1.2, 1.2)]
    resting = False
    pos = np.empty((n_frames, 2))
    vel = np.empty((n_frames, 2))
    energy = np.empty(n_frames)
    for t in range(n_frames):
        if t > 0:
            state[2] *= damping
            state[3] *= damping
            resting = _advance(state, gravity, restitution, resting)
        pos[t] = state[0], state[1]
        vel[t] = state[2], state[3]
        energy[t] = _energy(state[2], state[3], state[1], gravity)
    return Trajectory(pos, vel, energy)


def _fold(p: float, v: float) -> tuple[float, float]:
    """Reflect a free step ``p + v`` back into ``[LO, HI]``."""
    q = p + v
    while q < LO or q > HI:
        if q > HI:
            q = 2 * HI - q
        else:
            q = 2 * LO - q
        v = -v
    return q, v


def elastic_step(x: float, y: float, vx: float, vy: float) -> tuple[float, float, float, float]:
    x, vx = _fold(x, vx)
    y, vy = _fold(y, vy)
    return x, y, vx, vy


def simulate_elastic(rng: np.random.Generator, n_frames: int, x0=None) -> Trajectory:
    """Undamped ball without gravity in a box with perfectly elastic walls.

    Uniform positions with isotropic velocities form an invariant distribution,
    so reversed clips are distributed exactly like forward ones.
    """
    if x0 is None:
        speed = rng.uniform(0.3, 1.0)
        angle = rng.uniform(0.0, 2 * math.pi)
        x0 = (rng.uniform(LO, HI), rng.uniform(LO, HI), speed * math.cos(angle), speed * math.sin(angle))
    x, y, vx, vy = x0
    pos = np.empty((n_frames, 2))
    vel = np.empty((n_frames, 2))
    for t in range(n_frames):
        if t > 0:
            x, y, vx, vy = elastic_step(x, y, vx, vy)
        pos[t] = x, y
        vel[t] = vx, vy
    energy = 0.5 * (vel ** 2).sum(axis=1)
    return Trajectory(pos, vel, energy)
