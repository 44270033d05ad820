"""User mobility on the closed unit square.

Two models:

* ``random_direction_reflect``: a uniform random heading and a speed uniform
  in ``(0, v_max]``, held for the whole duration, with specular reflection at
  the walls.  Uniform positions stay uniform under this motion.
* ``random_waypoint``: repeatedly pick a uniform waypoint and a speed in
  ``(0, v_max]`` and travel to it in a straight line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geom import Point

MODELS = ("random_direction_reflect", "random_waypoint")


@dataclass(frozen=True)
class MobilityConfig:
    model: str = "random_direction_reflect"
    v_max: float = 0.1
    # sampling step used by trajectory()
    dt: float = 1.0
    # user i is allocated after i * warmup_per_user seconds of motion
    warmup_per_user: float = 1.0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown mobility model {self.model!r}; expected one of {MODELS}")
        if not self.v_max >= 0:
            raise ValueError("v_max must be >= 0")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not self.warmup_per_user >= 0:
            raise ValueError("warmup_per_user must be >= 0")


def reflect(x):
    """Fold coordinates onto [0, 1] as a ball bouncing between the walls."""
    y = np.mod(x, 2.0)
    return np.where(y > 1.0, 2.0 - y, y)


def move_reflect(p, heading, speed, duration):
    """Constant-velocity motion with wall reflection; vectorised over inputs."""
    p = np.asarray(p, dtype=float)
    dist = np.asarray(speed, dtype=float) * duration
    x = reflect(p[..., 0] + dist * np.cos(heading))
    y = reflect(p[..., 1] + dist * np.sin(heading))
    return np.stack([x, y], axis=-1)


def _speed(rng, v_max):
    return v_max * (1.0 - rng.random())  # (0, v_max]


def _waypoint_legs(p, v_max, duration, rng):
    # legs as (t_start, start, end, travel_time) until duration is covered
    legs = []
    t = 0.0
    pos = (float(p[0]), float(p[1]))
    while t < duration:
        target = tuple(rng.random(2))
        speed = _speed(rng, v_max)
        travel = math.dist(pos, target) / speed
        legs.append((t, pos, target, travel))
        t += travel
        pos = target
    return legs


def _on_legs(legs, t):
    for start_t, a, b, travel in legs:
        if t <= start_t + travel:
            if travel == 0.0:
                return b
            f = (t - start_t) / travel
            return (a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]))
    return legs[-1][2]


def evolve_position(p, cfg: MobilityConfig, duration: float, rng) -> Point:
    """Position of a user starting at ``p`` after ``duration`` seconds."""
    if duration < 0:
        raise ValueError("duration must be >= 0")
    if cfg.v_max == 0 or duration == 0:
        return Point(p[0], p[1])
    if cfg.model == "random_direction_reflect":
        heading = rng.uniform(0.0, 2.0 * math.pi)
        x, y = move_reflect(p, heading, _speed(rng, cfg.v_max), duration)
        return Point(float(x), float(y))
    legs = _waypoint_legs(p, cfg.v_max, duration, rng)
    return Point(*_on_legs(legs, duration))


def evolve_positions(points, cfg: MobilityConfig, durations, rng) -> np.ndarray:
    """Evolve many users at once; user ``i`` moves for ``durations[i]`` seconds.

    With ``v_max == 0`` the input is returned unchanged and no randomness is
    consumed.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    durations = np.broadcast_to(np.asarray(durations, dtype=float), (len(pts),))
    if np.any(durations < 0):
        raise ValueError("durations must be >= 0")
    if cfg.v_max == 0:
        return pts.copy()
    if cfg.model == "random_direction_reflect":
        heading = rng.uniform(0.0, 2.0 * math.pi, size=len(pts))
        speed = cfg.v_max * (1.0 - rng.random(len(pts)))
        moved = move_reflect(pts, heading, speed, durations)
        still = durations == 0
        moved[still] = pts[still]
        return moved
    return np.array([evolve_position(p, cfg, d, rng) for p, d in zip(pts, durations)], dtype=float)


def trajectory(p, cfg: MobilityConfig, duration: float, rng) -> np.ndarray:
    """Positions at times ``0, dt, 2*dt, ...`` up to ``duration``."""
    times = np.arange(0.0, duration + 1e-12, cfg.dt)
    if cfg.v_max == 0:
        return np.tile(np.asarray(p, dtype=float), (len(times), 1))
    if cfg.model == "random_direction_reflect":
        heading = rng.uniform(0.0, 2.0 * math.pi)
        speed = _speed(rng, cfg.v_max)
        start = np.tile(np.asarray(p, dtype=float), (len(times), 1))
        return move_reflect(start, heading, speed, times)
    legs = _waypoint_legs(p, cfg.v_max, duration, rng)
    return np.array([_on_legs(legs, t) for t in times])
