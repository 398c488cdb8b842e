"""Node kinematics: stationary, or back-and-forth along a waypoint path."""

from __future__ import annotations

import math

import numpy as np

from ..cfo import LIGHT_SPEED
from .model import NodeState, SimError


def _route(node: NodeState) -> list[np.ndarray]:
    return [np.asarray(p, dtype=np.float64) for p in node.waypoints]


def step_mobility(node: NodeState, dt: float) -> NodeState:
    """Advance ``node`` by ``dt`` seconds in place and return it.

    Moving nodes travel at constant speed toward waypoint ``node.leg``; on
    arrival they head for the next one and, at either end of the path,
    reverse. Leftover distance carries over so speed is preserved.
    """
    if not dt > 0:
        raise SimError("dt must be positive")
    pts = _route(node)
    if node.speed == 0 or not pts:
        node.velocity = np.zeros(2)
        return node
    remaining = node.speed * dt
    loc = np.asarray(node.location, dtype=np.float64)
    for _ in range(10_000):
        target = pts[node.leg]
        gap = target - loc
        dist = float(np.hypot(*gap))
        if dist > remaining:
            loc = loc + gap / dist * remaining
            node.velocity = gap / dist * node.speed
            break
        loc = target.copy()
        remaining -= dist
        if len(pts) == 1:
            node.velocity = np.zeros(2)
            break
        nxt = node.leg + node.leg_dir
        if not 0 <= nxt < len(pts):
            node.leg_dir = -node.leg_dir
            nxt = node.leg + node.leg_dir
        node.leg = nxt
        if remaining <= 0:
            gap = pts[node.leg] - loc
            d = float(np.hypot(*gap))
            node.velocity = gap / d * node.speed if d > 0 else np.zeros(2)
            break
    node.location = loc
    return node


def radial_speed(location, velocity, target) -> float:
    """Rate at which the distance to ``target`` shrinks (m/s); positive when approaching."""
    d = np.asarray(target, dtype=np.float64) - np.asarray(location, dtype=np.float64)
    r = float(np.hypot(*d))
    if r == 0:
        return 0.0
    return float(np.dot(velocity, d) / r)


def doppler_at(location, velocity, target, freq: float) -> float:
    return radial_speed(location, velocity, target) / LIGHT_SPEED * freq
