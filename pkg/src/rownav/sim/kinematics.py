from __future__ import annotations

import math
from typing import NamedTuple

# Below this |omega * dt| the arc is integrated with its series expansion.
_SMALL_TURN = 1e-9


def wrap_angle(a: float) -> float:
    """Map ``a`` into (-pi, pi]."""
    a = math.fmod(a + math.pi, 2 * math.pi)
    if a <= 0:
        a += 2 * math.pi
    return a - math.pi


class RobotPose(NamedTuple):
    x: float
    y: float
    theta: float
    z: float = 0.0


def step_kinematics(pose: RobotPose, cmd, dt: float) -> RobotPose:
    """Exact unicycle integration of a constant ``(v, omega)`` over ``dt`` seconds."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    v, w = cmd
    th = pose.theta
    dth = w * dt
    if abs(dth) < _SMALL_TURN:
        # sin(x)/x and (1-cos x)/x to second order
        a = v * dt * (1.0 - dth * dth / 6.0)
        b = v * dt * (dth / 2.0)
    else:
        r = v / w
        a = r * math.sin(dth)
        b = r * (1.0 - math.cos(dth))
    c, s = math.cos(th), math.sin(th)
    return RobotPose(pose.x + a * c - b * s, pose.y + a * s + b * c, wrap_angle(th + dth), pose.z)
