"""Angle helpers shared by every module.

Headings are measured clockwise from North in the North-East frame, so a
positive heading change is a starboard turn.
"""

import math

TWO_PI = 2.0 * math.pi


def wrap_to_pi(angle: float) -> float:
    """Wrap an angle in radians to the half-open interval (-pi, pi]."""
    wrapped = math.remainder(angle, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


def wrap_to_180(angle_deg: float) -> float:
    """Degree version of :func:`wrap_to_pi`, result in (-180, 180]."""
    wrapped = math.remainder(angle_deg, 360.0)
    if wrapped <= -180.0:
        wrapped += 360.0
    return wrapped
