"""PD heading autopilot."""

from dataclasses import dataclass

from .angles import wrap_to_pi
from .dynamics import saturate


@dataclass(frozen=True)
class ControllerGains:
    kp: float = 40.0
    kd: float = 120.0

    def __post_init__(self):
        if not self.kp > 0:
            raise ValueError("kp must be > 0")
        if self.kd < 0:
            raise ValueError("kd must be >= 0")


def control(
    desired_heading: float,
    heading: float,
    yaw_rate: float,
    gains: ControllerGains,
    limit: float = 20.0,
) -> float:
    """Saturated PD law on the wrapped heading error.

    Wrapping first keeps a 179 deg -> -179 deg request a 2 deg turn
    instead of a 358 deg one.
    """
    error = wrap_to_pi(desired_heading - heading)
    return saturate(gains.kp * error - gains.kd * yaw_rate, limit)
