"""Nonlinear surface-vessel model.

States are North/East position, heading, yaw rate, forward speed and a
scalar Markov disturbance acting against thrust:

    X'   = u cos(psi)
    Y'   = u sin(psi)
    psi' = r
    r'   = (-r + K_psi * u_c) / T_psi
    u'   = (-u + K_u * (tau - d)) / T_u
    d'   = -d / T_d + w_d

The module is RNG-free. The caller supplies the per-step noise sample
``w_d``, which is held constant over the step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .angles import wrap_to_pi

DEFAULT_DT = 0.01


class NumericalError(ValueError):
    """Raised when a state or parameter set is not finite."""


@dataclass(frozen=True)
class VesselState:
    x_pos: float = 0.0
    y_pos: float = 0.0
    heading: float = 0.0
    yaw_rate: float = 0.0
    speed: float = 0.0
    disturbance: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_to_pi(self.heading))

    def as_tuple(self) -> tuple[float, float, float, float, float, float]:
        return (self.x_pos, self.y_pos, self.heading, self.yaw_rate, self.speed, self.disturbance)

    @property
    def position(self) -> tuple[float, float]:
        return (self.x_pos, self.y_pos)

    @property
    def velocity(self) -> tuple[float, float]:
        """North and East velocity components in m/s."""
        return (self.speed * math.cos(self.heading), self.speed * math.sin(self.heading))


@dataclass(frozen=True)
class VesselParams:
    """Model constants.

    The defaults describe a fast, small vessel: full rudder (|u_c| = 20)
    gives a steady turn rate of 0.1 rad/s. ``thrust_cmd`` is the constant
    thrust input; the steady-state speed is ``k_u * thrust_cmd``.
    """

    t_psi: float = 10.0
    k_psi: float = 0.005
    t_u: float = 20.0
    k_u: float = 1.0
    t_d: float = 50.0
    sigma_omega: float = 0.0
    u_c_max: float = 20.0
    thrust_cmd: float = 16.0

    def __post_init__(self):
        for name in ("t_psi", "t_u", "t_d", "u_c_max"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
        for name in ("k_psi", "k_u", "sigma_omega", "thrust_cmd"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.sigma_omega < 0:
            raise ValueError("sigma_omega must be >= 0")

    def with_speed(self, speed: float) -> "VesselParams":
        """Copy with the thrust set so the steady-state speed equals ``speed``."""
        return replace(self, thrust_cmd=speed / self.k_u)


def saturate(value: float, limit: float) -> float:
    """Clamp ``value`` to [-limit, +limit]."""
    if limit <= 0:
        raise ValueError("limit must be > 0")
    return min(max(value, -limit), limit)


def _derivative(s, u_c, tau, noise, p: VesselParams):
    _, _, psi, r, u, d = s
    return (
        u * math.cos(psi),
        u * math.sin(psi),
        r,
        (-r + p.k_psi * u_c) / p.t_psi,
        (-u + p.k_u * (tau - d)) / p.t_u,
        -d / p.t_d + noise,
    )


def step(
    state: VesselState,
    u_c: float,
    params: VesselParams,
    dt: float = DEFAULT_DT,
    noise: float = 0.0,
) -> VesselState:
    """Advance the vessel one fixed step with classical RK4.

    ``u_c`` is saturated to ``params.u_c_max`` here, so no caller can
    exceed the actuator limit.
    """
    s0 = state.as_tuple()
    if not all(math.isfinite(v) for v in s0):
        raise NumericalError(f"non-finite vessel state: {state}")
    if not (math.isfinite(u_c) and math.isfinite(noise)):
        raise NumericalError(f"non-finite input: u_c={u_c!r}, noise={noise!r}")
    if not dt > 0:
        raise ValueError("dt must be > 0")

    u_c = saturate(u_c, params.u_c_max)
    tau = params.thrust_cmd
    h2 = 0.5 * dt

    k1 = _derivative(s0, u_c, tau, noise, params)
    k2 = _derivative([a + h2 * b for a, b in zip(s0, k1)], u_c, tau, noise, params)
    k3 = _derivative([a + h2 * b for a, b in zip(s0, k2)], u_c, tau, noise, params)
    k4 = _derivative([a + dt * b for a, b in zip(s0, k3)], u_c, tau, noise, params)
    s1 = [
        a + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        for a, b1, b2, b3, b4 in zip(s0, k1, k2, k3, k4)
    ]
    if not all(math.isfinite(v) for v in s1):
        raise NumericalError(f"integration produced a non-finite state from {state}")
    return VesselState(*s1)
