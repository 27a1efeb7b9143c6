"""Unicycle guidance laws: the vector-field path-following controller and a
classic nonlinear trajectory-tracking controller used as a baseline.

Unicycle model: ``x' = v cos(theta)``, ``y' = v sin(theta)``, ``theta' = omega``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import (
    EPS_NORM,
    E,
    AnySpatial,
    planar_direction,
)
from .geometry import ParametricPath

__all__ = [
    "wrap_angle",
    "sinc",
    "UnicycleState",
    "ControlOutput",
    "GvfController",
    "TrajTrackController",
    "StalledTrajectoryError",
    "ContractError",
    "gvf_control",
    "traj_track_control",
    "traj_track_law",
    "desired_state",
    "heading_error",
]


class StalledTrajectoryError(ArithmeticError):
    """Desired trajectory speed is zero, so its heading is undefined."""


class ContractError(ValueError):
    """An input violates a documented precondition."""


def wrap_angle(a: float) -> float:
    """Wrap an angle into ``(-pi, pi]``."""
    r = math.remainder(a, 2.0 * math.pi)
    return math.pi if r == -math.pi else r


def sinc(z: float) -> float:
    """``sin(z)/z`` with a 4th-order Taylor branch near zero."""
    if abs(z) < 1e-4:
        z2 = z * z
        return 1.0 - z2 / 6.0 + z2 * z2 / 120.0
    return math.sin(z) / z


@dataclass(frozen=True)
class UnicycleState:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @property
    def heading(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta)])


@dataclass(frozen=True)
class ControlOutput:
    v_u: float
    omega_u: float
    w_dot: float = math.nan
    beta: float = math.nan
    theta_d_dot: float = math.nan


@dataclass
class GvfController:
    """Path-following controller state.

    ``w`` is the virtual coordinate, advanced by :meth:`advance`.
    ``velocity_source`` selects the planar part of the generalized velocity
    used in the desired-heading rate: ``"measured"`` (supplied by the caller)
    or ``"commanded"`` (``v_u * h_hat`` from the new command).
    """

    field: AnySpatial
    s: float = 1.0
    k_theta: float = 1.0
    w: float = 0.0
    velocity_source: str = "measured"

    def __post_init__(self):
        if not (self.s > 0 and self.k_theta > 0):
            raise ValueError("s and k_theta must be positive")
        if self.velocity_source not in ("measured", "commanded"):
            raise ValueError(f"unknown velocity_source {self.velocity_source!r}")
        if not math.isfinite(self.w):
            raise ValueError("w must be finite")

    def advance(self, w_dot: float, dt: float) -> None:
        """Euler update of the virtual coordinate, ``w <- w + w_dot * dt``."""
        self.w += w_dot * dt


@dataclass(frozen=True)
class TrajTrackController:
    """Tracks ``(f1(t), f2(t))`` of ``desired`` with the parameter read as time."""

    desired: ParametricPath
    k1t: float = 1.0
    k2t: float = 1.0
    k3t: float = 1.0

    def __post_init__(self):
        if not (self.k1t > 0 and self.k2t > 0 and self.k3t > 0):
            raise ValueError("trajectory-tracking gains must be positive")


def heading_error(h_hat, chi_p_hat) -> float:
    """Signed angle from ``chi_p_hat`` to ``h_hat`` in ``(-pi, pi]``.

    Raises
    ------
    ContractError
        If either input is not unit length to within 1e-9.
    """
    h = np.asarray(h_hat, dtype=float)
    c = np.asarray(chi_p_hat, dtype=float)
    for name, v in (("h_hat", h), ("chi_p_hat", c)):
        if abs(math.hypot(v[0], v[1]) - 1.0) > 1e-9:
            raise ContractError(f"{name} must be a unit vector, got norm {math.hypot(*v)}")
    return _signed_angle(h, c)


def _signed_angle(h, c) -> float:
    # h^T E c = c_x h_y - c_y h_x
    return wrap_angle(math.atan2(c[0] * h[1] - c[1] * h[0], h[0] * c[0] + h[1] * c[1]))


def gvf_control(ctrl: GvfController, state: UnicycleState, measured_velocity=None) -> ControlOutput:
    """Evaluate the vector-field guidance law at ``(state.x, state.y, ctrl.w)``.

    Returns ``w_dot = s chi_hat_3``, ``v_u = s |chi_p|`` and
    ``omega_u = theta_d_dot - k_theta h_hat^T E chi_p_hat``.  ``ctrl.w`` is not
    modified; call :meth:`GvfController.advance` afterwards.

    Raises
    ------
    SingularHeadingError
        If the planar field component vanishes at the generalized position.
    """
    p = np.array([state.x, state.y, ctrl.w])
    chi_hat, chi_p, chi_p_hat, J = planar_direction(ctrl.field, p, with_jacobian=True)
    s = ctrl.s
    w_dot = s * chi_hat[2]
    norm_p = math.hypot(chi_p[0], chi_p[1])
    v_u = s * norm_p
    h = np.array([math.cos(state.theta), math.sin(state.theta)])
    if ctrl.velocity_source == "commanded" or measured_velocity is None:
        planar_vel = v_u * h
    else:
        planar_vel = np.asarray(measured_velocity, dtype=float)
    p_dot = np.array([planar_vel[0], planar_vel[1], w_dot])
    theta_d_dot = -(chi_p_hat @ E @ (J @ p_dot)) / norm_p
    align = h @ E @ chi_p_hat
    omega_u = theta_d_dot - ctrl.k_theta * align
    beta = _signed_angle(h, chi_p_hat)
    return ControlOutput(v_u=v_u, omega_u=omega_u, w_dot=w_dot, beta=beta,
                         theta_d_dot=theta_d_dot)


def desired_state(desired: ParametricPath, t: float):
    """Reference position, heading, speed and turn rate at time ``t``."""
    xd, yd = float(desired.f1(t)), float(desired.f2(t))
    dx, dy = float(desired.df1(t)), float(desired.df2(t))
    ddx, ddy = float(desired.ddf1(t)), float(desired.ddf2(t))
    speed_sq = dx * dx + dy * dy
    v_d = math.sqrt(speed_sq)
    if v_d < EPS_NORM:
        raise StalledTrajectoryError(f"desired speed vanishes at t={t}")
    theta_d = math.atan2(dy, dx)
    omega_d = (ddy * dx - ddx * dy) / speed_sq
    return xd, yd, theta_d, v_d, omega_d


def traj_track_control(ctrl: TrajTrackController, state: UnicycleState, t: float) -> ControlOutput:
    """Nonlinear trajectory-tracking law on the body-frame tracking error.

    Raises
    ------
    StalledTrajectoryError
        If the reference speed ``v_d`` is below ``EPS_NORM``.
    """
    xd, yd, theta_d, v_d, omega_d = desired_state(ctrl.desired, t)
    return traj_track_law(ctrl, state, xd, yd, theta_d, v_d, omega_d)


def traj_track_law(ctrl, state, xd, yd, theta_d, v_d, omega_d) -> ControlOutput:
    c, s = math.cos(state.theta), math.sin(state.theta)
    ex, ey = xd - state.x, yd - state.y
    e1 = c * ex + s * ey
    e2 = -s * ex + c * ey
    e3 = wrap_angle(theta_d - state.theta)
    u1 = -ctrl.k1t * e1
    u2 = -ctrl.k2t * v_d * e2 * sinc(e3) - ctrl.k3t * e3
    return ControlOutput(v_u=v_d * math.cos(e3) - u1, omega_u=omega_d - u2)
