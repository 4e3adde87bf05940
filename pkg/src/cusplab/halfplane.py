"""Exact geometry of the hyperbolic plane in the upper half-plane chart.

Phase points are (x, y, alpha) with base point z = x + iy and unit
tangent y e^{i alpha} (alpha measured in the chart, so alpha = pi/2
points straight up).  The geodesic flow is

    x' = y cos(alpha),  y' = y sin(alpha),  alpha' = -cos(alpha),

and has a closed form through the circle parameterization
z(t) = c + R tanh(t) + i |R| sech(t), which this module uses throughout;
no ODE stepping happens here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mobius import MobiusMap

VERTICAL_TOL = 1e-13


def distance(z, w) -> float:
    """Hyperbolic distance, arccosh of 1 + |z-w|^2 / (2 Im z Im w)."""
    z, w = complex(z), complex(w)
    if z.imag <= 0 or w.imag <= 0:
        raise ValueError("points must lie in the upper half-plane")
    q = abs(z - w) ** 2 / (2.0 * z.imag * w.imag)
    # acosh(1+q) in a form stable for small q
    return math.log1p(q + math.sqrt(q * (q + 2.0)))


def angle_wrap(a):
    """Reduce angles to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    out = np.mod(a + math.pi, 2.0 * math.pi) - math.pi
    out = np.where(out == -math.pi, math.pi, out)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class PhaseState:
    """Unit tangent vector (x, y, alpha); y > 0."""

    x: float
    y: float
    alpha: float

    def __post_init__(self):
        if self.y <= 0:
            raise ValueError("phase point below the boundary")

    @property
    def z(self) -> complex:
        return complex(self.x, self.y)

    def velocity(self) -> complex:
        """dz/dt of the unit-speed geodesic, i.e. y e^{i alpha}."""
        return self.y * complex(math.cos(self.alpha), math.sin(self.alpha))


def flow(state: PhaseState, t) -> PhaseState:
    """Exact geodesic flow by time t (scalar)."""
    x, y, al = flow_arrays(state.x, state.y, state.alpha, t)
    return PhaseState(float(x), float(y), float(al))


def flow_arrays(x, y, alpha, t):
    """Vectorized exact flow; broadcasts (x, y, alpha) against t."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    t = np.asarray(t, dtype=float)

    ca, sa = np.cos(alpha), np.sin(alpha)
    vertical = np.abs(ca) < VERTICAL_TOL
    ca_safe = np.where(vertical, 1.0, ca)

    sigma = np.sign(ca_safe)
    # along z(t) = c + sigma |R| tanh t + i |R| sech t the tangent angle
    # satisfies cos = sigma sech t, sin = -tanh t
    t0 = np.arctanh(np.where(vertical, 0.0, -sa))
    radius = y / np.abs(ca_safe)          # |R|
    center = x - sigma * radius * np.tanh(t0)

    t1 = t0 + t
    x_new = center + sigma * radius * np.tanh(t1)
    y_new = radius / np.cosh(t1)
    al_new = np.arctan2(-np.tanh(t1), sigma / np.cosh(t1))

    # vertical rays: x fixed, log-linear height, angle frozen
    x_new = np.where(vertical, x, x_new)
    y_new = np.where(vertical, y * np.exp(np.sign(sa) * t), y_new)
    al_new = np.where(vertical, alpha, al_new)
    if x_new.ndim:
        return x_new, y_new, al_new
    return float(x_new), float(y_new), float(al_new)


def transport(m: MobiusMap, state: PhaseState) -> PhaseState:
    """Push a unit tangent forward by an isometry: conformality makes
    this a rotation of alpha by arg m'(z)."""
    z = state.z
    w = m(z)
    turn = np.angle(m.derivative(z))
    return PhaseState(w.real, w.imag, float(angle_wrap(state.alpha + turn)))


def direction_to(z, w) -> float:
    """Initial angle alpha of the unit-speed geodesic from z to w."""
    z, w = complex(z), complex(w)
    if abs(z - w) == 0.0:
        raise ValueError("coincident points have no direction")
    if abs(z.real - w.real) <= VERTICAL_TOL * (abs(z) + abs(w)):
        return 0.5 * math.pi if w.imag > z.imag else -0.5 * math.pi
    c = (abs(z) ** 2 - abs(w) ** 2) / (2.0 * (z.real - w.real))
    r_signed = math.copysign(abs(z - c), w.real - z.real)
    tanh_t = (z.real - c) / r_signed
    sigma = math.copysign(1.0, r_signed)
    sech_t = math.sqrt(max(1.0 - tanh_t ** 2, 0.0))
    return math.atan2(-tanh_t, sigma * sech_t)


@dataclass(frozen=True)
class GeodesicSegment:
    """Unit-speed geodesic from z0 to z1 with its exact length."""

    z0: complex
    z1: complex
    length: float
    start: PhaseState

    def point(self, t):
        x, y, _ = flow_arrays(self.start.x, self.start.y, self.start.alpha, t)
        return x + 1j * y

    def state(self, t) -> PhaseState:
        return flow(self.start, t)


def geodesic_between(z, w) -> GeodesicSegment:
    z, w = complex(z), complex(w)
    d = distance(z, w)
    al = direction_to(z, w)
    return GeodesicSegment(z, w, d, PhaseState(z.real, z.imag, al))
