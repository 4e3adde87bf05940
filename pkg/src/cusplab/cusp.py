"""The model cusp and its geodesic flow, in closed form.

The chart is Z = (0, inf) x R/(circ Z) with metric (dy^2 + dtheta^2)/y^2
and spherical phase coordinates (y, theta, phi, u): phi in [0, pi] is
the angle from the upward vertical y d/dy, u = +-1 the horizontal
direction.  The generator of the flow is

    ydot = y cos(phi),  thetadot = y sin(phi) u,  phidot = sin(phi),

whose solution is elementary: with s0 = log tan(phi0/2),

    cos(phi_t) = -tanh(t + s0),          sin(phi_t) = sech(t + s0),
    y_t   = y0 sech(t + s0)/sech(s0),
    theta_t = theta0 + u (y0/sin phi0) (tanh(t + s0) - tanh(s0)).

y/sin(phi) (the depth of the excursion's apex) is a first integral and
u never changes.  theta is kept as a lifted real; reduce mod the chart
circumference only on output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .quadrature import adaptive_simpson

POLE_TOL = 1e-14


class VerticalRayError(ValueError):
    """Raised when a quantity is undefined on a vertical ray
    (phi at a pole: the excursion never turns around)."""


@dataclass(frozen=True)
class CuspChart:
    """Boundary height and horizontal circumference of a cusp chart."""

    a: float = 1.0
    circumference: float = 1.0

    def __post_init__(self):
        if self.a <= 0.0 or self.circumference <= 0.0:
            raise ValueError("chart parameters must be positive")

    def wrap(self, theta):
        return np.mod(theta, self.circumference)


@dataclass(frozen=True)
class PhasePoint:
    y: float
    theta: float
    phi: float
    u: float = 1.0

    def __post_init__(self):
        if self.y <= 0.0:
            raise ValueError(f"y must be positive, got {self.y}")
        phi = min(max(float(self.phi), 0.0), math.pi)
        if abs(phi - self.phi) > 1e-12:
            raise ValueError(f"phi={self.phi} outside [0, pi]")
        object.__setattr__(self, "phi", phi)
        if abs(abs(self.u) - 1.0) > 1e-12:
            raise ValueError("u must be a unit horizontal direction (+-1)")

    @property
    def at_pole(self) -> bool:
        return self.phi < POLE_TOL or math.pi - self.phi < POLE_TOL


def flow_field(p: PhasePoint) -> tuple[float, float, float]:
    """(ydot, thetadot, phidot) of the cusp geodesic field."""
    s = math.sin(p.phi)
    return (p.y * math.cos(p.phi), p.y * s * p.u, s)


def flow_exact(p: PhasePoint, t: float) -> PhasePoint:
    """Time-t image of p under the closed-form flow."""
    if p.at_pole:
        # vertical ray: phi frozen, y scales exponentially
        sign = 1.0 if p.phi < POLE_TOL else -1.0
        return replace(p, y=p.y * math.exp(sign * t))
    s0 = math.log(math.tan(0.5 * p.phi))
    s1 = s0 + t
    sin1 = 1.0 / math.cosh(s1)
    cos1 = -math.tanh(s1)
    phi1 = math.atan2(sin1, cos1)
    y1 = p.y * math.cosh(s0) / math.cosh(s1)
    theta1 = p.theta + p.u * (p.y * math.cosh(s0)) * (math.tanh(s1)
                                                     - math.tanh(s0))
    return PhasePoint(y=y1, theta=theta1, phi=phi1, u=p.u)


def conserved_depth(p: PhasePoint) -> float:
    """Apex height y/sin(phi) of the excursion through p."""
    if p.at_pole:
        raise VerticalRayError("vertical ray: depth infinite")
    return p.y / math.sin(p.phi)


def exit_time(p: PhasePoint, chart: CuspChart) -> tuple[float, float]:
    """(ell_plus, ell_minus): future and past times at which the
    trajectory through p crosses y = a.

    ell_plus >= 0 >= ell_minus; a vertical ray gives an infinite value
    on its trapped side.
    """
    a = chart.a
    if p.y < a * (1.0 - 1e-12):
        raise ValueError(f"point below the chart floor: y={p.y} < a={a}")
    if p.phi < POLE_TOL:
        return (math.inf, math.log(a / p.y))
    if math.pi - p.phi < POLE_TOL:
        return (math.log(p.y / a), -math.inf)
    s0 = math.log(math.tan(0.5 * p.phi))
    ratio = p.y / (a * math.sin(p.phi))  # cosh(s) at the crossing, >= 1
    ratio = max(ratio, 1.0)
    s_exit = math.acosh(ratio)
    return (s_exit - s0, -s_exit - s0)


def deep_set_measure(d: int, delta: float, nu: float, eps: float,
                     a: float = 1.0, tol: float = 1e-10
                     ) -> tuple[float, float]:
    """Weighted Liouville measure of the eps-deep part of the cusp,
    against the closed-form envelope it is controlled by.

    numeric: quadrature of

        int_0^{pi/2} sin(phi)^(d-1)
            int_{y > max(a, a sin(phi) eps^(-2 nu))}
                (1 + log y) y^(-1-2 delta) dy dphi

    bound: eps^(2 nu d) + eps^(4 nu delta) |log eps|.

    The ratio numeric/bound over a range of eps is the object of
    interest; neither value is normalized beyond the formulas above.
    """
    if not (0.0 < eps < 1.0):
        raise ValueError("eps must lie in (0, 1)")
    if delta <= 0.0 or nu <= 0.0:
        raise ValueError("delta and nu must be positive")
    two_nu = 2.0 * nu

    def inner(phi: float) -> float:
        ylo = max(a, a * math.sin(phi) * eps ** (-two_nu))
        rlo = math.log(ylo)
        # integrand (1 + r) exp(-2 delta r) after y = e^r
        rhi = rlo + (45.0 + abs(rlo)) / (2.0 * delta)

        def f(r):
            return (1.0 + r) * math.exp(-2.0 * delta * r)

        return adaptive_simpson(f, rlo, rhi, tol=tol * delta)

    def outer(phi):
        return math.sin(phi) ** (d - 1) * inner(phi)

    numeric = adaptive_simpson(outer, 0.0, 0.5 * math.pi, tol=tol)
    bound = eps ** (two_nu * d) + eps ** (4.0 * nu * delta) * abs(
        math.log(eps))
    return numeric, bound
