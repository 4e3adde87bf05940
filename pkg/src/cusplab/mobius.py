"""Real Moebius maps acting on the upper half-plane.

A map is stored as a unit-determinant 2x2 real matrix with the sign
convention m11 + m22 >= 0 (then m11 >= 0, then m12 >= 0 on ties), which
fixes a representative of the PSL(2, R) class.  Trace classification,
translation length and the invariant axis of hyperbolic elements are
provided here; word/group bookkeeping lives in `groups`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PARABOLIC_TOL = 1e-9


class NotHyperbolicError(ValueError):
    """Raised when an axis or translation length is requested of a
    non-hyperbolic element."""


def _normalize(mat: np.ndarray) -> np.ndarray:
    det = mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]
    if det <= 0.0:
        raise ValueError(f"matrix must be orientation-preserving, det={det}")
    mat = mat / np.sqrt(det)
    tr = mat[0, 0] + mat[1, 1]
    if tr < 0.0 or (tr == 0.0 and (mat[0, 0] < 0.0 or
                                   (mat[0, 0] == 0.0 and mat[0, 1] < 0.0))):
        mat = -mat
    return mat


@dataclass(frozen=True)
class MobiusMap:
    m11: float
    m12: float
    m21: float
    m22: float

    @classmethod
    def from_matrix(cls, mat) -> "MobiusMap":
        mat = _normalize(np.asarray(mat, dtype=float).reshape(2, 2))
        return cls(mat[0, 0], mat[0, 1], mat[1, 0], mat[1, 1])

    @classmethod
    def identity(cls) -> "MobiusMap":
        return cls(1.0, 0.0, 0.0, 1.0)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m21, self.m22]])

    @property
    def trace(self) -> float:
        return self.m11 + self.m22

    def __matmul__(self, other: "MobiusMap") -> "MobiusMap":
        return MobiusMap.from_matrix(self.matrix @ other.matrix)

    def inverse(self) -> "MobiusMap":
        return MobiusMap.from_matrix(
            [[self.m22, -self.m12], [-self.m21, self.m11]])

    def __call__(self, z):
        """Act on a point (or array) of the upper half-plane."""
        z = np.asarray(z, dtype=complex)
        num = self.m11 * z + self.m12
        den = self.m21 * z + self.m22
        return num / den

    def derivative(self, z):
        """Holomorphic derivative 1/(m21 z + m22)^2."""
        z = np.asarray(z, dtype=complex)
        den = self.m21 * z + self.m22
        return 1.0 / (den * den)

    def second_derivative(self, z):
        z = np.asarray(z, dtype=complex)
        den = self.m21 * z + self.m22
        return -2.0 * self.m21 / (den * den * den)

    def is_identity(self, tol: float = 1e-12) -> bool:
        return (abs(self.m11 - 1.0) < tol and abs(self.m22 - 1.0) < tol
                and abs(self.m12) < tol and abs(self.m21) < tol)


def classify(m: MobiusMap) -> str:
    """'elliptic', 'parabolic' or 'hyperbolic' by |trace| against 2.

    The parabolic window is ||tr| - 2| < 1e-9; the identity falls in it
    by convention.
    """
    t = abs(m.trace)
    if abs(t - 2.0) < PARABOLIC_TOL:
        return "parabolic"
    return "elliptic" if t < 2.0 else "hyperbolic"


def trace_length(m: MobiusMap) -> float:
    """Translation length 2*arccosh(|tr|/2) of a hyperbolic element."""
    if classify(m) != "hyperbolic":
        raise NotHyperbolicError(f"element is {classify(m)}, |tr|={abs(m.trace)}")
    return 2.0 * float(np.arccosh(abs(m.trace) / 2.0))


def fixed_points(m: MobiusMap) -> tuple[float, float]:
    """Repelling and attracting boundary fixed points of a hyperbolic map.

    Either may be math.inf (vertical axis).  The attracting point is the
    one where |derivative| < 1.
    """
    if classify(m) != "hyperbolic":
        raise NotHyperbolicError("fixed points on the boundary require a "
                                 "hyperbolic element")
    a, b, c, d = m.m11, m.m12, m.m21, m.m22
    if abs(c) < 1e-300:
        # z -> (a z + b)/d with a/d != 1: one fixed point finite, one at inf.
        p = b / (d - a)
        # multiplier at infinity is a/d
        if abs(a / d) > 1.0:
            return p, np.inf
        return np.inf, p
    disc = (d - a) ** 2 + 4.0 * b * c
    sq = np.sqrt(disc)
    r1 = ((a - d) + sq) / (2.0 * c)
    r2 = ((a - d) - sq) / (2.0 * c)
    # attracting fixed point: |m'(x)| = 1/(c x + d)^2 < 1
    if (c * r1 + d) ** 2 > 1.0:
        return r2, r1
    return r1, r2


@dataclass(frozen=True)
class Axis:
    """Unit-speed parameterization of a hyperbolic element's axis.

    point(t) runs from the repelling to the attracting fixed point and
    satisfies m(point(t)) = point(t + length).
    """

    repelling: float
    attracting: float
    length: float

    def point(self, t):
        t = np.asarray(t, dtype=float)
        if np.isinf(self.attracting):
            # vertical ray over `repelling`, upward
            return self.repelling + 1j * np.exp(t)
        if np.isinf(self.repelling):
            return self.attracting + 1j * np.exp(-t)
        c = 0.5 * (self.repelling + self.attracting)
        r = 0.5 * (self.attracting - self.repelling)
        # z(t) = c + r tanh t + i |r| sech t traverses toward `attracting`
        return c + r * np.tanh(t) + 1j * abs(r) / np.cosh(t)

    def velocity(self, t):
        """dz/dt, the complex velocity (unit hyperbolic speed)."""
        t = np.asarray(t, dtype=float)
        if np.isinf(self.attracting):
            return 1j * np.exp(t) + 0.0 * t
        if np.isinf(self.repelling):
            return -1j * np.exp(-t) + 0.0 * t
        r = 0.5 * (self.attracting - self.repelling)
        sech = 1.0 / np.cosh(t)
        return r * sech ** 2 - 1j * abs(r) * sech * np.tanh(t)


def axis(m: MobiusMap) -> Axis:
    rep, att = fixed_points(m)
    return Axis(rep, att, trace_length(m))
