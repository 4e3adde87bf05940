"""Perturbed metrics G = (I + eps F) / y^2 on the upper half-plane.

Perturbation fields report their components F in the orthonormal frame
(y d/dx, y d/dy) of the background metric, so the coordinate metric is
(delta_ij + eps F_ij) / y^2.  Fields supply analytic first derivatives
where they are cheap (conformal bumps, windowed cusp profiles); the
fallback is central differencing with a y-relative step.

Christoffel symbols are assembled from the exact derivative of the
background part plus the field partials, so the unperturbed metric
reproduces the hyperbolic symbols to machine precision rather than to
differencing accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .mobius import MobiusMap

FD_REL_STEP = 1e-5

# orthonormal-frame connection of the half-plane: nabla_{e0} e0 = e1,
# nabla_{e0} e1 = -e0, nabla_{e1} * = 0
_OMEGA = np.zeros((2, 2, 2))
_OMEGA[0, 1, 0] = 1.0   # omega^1_{00}
_OMEGA[0, 0, 1] = -1.0  # omega^0_{01}


def smoothstep(u):
    """Quintic ramp, C^2 at both ends."""
    u = np.clip(u, 0.0, 1.0)
    return u ** 3 * (10.0 + u * (-15.0 + 6.0 * u))


def plateau(r, lo, hi, ramp):
    """1 on [lo + ramp, hi - ramp], C^2 ramps down to 0 outside [lo, hi]."""
    r = np.asarray(r, dtype=float)
    return smoothstep((r - lo) / ramp) * smoothstep((hi - r) / ramp)


class PerturbationField:
    """Base class: orthonormal-frame components with FD partials."""

    def components(self, x, y):
        raise NotImplementedError

    def partials(self, x, y):
        """(d/dx, d/dy) of components, stacked on axis -3."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        h = FD_REL_STEP * np.maximum(np.abs(y), 0.1)
        hx = h[..., None, None] if h.ndim else h
        out = np.stack([
            (self.components(x + h, y) - self.components(x - h, y))
            / (2.0 * hx),
            (self.components(x, y + h) - self.components(x, y - h))
            / (2.0 * hx),
        ], axis=-3)
        return out


class ZeroField(PerturbationField):
    def components(self, x, y):
        shape = np.broadcast(np.asarray(x, dtype=float),
                             np.asarray(y, dtype=float)).shape
        return np.zeros(shape + (2, 2))

    def partials(self, x, y):
        shape = np.broadcast(np.asarray(x, dtype=float),
                             np.asarray(y, dtype=float)).shape
        return np.zeros(shape + (2, 2, 2))


def _dist_and_grad(x, y, center: complex):
    """Hyperbolic distance to center and its coordinate gradient.

    From cosh d = 1 + |z - c|^2 / (2 y y_c); the gradient is exact and
    vectorized, no geodesic construction involved.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc, yc = center.real, center.imag
    q2 = (x - xc) ** 2 + (y - yc) ** 2
    coshd = 1.0 + q2 / (2.0 * y * yc)
    d = np.arccosh(np.maximum(coshd, 1.0))
    sinhd = np.sqrt(np.maximum(coshd ** 2 - 1.0, 0.0))
    safe = np.where(sinhd > 1e-14, sinhd, 1.0)
    dx = (x - xc) / (y * yc) / safe
    dy = ((y - yc) / (y * yc) - q2 / (2.0 * y ** 2 * yc)) / safe
    dx = np.where(sinhd > 1e-14, dx, 0.0)
    dy = np.where(sinhd > 1e-14, dy, 0.0)
    return d, dx, dy


def _bump(s):
    """exp(-s^2 / (1 - s^2)) inside |s| < 1, zero outside; C^infinity."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    s2 = np.where(inside, s * s, 0.0)
    return np.where(inside, np.exp(-s2 / (1.0 - s2)), 0.0)


def _bump_ds(s):
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    s_in = np.where(inside, s, 0.0)
    one = (1.0 - s_in ** 2)
    return np.where(inside, _bump(s_in) * (-2.0 * s_in) / one ** 2, 0.0)


@dataclass(frozen=True)
class ConformalBump(PerturbationField):
    """F = amplitude * bump(d(z, center)/radius) * Id.

    Isometries pull a conformal bump back to another conformal bump, so
    deck symmetrization stays in this class and keeps its analytic
    gradient.
    """

    center: complex
    radius: float
    amplitude: float = 1.0

    def _w(self, x, y):
        d, dx, dy = _dist_and_grad(x, y, self.center)
        s = d / self.radius
        w = self.amplitude * _bump(s)
        dw = self.amplitude * _bump_ds(s) / self.radius
        return w, dw * dx, dw * dy

    def components(self, x, y):
        w, _, _ = self._w(x, y)
        return w[..., None, None] * np.eye(2)

    def partials(self, x, y):
        _, wx, wy = self._w(x, y)
        out = np.stack([wx, wy], axis=-1)
        return out[..., :, None, None] * np.eye(2)

    def pulled_back(self, m: MobiusMap) -> "ConformalBump":
        """(m^* F) for an isometry m: the bump recentered at m^{-1}c."""
        return ConformalBump(center=m.inverse()(self.center),
                             radius=self.radius, amplitude=self.amplitude)


@dataclass(frozen=True)
class TensorBump(PerturbationField):
    """Constant symmetric frame matrix times the same radial bump."""

    center: complex
    radius: float
    matrix: tuple = ((1.0, 0.0), (0.0, -1.0))

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (2, 2) or abs(m[0, 1] - m[1, 0]) > 1e-14:
            raise ValueError("matrix must be symmetric 2x2")
        object.__setattr__(self, "matrix", tuple(map(tuple, m)))

    @property
    def _m(self):
        return np.asarray(self.matrix)

    def components(self, x, y):
        d, _, _ = _dist_and_grad(x, y, self.center)
        w = _bump(d / self.radius)
        return w[..., None, None] * self._m

    def partials(self, x, y):
        d, dx, dy = _dist_and_grad(x, y, self.center)
        dw = _bump_ds(d / self.radius) / self.radius
        grad = np.stack([dw * dx, dw * dy], axis=-1)
        return grad[..., :, None, None] * self._m


@dataclass(frozen=True)
class Mode0Window(PerturbationField):
    """theta-independent cusp profiles in r = log y, windowed to
    compact support; invariant under the cusp translation by design.

    a_fn, b_fn, c_fn map arrays of r to frame components; the window is
    a C^2 plateau on [r_lo, r_hi] with the given ramp width.
    """

    a_fn: object
    b_fn: object
    c_fn: object
    r_lo: float
    r_hi: float
    ramp: float = 0.5

    def _profiles(self, y):
        r = np.log(y)
        win = plateau(r, self.r_lo, self.r_hi, self.ramp)
        return (np.asarray(self.a_fn(r)) * win,
                np.asarray(self.b_fn(r)) * win,
                np.asarray(self.c_fn(r)) * win)

    def components(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        a, b, c = self._profiles(np.broadcast_to(y, np.broadcast(x, y).shape))
        out = np.empty(np.broadcast(x, y).shape + (2, 2))
        out[..., 0, 0] = a
        out[..., 0, 1] = out[..., 1, 0] = 0.5 * b
        out[..., 1, 1] = c
        return out

    def partials(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast(x, y).shape
        yb = np.broadcast_to(y, shape)
        # d/dr by central differencing, then d/dy = (1/y) d/dr
        hr = 1e-6
        up = self.components(x, yb * math.exp(hr))
        dn = self.components(x, yb * math.exp(-hr))
        ddr = (up - dn) / (2.0 * hr)
        out = np.zeros(shape + (2, 2, 2))
        out[..., 1, :, :] = ddr / yb[..., None, None]
        return out


@dataclass(frozen=True)
class SummedField(PerturbationField):
    fields: tuple

    def components(self, x, y):
        return sum(f.components(x, y) for f in self.fields)

    def partials(self, x, y):
        return sum(f.partials(x, y) for f in self.fields)

    def pulled_back(self, m: MobiusMap) -> "SummedField":
        return SummedField(tuple(f.pulled_back(m) for f in self.fields))


def symmetrize_cyclic(bump: ConformalBump, gamma: MobiusMap,
                      translation_length: float) -> SummedField:
    """Sum of (gamma^k)^* bump over all k that can touch the support.

    Displacement of gamma^k is at least |k| times the translation
    length, so |k| <= ceil(2 radius / ell) + 1 terms suffice and the sum
    is exactly cyclic invariant on the support.
    """
    k_max = int(math.ceil(2.0 * bump.radius / translation_length)) + 1
    pulls = []
    fwd = MobiusMap.identity()
    for _ in range(k_max + 1):
        pulls.append(fwd)
        fwd = gamma @ fwd
    bwd = gamma.inverse()
    for k in range(1, k_max + 1):
        pulls.append(bwd)
        bwd = gamma.inverse() @ bwd
    return SummedField(tuple(bump.pulled_back(m) for m in pulls))


# ---------------------------------------------------------------------------
# the metric


@dataclass(frozen=True)
class PerturbedMetric:
    """G = (I + eps F) / y^2; eps = 0 or F = 0 is exactly hyperbolic."""

    field: PerturbationField = dc_field(default_factory=ZeroField)
    eps: float = 0.0

    def matrix(self, x, y):
        y = np.asarray(y, dtype=float)
        f = self.field.components(x, y) if self.eps else ZeroField(
        ).components(x, y)
        return (np.eye(2) + self.eps * f) / (y ** 2)[..., None, None]

    def inverse(self, x, y):
        g = self.matrix(x, y)
        det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
        inv = np.empty_like(g)
        inv[..., 0, 0] = g[..., 1, 1]
        inv[..., 1, 1] = g[..., 0, 0]
        inv[..., 0, 1] = -g[..., 0, 1]
        inv[..., 1, 0] = -g[..., 1, 0]
        return inv / det[..., None, None]

    def metric_partials(self, x, y):
        """dG[..., i, j, l] = d_i G_jl, exact in the background part."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast(x, y).shape
        g = self.matrix(x, y)
        dg = np.zeros(shape + (2, 2, 2))
        if self.eps:
            df = self.field.partials(x, y)
            dg += self.eps * df / (y ** 2)[..., None, None, None]
        dg[..., 1, :, :] -= 2.0 * g / y[..., None, None]
        return dg

    def christoffels(self, x, y):
        """Gamma[..., k, i, j] of the Levi-Civita connection."""
        ginv = self.inverse(x, y)
        dg = self.metric_partials(x, y)
        # bracket[i, j, l] = d_i G_jl + d_j G_il - d_l G_ij
        br = dg + dg.swapaxes(-3, -2) - np.moveaxis(dg, -3, -1)
        return 0.5 * np.einsum("...kl,...ijl->...kij", ginv, br)

    def speed_sq(self, x, y, vx, vy):
        g = self.matrix(x, y)
        return (g[..., 0, 0] * vx ** 2 + 2.0 * g[..., 0, 1] * vx * vy
                + g[..., 1, 1] * vy ** 2)


def hyperbolic_metric() -> PerturbedMetric:
    return PerturbedMetric(ZeroField(), 0.0)


def gauss_curvature(metric: PerturbedMetric, x, y, h_rel: float = 1e-4):
    """Gauss curvature by the Brioschi formula with differenced second
    partials of the coordinate metric."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    h = h_rel * np.maximum(np.abs(y), 0.5)

    def comp(xx, yy):
        g = metric.matrix(xx, yy)
        return g[..., 0, 0], g[..., 0, 1], g[..., 1, 1]

    E, F, G = comp(x, y)
    Ex, Fx, Gx = [(u - v) / (2 * h) for u, v in zip(comp(x + h, y),
                                                    comp(x - h, y))]
    Ey, Fy, Gy = [(u - v) / (2 * h) for u, v in zip(comp(x, y + h),
                                                    comp(x, y - h))]
    Eyy = (comp(x, y + h)[0] - 2 * E + comp(x, y - h)[0]) / h ** 2
    Gxx = (comp(x + h, y)[2] - 2 * G + comp(x - h, y)[2]) / h ** 2
    Fxy = (comp(x + h, y + h)[1] - comp(x + h, y - h)[1]
           - comp(x - h, y + h)[1] + comp(x - h, y - h)[1]) / (4 * h ** 2)

    a11 = -0.5 * Eyy + Fxy - 0.5 * Gxx
    detA = (a11 * (E * G - F * F)
            - 0.5 * Ex * ((Fy - 0.5 * Gx) * G - F * 0.5 * Gy)
            + (Fx - 0.5 * Ey) * ((Fy - 0.5 * Gx) * F - E * 0.5 * Gy))
    detB = (0.0 * E
            - 0.5 * Ey * (0.5 * Ey * G - F * 0.5 * Gx)
            + 0.5 * Gx * (0.5 * Ey * F - E * 0.5 * Gx))
    return (detA - detB) / (E * G - F * F) ** 2


def frame_c1_norm(f: PerturbationField, xs, ys) -> float:
    """sup over samples of |F| + |grad F| in the orthonormal frame,
    connection terms included."""
    comp = f.components(xs, ys)
    part = f.partials(xs, ys)
    y = np.asarray(ys, dtype=float)
    cov = y[..., None, None, None] * part
    # subtract omega corrections: (nabla_a F)_{bc}
    corr = -np.einsum("aeb,...ec->...abc", _OMEGA, comp) \
           - np.einsum("aec,...be->...abc", _OMEGA, comp)
    cov = cov + corr
    sup0 = float(np.max(np.sqrt(np.sum(comp ** 2, axis=(-2, -1))), initial=0.0))
    sup1 = float(np.max(np.sqrt(np.sum(cov ** 2, axis=(-3, -2, -1))),
                        initial=0.0))
    return sup0 + sup1
