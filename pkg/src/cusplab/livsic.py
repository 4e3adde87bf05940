"""Constructive approximate coboundary decompositions on a cusped surface.

Everything here runs on the background geodesic flow of a
``CuspedSurface``.  Given a function f on the unit tangent bundle whose
averages over closed geodesics are small, the engine integrates f along
one long closed orbit, extends the primitive off the orbit by Holder
cones, and blends flow-pushed copies of the extensions through a
partition of unity subordinate to a cover by flow boxes and two cusp
hats.  The output pair (u, h) satisfies f = Xu + h identically, h
vanishes on the orbit, and the norms of h shrink as the orbit fills the
bundle more densely.

Conventions.  Phase points are half-plane states (x, y, alpha) reduced
to the fundamental region and lifted to their maximal-height deck
representative, so the cusp coordinates (height y, angle from vertical
phi with cos phi = sin alpha, horizontal sign u) read off directly.
The excursion apex y / sin(phi) is a first integral of the flow; the
cusp hats are built from it, the height, and phi alone, so their flow
derivatives are closed-form and the deep cusp needs no interior boxes.
Distances between phase points use the product proxy: base distance
plus angle mismatch, minimized over a deck ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cusp import deep_set_measure
from .halfplane import PhaseState, angle_wrap, flow, flow_arrays
from .metrics import _dist_and_grad, smoothstep
from .mobius import MobiusMap, axis as axis_of, trace_length
from .quadrature import gauss_legendre, spearman
from .surfaces import CuspedSurface
from .words import HomotopyClass

_HAT_LO = 0.35    # plateau fraction of the shared bump profile
_SNAP = 1e-6      # query this close to a data point counts as the point
_POLE = 1e-7      # |cos alpha| below this flows as a vertical ray


def _smoothstep_du(u):
    u = np.asarray(u, dtype=float)
    inside = (u > 0.0) & (u < 1.0)
    uu = np.where(inside, u, 0.5)
    return np.where(inside, 30.0 * uu ** 2 * (1.0 - uu) ** 2, 0.0)


def _hat_profile(s):
    """1 on [0, _HAT_LO], quintic ramp to 0 at 1."""
    s = np.asarray(s, dtype=float)
    return 1.0 - smoothstep((s - _HAT_LO) / (1.0 - _HAT_LO))


def _hat_profile_ds(s):
    s = np.asarray(s, dtype=float)
    return -_smoothstep_du((s - _HAT_LO) / (1.0 - _HAT_LO)) \
        / (1.0 - _HAT_LO)


def _wrap_x(x):
    x = np.asarray(x, dtype=float)
    return x - np.floor(x + 0.5)


def _velocity(y, alpha):
    """Flow generator in chart coordinates: (xdot, ydot, alphadot)."""
    ca, sa = np.cos(alpha), np.sin(alpha)
    return y * ca, y * sa, -ca


# -- deck machinery ----------------------------------------------------------


def _move_rows(surface: CuspedSurface, cusp_powers=(-1, 0, 1)):
    """Deck ball times small cusp powers, one coefficient row per map."""
    t = surface.group.evaluate(surface.group.cusp_word)
    powers = {0: MobiusMap.identity(), 1: t, -1: t.inverse()}
    rows = []
    for k in cusp_powers:
        for g in surface._ball:
            h = powers[k] @ g
            rows.append((h.m11, h.m12, h.m21, h.m22))
    return rows


def _apply_move(row, x, y, alpha):
    """One Mobius map on state arrays; unit determinant makes the
    tangent turn -2 arg(cz + d)."""
    a, b, c, d = row
    z = np.asarray(x, dtype=float) + 1j * np.asarray(y, dtype=float)
    den = c * z + d
    w = (a * z + b) / den
    turn = -2.0 * np.angle(den)
    return w.real, w.imag, np.asarray(alpha, dtype=float) + turn


def _lift_arrays(surface: CuspedSurface, x, y, alpha, passes: int = 2):
    """Maximal-height deck representative with Re wrapped to [-1/2, 1/2).

    Inputs should already be near the fundamental region; the ball scan
    exists to fix points hiding in a vertex horoball, where greedy
    reduction leaves cusp points at small imaginary part.
    """
    x = np.array(x, dtype=float, copy=True).ravel()
    y = np.array(y, dtype=float, copy=True).ravel()
    alpha = np.array(alpha, dtype=float, copy=True).ravel()
    ball = surface._ball
    for _ in range(passes):
        x = _wrap_x(x)
        z = x + 1j * y
        best = np.full(x.shape, -1, dtype=int)
        best_im = y * (1.0 + 1e-12)
        for j, g in enumerate(ball):
            im = ((g.m11 * z + g.m12) / (g.m21 * z + g.m22)).imag
            upd = im > best_im
            best[upd] = j
            best_im[upd] = im[upd]
        if not (best >= 0).any():
            break
        for j in np.unique(best[best >= 0]):
            sel = best == j
            g = ball[j]
            row = (g.m11, g.m12, g.m21, g.m22)
            x[sel], y[sel], alpha[sel] = _apply_move(row, x[sel], y[sel],
                                                     alpha[sel])
    x = _wrap_x(x)
    alpha = np.asarray(angle_wrap(alpha), dtype=float)
    return x, y, alpha


def _lift_state(surface: CuspedSurface, st: PhaseState) -> PhaseState:
    r, _ = surface.reduce_state(st)
    x, y, alpha = _lift_arrays(surface, [r.x], [r.y], [r.alpha])
    return PhaseState(float(x[0]), float(y[0]), float(alpha[0]))


@dataclass
class _ExpandedSet:
    """Phase points pushed through the deck ball and small cusp powers,
    for vectorized quotient distances from reduced queries.

    For queries wrapped into the standard strip the distance-minimizing
    deck image of any data point lies in a bounded window, so the
    expansion is pruned to one and mins over it.
    """

    x: np.ndarray
    y: np.ndarray
    alpha: np.ndarray
    src: np.ndarray

    @classmethod
    def build(cls, surface, x, y, alpha, y_window=(0.015, 90.0),
              x_pad=1.7):
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        alpha = np.asarray(alpha, dtype=float).ravel()
        xs, ys, als, srcs = [], [], [], []
        base = np.arange(x.size)
        for row in _move_rows(surface):
            wx, wy, wa = _apply_move(row, x, y, alpha)
            keep = (wy > y_window[0]) & (wy < y_window[1]) \
                & (np.abs(wx) < x_pad)
            if keep.any():
                xs.append(wx[keep])
                ys.append(wy[keep])
                als.append(np.asarray(angle_wrap(wa[keep])))
                srcs.append(base[keep])
        return cls(np.concatenate(xs), np.concatenate(ys),
                   np.concatenate(als), np.concatenate(srcs))

    def distances_from(self, qx: float, qy: float, qalpha: float):
        """Product distance from one query to every expanded point."""
        dx = qx - self.x
        dy = qy - self.y
        q = (dx * dx + dy * dy) / (2.0 * qy * self.y)
        dbase = np.log1p(q + np.sqrt(q * (q + 2.0)))
        return dbase + np.abs(angle_wrap(qalpha - self.alpha))

    def scores(self, qx, qy, qalpha, values=None, beta=None, bound=None,
               chunk=64):
        """Per query: min product distance, its source index, and, when
        values are given, the cone supremum max_j (v_j - bound d_j^b).

        A query within the snap distance of a data point sees that
        point's cone at zero distance, so its value is reproduced
        exactly whatever the solver noise in the query.
        """
        qx = np.asarray(qx, dtype=float).ravel()
        qy = np.asarray(qy, dtype=float).ravel()
        qalpha = np.asarray(qalpha, dtype=float).ravel()
        n = qx.size
        dmin = np.empty(n)
        amin = np.empty(n, dtype=int)
        smax = np.empty(n) if values is not None else None
        vals = None if values is None else \
            np.asarray(values, dtype=float)[self.src]
        for lo in range(0, n, chunk):
            sl = slice(lo, min(lo + chunk, n))
            dx = qx[sl, None] - self.x[None, :]
            dy = qy[sl, None] - self.y[None, :]
            q = (dx * dx + dy * dy) / (2.0 * qy[sl, None] * self.y[None, :])
            d = np.log1p(q + np.sqrt(q * (q + 2.0)))
            d += np.abs(angle_wrap(qalpha[sl, None] - self.alpha[None, :]))
            j = np.argmin(d, axis=1)
            rows = np.arange(j.size)
            dmin[sl] = d[rows, j]
            amin[sl] = self.src[j]
            if values is not None:
                deff = np.where(d < _SNAP, 0.0, d)
                smax[sl] = np.max(vals[None, :] - bound * deff ** beta,
                                  axis=1)
        return dmin, amin, smax


# -- functions on the unit tangent bundle ------------------------------------


class PhaseFunction:
    """Deck-invariant scalar on the unit tangent bundle.

    ``value`` takes broadcastable (x, y, alpha) arrays.  Bump-built
    functions carry deck copies of their center and wrap the real part
    mod the cusp translation first, so they evaluate correctly anywhere
    near the fundamental region and in the standard horoball.
    """

    def value(self, x, y, alpha):
        raise NotImplementedError

    def focus(self):
        """Phase states worth refining norm grids around."""
        return ()


@dataclass(frozen=True)
class PhaseBump(PhaseFunction):
    """Product bump around a phase point, summed over deck images.

    Profile hat(d / base_radius) * hat(|da| / angle_width), plateau up
    to _HAT_LO of each radius; the flow derivative is closed-form.
    """

    center: PhaseState
    base_radius: float
    angle_width: float
    amplitude: float = 1.0
    copies: tuple = ()

    def _terms(self, x, y, alpha, want_derivative):
        x = _wrap_x(x)
        y = np.asarray(y, dtype=float)
        alpha = np.asarray(alpha, dtype=float)
        total = np.zeros(np.broadcast(x, y, alpha).shape)
        deriv = np.zeros_like(total) if want_derivative else None
        for (cx, cy, ca) in self.copies:
            d, ddx, ddy = _dist_and_grad(x, y, complex(cx, cy))
            pb = _hat_profile(d / self.base_radius)
            da = angle_wrap(alpha - ca)
            qa = _hat_profile(np.abs(da) / self.angle_width)
            total += pb * qa
            if want_derivative:
                xdot, ydot, adot = _velocity(y, alpha)
                pb_t = _hat_profile_ds(d / self.base_radius) \
                    / self.base_radius * (ddx * xdot + ddy * ydot)
                qa_t = _hat_profile_ds(np.abs(da) / self.angle_width) \
                    / self.angle_width * np.sign(da) * adot
                deriv += pb_t * qa + pb * qa_t
        if want_derivative:
            return self.amplitude * total, self.amplitude * deriv
        return self.amplitude * total

    def value(self, x, y, alpha):
        return self._terms(x, y, alpha, False)

    def flow_derivative(self, x, y, alpha):
        return self._terms(x, y, alpha, True)[1]

    def focus(self):
        return (self.center,)


def phase_bump(surface: CuspedSurface, center: PhaseState,
               base_radius: float, angle_width: float,
               amplitude: float = 1.0) -> PhaseBump:
    """Build a bump carrying the deck copies its support can need."""
    c = _lift_state(surface, center)
    copies = []
    for row in _move_rows(surface):
        wx, wy, wa = _apply_move(row, np.array([c.x]), np.array([c.y]),
                                 np.array([c.alpha]))
        zx, zy, za = float(wx[0]), float(wy[0]), float(angle_wrap(wa[0]))
        reach = zy * math.sinh(min(base_radius, 2.0))
        if not (0.01 < zy < 60.0 and abs(zx) < 0.55 + reach):
            continue
        if any(abs(zx - px) < 1e-9 and abs(zy - py) < 1e-9
               and abs(angle_wrap(za - pa)) < 1e-9
               for px, py, pa in copies):
            continue
        copies.append((zx, zy, za))
    return PhaseBump(c, base_radius, angle_width, amplitude, tuple(copies))


@dataclass(frozen=True)
class FlowDerivative(PhaseFunction):
    """f = Xv for a bump v: an exact coboundary to test against."""

    base: PhaseBump

    def value(self, x, y, alpha):
        return self.base.flow_derivative(x, y, alpha)

    def focus(self):
        return self.base.focus()


@dataclass(frozen=True)
class ConstantFunction(PhaseFunction):
    level: float = 1.0

    def value(self, x, y, alpha):
        shape = np.broadcast(np.asarray(x, dtype=float),
                             np.asarray(y, dtype=float),
                             np.asarray(alpha, dtype=float)).shape
        return np.full(shape, self.level)


@dataclass(frozen=True)
class Combination(PhaseFunction):
    parts: tuple
    coefficients: tuple

    def value(self, x, y, alpha):
        out = 0.0
        for f, c in zip(self.parts, self.coefficients):
            out = out + c * f.value(x, y, alpha)
        return out

    def focus(self):
        return tuple(s for f in self.parts for s in f.focus())


@dataclass(frozen=True)
class _Scaled(PhaseFunction):
    base: PhaseFunction
    factor: float

    def value(self, x, y, alpha):
        return self.factor * self.base.value(x, y, alpha)

    def focus(self):
        return self.base.focus()


def norm_states(surface: CuspedSurface, f: PhaseFunction | None = None,
                nx: int = 17, ny: int = 11, nalpha: int = 12):
    """States for sup-norm estimates: a reduced global grid plus
    clusters around any focus points the function declares."""
    xs, ys = [], []
    for xv in np.linspace(-0.5 + 0.5 / nx, 0.5 - 0.5 / nx, nx):
        for yv in np.geomspace(0.08, 2.6, ny):
            r, _ = surface.reduce(complex(xv, yv))
            xs.append(r.real)
            ys.append(r.imag)
    out_x = [np.repeat(xs, nalpha)]
    out_y = [np.repeat(ys, nalpha)]
    out_a = [np.tile(np.linspace(-math.pi, math.pi, nalpha,
                                 endpoint=False), len(xs))]
    for st in (f.focus() if f is not None else ()):
        c = _lift_state(surface, st)
        for rad in np.linspace(0.04, 0.75, 8):
            for ang in np.linspace(-math.pi, math.pi, 8, endpoint=False):
                zx = c.x + rad * math.cos(ang) * c.y
                zy = max(c.y * (1.0 + 0.6 * rad * math.sin(ang)), 0.03)
                out_x.append(np.full(10, zx))
                out_y.append(np.full(10, zy))
                out_a.append(c.alpha + np.linspace(-math.pi, math.pi, 10,
                                                   endpoint=False))
    x = np.concatenate(out_x)
    y = np.concatenate(out_y)
    a = np.concatenate(out_a)
    return _lift_arrays(surface, x, y, a)


def phase_c1_norm(f: PhaseFunction, x, y, alpha, step: float = 1e-4):
    """sup |f| plus sup of the frame gradient (y d/dx, y d/dy, d/da),
    finite differences on the supplied states."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    v = f.value(x, y, alpha)
    hx = step * y
    gx = (f.value(x + hx, y, alpha) - f.value(x - hx, y, alpha)) / (2 * hx)
    gy = (f.value(x, y + hx, alpha) - f.value(x, y - hx, alpha)) / (2 * hx)
    ga = (f.value(x, y, alpha + step) - f.value(x, y, alpha - step)) \
        / (2 * step)
    grad = np.sqrt((y * gx) ** 2 + (y * gy) ** 2 + ga ** 2)
    return float(np.max(np.abs(v)) + np.max(grad))


# -- orbits ------------------------------------------------------------------


def _flow_integral(f: PhaseFunction, x, y, alpha, tau, panels: int = 2,
                   order: int = 8):
    """Integral of f along the flow from each state over [0, tau_i].

    tau is signed and may vary per state; each integral is a composite
    Gauss rule with the panel layout scaled per state.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    alpha = np.asarray(alpha, dtype=float).ravel()
    tau = np.asarray(tau, dtype=float).ravel()
    nodes, wts = gauss_legendre(order)
    offs = (np.arange(panels)[:, None] + 0.5 * (nodes[None, :] + 1.0)) \
        / panels
    t = tau[:, None] * offs.ravel()[None, :]
    w = tau[:, None] * np.tile(wts, panels)[None, :] / (2.0 * panels)
    fx, fy, fa = flow_arrays(x[:, None], y[:, None], alpha[:, None], t)
    return np.sum(f.value(fx, fy, fa) * w, axis=1)


def _axis_anchor(surface: CuspedSurface, cls: HomotopyClass) -> PhaseState:
    ax = axis_of(surface.group.holonomy(cls))
    z = ax.point(0.0)
    v = ax.velocity(0.0)
    st = PhaseState(z.real, z.imag, math.atan2(v.imag, v.real))
    return _lift_state(surface, st)


def _orbit_walk(surface: CuspedSurface, anchor: PhaseState, span: float,
                n_steps: int):
    """Sample the flow at span/n_steps increments, re-anchoring in the
    quotient each step so deep excursions never reach the exponential
    tail of a single cover lift."""
    dt = span / n_steps
    xs = np.empty(n_steps + 1)
    ys = np.empty(n_steps + 1)
    als = np.empty(n_steps + 1)
    st = anchor
    for k in range(n_steps + 1):
        xs[k], ys[k], als[k] = st.x, st.y, st.alpha
        if k < n_steps:
            st = _lift_state(surface, flow(st, dt))
    return xs, ys, als, dt


@dataclass
class GoodOrbit:
    """A closed orbit sampled along [0, period - 1] in the quotient.

    The terminal unit of the period is left unsampled so a primitive of
    a non-coboundary integrand has room for its jump at the cut.
    density_radius covers the whole eps-thick part including the cusp
    band; thick_density restricts the probes to heights below the chart
    floor, which is what sizes the interior boxes (the hats take their
    data from floor crossings, not from orbit density in the cusp).
    """

    word: str
    period: float
    dt: float
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    alpha: np.ndarray
    closure_error: float
    density_radius: float
    thick_density: float
    separation: float
    searched: int
    word_cap: int
    surface: CuspedSurface = field(repr=False, default=None)

    @property
    def span(self) -> float:
        return float(self.times[-1])

    def beta_exponents(self, eps: float) -> tuple[float, float]:
        """(beta_d, beta_t) read off the achieved radii at scale eps."""
        le = math.log(eps)
        bd = math.log(max(self.density_radius, 1e-300)) / le
        bt = math.log(max(self.separation, 1e-300)) / le
        return bd, bt


def sample_class_orbit(surface: CuspedSurface, cls: HomotopyClass,
                       dt: float = 0.05, span: float | None = None):
    """Walk the closed orbit of a hyperbolic class; span defaults to
    the full period."""
    period = trace_length(surface.group.holonomy(cls))
    anchor = _axis_anchor(surface, cls)
    total = period if span is None else span
    n = max(int(math.ceil(total / dt)), 4)
    xs, ys, als, dt_actual = _orbit_walk(surface, anchor, total, n)
    return xs, ys, als, dt_actual, period, anchor


def flow_average(f: PhaseFunction, surface: CuspedSurface,
                 cls: HomotopyClass, dt: float = 0.25,
                 order: int = 8) -> float:
    """Average of f over the closed orbit of a class: the transform of
    f at that class divided by the length."""
    xs, ys, als, dt_actual, period, _ = sample_class_orbit(surface, cls, dt)
    vals = _flow_integral(f, xs[:-1], ys[:-1], als[:-1],
                          np.full(xs.size - 1, dt_actual), panels=1,
                          order=order)
    return float(np.sum(vals) / period)


def _probe_states(surface: CuspedSurface, eps: float, nu: float,
                  nx: int = 12, ny: int = 7, nalpha: int = 6,
                  cusp_ny: int = 6, cusp_nphi: int = 7):
    """Sample states of the eps-thick part: a reduced grid below the
    chart floor plus a cusp band capped at the apex height that the
    deep-sliver cut removes.  Returns arrays and a thick-part mask."""
    a = surface.chart.a
    apex_cap = a / math.sin(min(eps ** (2.0 * nu), 1.2))
    xs, ys = [], []
    for xv in np.linspace(-0.5 + 0.5 / nx, 0.5 - 0.5 / nx, nx):
        for yv in np.geomspace(0.09, 0.95 * a, ny):
            r, _ = surface.reduce(complex(xv, yv))
            xs.append(r.real)
            ys.append(r.imag)
    angles = np.linspace(-math.pi, math.pi, nalpha, endpoint=False) + 0.37
    bx = np.repeat(xs, nalpha)
    by = np.repeat(ys, nalpha)
    ba = np.tile(angles, len(xs))
    bx, by, ba = _lift_arrays(surface, bx, by, ba)
    keep = by < 1.45 * a
    out_x, out_y, out_a = [bx[keep]], [by[keep]], [ba[keep]]
    n_thick = int(keep.sum())
    for yv in np.geomspace(a, 0.98 * apex_cap, cusp_ny):
        for phi in np.linspace(0.12, math.pi - 0.12, cusp_nphi):
            if yv / math.sin(phi) > apex_cap:
                continue
            for u in (1.0, -1.0):
                for th in (-0.31, 0.11, 0.42):
                    out_x.append(np.array([th]))
                    out_y.append(np.array([yv]))
                    out_a.append(np.array([math.atan2(math.cos(phi),
                                                      u * math.sin(phi))]))
    x = np.concatenate(out_x)
    thick = np.zeros(x.size, dtype=bool)
    thick[:n_thick] = True
    return x, np.concatenate(out_y), np.concatenate(out_a), thick


def _orbit_density(surface, ox, oy, oa, px, py, pa, thick):
    expanded = _ExpandedSet.build(surface, ox, oy, oa)
    d, _, _ = expanded.scores(px, py, pa)
    return float(np.max(d)), float(np.max(d[thick]))


def _orbit_separation(surface, ox, oy, oa, dt, gap: float = 0.8):
    """Minimal product distance between samples at time gaps beyond the
    given one: near-returns of distinct strands."""
    n = ox.size
    stride = max(int(round(gap / dt)), 1)
    expanded = _ExpandedSet.build(surface, ox, oy, oa)
    best = math.inf
    for i in range(0, n, max(n // 160, 1)):
        d = expanded.distances_from(ox[i], oy[i], oa[i])
        far = (np.abs(expanded.src - i) >= stride) \
            & (np.abs(expanded.src - i) <= n - stride)
        if far.any():
            best = min(best, float(np.min(d[far])))
    return best


def find_good_orbit(surface: CuspedSurface, eps: float, *,
                    word_cap: int = 6, candidates: int = 14,
                    dt: float = 0.02, score_dt: float = 0.12,
                    nu: float = 0.25,
                    demand_radius: float | None = None) -> GoodOrbit:
    """Search closed orbits with period at most eps^(-1/2) and keep the
    one that fills the eps-thick part most densely.

    Enumeration stops at ``word_cap`` letters; the number of classes
    inspected is recorded on the result.  Ties in measured density
    break on separation, then on the canonical word.  With
    ``demand_radius`` set, an insufficiently dense best orbit raises
    with a report of what was found.
    """
    budget = eps ** -0.5
    classes = surface.group.hyperbolic_classes(word_cap)
    pool = [c for c in classes
            if trace_length(surface.group.holonomy(c)) <= budget]
    if not pool:
        raise ValueError(
            "no orbit within budget meets both criteria: period budget "
            f"{budget:.3f} admits no class at word length <= {word_cap}")
    pool.sort(key=lambda c: (-trace_length(surface.group.holonomy(c)),
                             c.word))
    pool = pool[:candidates]
    px, py, pa, thick = _probe_states(surface, eps, nu)
    scored = []
    for cls in pool:
        period = trace_length(surface.group.holonomy(cls))
        span = max(period - 1.0, 0.5 * period)
        n = max(int(math.ceil(span / score_dt)), 4)
        xs, ys, als, dts = _orbit_walk(surface, _axis_anchor(surface, cls),
                                       span, n)
        dens, _ = _orbit_density(surface, xs, ys, als, px, py, pa, thick)
        sep = _orbit_separation(surface, xs, ys, als, dts)
        scored.append((dens, -sep, cls.word, cls, period))
    scored.sort(key=lambda row: row[:3])
    dens, negsep, _, cls, period = scored[0]
    if demand_radius is not None and dens > demand_radius:
        raise ValueError(
            "no orbit within budget meets both criteria; best found: "
            f"word {cls.key()!r} with density radius {dens:.4f} "
            f"(separation {-negsep:.4f}) against demand "
            f"{demand_radius:.4f}")
    span = max(period - 1.0, 0.5 * period)
    n = max(int(math.ceil(span / dt)), 8)
    anchor = _axis_anchor(surface, cls)
    xs, ys, als, dt_actual = _orbit_walk(surface, anchor, span, n)
    dens, dthick = _orbit_density(surface, xs, ys, als, px, py, pa, thick)
    sep = _orbit_separation(surface, xs, ys, als, dt_actual)
    closing = _lift_state(surface, flow(
        PhaseState(xs[-1], ys[-1], als[-1]), period - span))
    closure = surface.phase_distance(
        closing, PhaseState(xs[0], ys[0], als[0]))
    times = dt_actual * np.arange(n + 1)
    return GoodOrbit(cls.key(), period, dt_actual, times, xs, ys, als,
                     closure, dens, dthick, sep, len(classes), word_cap,
                     surface)


# -- primitive along the orbit -----------------------------------------------


@dataclass
class OrbitPrimitive:
    """Cumulative integral of f along the orbit samples, zero at the
    anchor."""

    orbit: GoodOrbit
    values: np.ndarray
    derivative_residual: float

    def holder_seminorm(self, beta: float, floor: float = 1e-4) -> float:
        """Max |du| / d^beta over sampled pairs; distances floored so
        exact returns do not divide by zero."""
        o = self.orbit
        n = o.x.size
        expanded = _ExpandedSet.build(o.surface, o.x, o.y, o.alpha)
        best = 0.0
        for i in range(0, n - 1, max(n // 220, 1)):
            d = expanded.distances_from(o.x[i], o.y[i], o.alpha[i])
            keep = expanded.src > i
            du = np.abs(self.values[expanded.src[keep]] - self.values[i])
            ratio = du / np.maximum(d[keep], floor) ** beta
            if ratio.size:
                best = max(best, float(np.max(ratio)))
        return best


def primitive_along_orbit(f: PhaseFunction, orbit: GoodOrbit,
                          order: int = 8) -> OrbitPrimitive:
    """Integrate f along the orbit: u~(0) = 0, one Gauss panel per
    sample step.  The centered difference of the result against f is
    reported as a residual."""
    o = orbit
    steps = _flow_integral(f, o.x[:-1], o.y[:-1], o.alpha[:-1],
                           np.full(o.x.size - 1, o.dt), panels=1,
                           order=order)
    values = np.concatenate([[0.0], np.cumsum(steps)])
    mid = (values[2:] - values[:-2]) / (2.0 * o.dt)
    fv = f.value(o.x[1:-1], o.y[1:-1], o.alpha[1:-1])
    residual = float(np.max(np.abs(mid - fv))) if mid.size else 0.0
    return OrbitPrimitive(orbit, values, residual)


# -- Holder extension ---------------------------------------------------------


@dataclass
class HolderExtension:
    """Largest beta-Holder function below sampled values: the cone
    supremum x -> max_j (values_j - bound d(x, x_j)^beta)."""

    values: np.ndarray
    expanded: _ExpandedSet
    beta: float
    bound: float

    def __call__(self, x, y, alpha):
        _, _, s = self.expanded.scores(x, y, alpha, values=self.values,
                                       beta=self.beta, bound=self.bound)
        return s


def holder_extend(values, x, y, alpha, surface: CuspedSurface,
                  beta: float, bound: float) -> HolderExtension:
    """Extend sampled values off their section by Holder cones.

    The extension is beta-Holder with constant at most ``bound`` and
    reproduces the data exactly whenever the data itself obeys the
    declared regularity.
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("empty hit set: nothing to extend")
    if not 0.0 < beta < 0.5:
        raise ValueError(f"beta must lie in (0, 1/2), got {beta}")
    if bound <= 0.0:
        raise ValueError("the seminorm bound must be positive")
    expanded = _ExpandedSet.build(surface, x, y, alpha)
    return HolderExtension(values, expanded, beta, bound)


def _pairwise_ratio(surface, x, y, alpha, values, beta: float) -> float:
    """Exact max |dv| / d^beta over all data pairs: the smallest bound
    under which a cone extension still reproduces the data."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 2:
        return 0.0
    y = np.asarray(y, dtype=float).ravel()
    alpha = np.asarray(alpha, dtype=float).ravel()
    values = np.asarray(values, dtype=float).ravel()
    expanded = _ExpandedSet.build(surface, x, y, alpha)
    best = 0.0
    for i in range(x.size - 1):
        d = expanded.distances_from(x[i], y[i], alpha[i])
        keep = expanded.src > i
        du = np.abs(values[expanded.src[keep]] - values[i])
        ratio = du / np.maximum(d[keep], _SNAP) ** beta
        if ratio.size:
            best = max(best, float(np.max(ratio)))
    return best


# -- partition of unity -------------------------------------------------------


@dataclass
class _FlowBox:
    """Product bump around a base point and an angle window, summed
    over the deck copies whose support reaches the standard strip."""

    centers: np.ndarray
    angles: np.ndarray
    base_radius: float
    angle_width: float

    def profiles(self, x, y, alpha):
        chi = np.zeros(np.broadcast(x, y, alpha).shape)
        xchi = np.zeros_like(chi)
        xdot, ydot, adot = _velocity(y, alpha)
        for c, ac in zip(self.centers, self.angles):
            d, ddx, ddy = _dist_and_grad(x, y, c)
            pb = _hat_profile(d / self.base_radius)
            if not pb.any():
                continue
            da = angle_wrap(alpha - ac)
            qa = _hat_profile(np.abs(da) / self.angle_width)
            chi += pb * qa
            pb_t = _hat_profile_ds(d / self.base_radius) \
                / self.base_radius * (ddx * xdot + ddy * ydot)
            qa_t = _hat_profile_ds(np.abs(da) / self.angle_width) \
                / self.angle_width * np.sign(da) * adot
            xchi += pb_t * qa + pb * qa_t
        return chi, xchi


@dataclass
class FlowPartition:
    """Interior flow boxes plus two cusp hats, normalized to sum to one.

    The hats depend on the excursion apex (a flow invariant), the
    height, and the angle from vertical, split into the outgoing
    (rising) and incoming (falling) halves; by the symmetry of the
    quintic ramp the halves sum to the plain cutoff, so deep in the
    cusp the hats alone resolve unity.
    """

    surface: CuspedSurface
    boxes: list
    apex_lo: float
    apex_hi: float
    y_lo: float
    phi_ramp: float = 0.5

    def _hat_profiles(self, y, alpha):
        a = self.surface.chart.a
        sa = np.sin(alpha)
        sphi = np.maximum(np.abs(np.cos(alpha)), 1e-300)
        apex = y / sphi
        phi = np.arccos(np.clip(sa, -1.0, 1.0))
        cut = smoothstep((apex - self.apex_lo)
                         / (self.apex_hi - self.apex_lo))
        up = (y - self.y_lo) / (a - self.y_lo)
        rup = smoothstep(up)
        rup_t = _smoothstep_du(up) / (a - self.y_lo) * (y * sa)
        w = self.phi_ramp
        arg = (phi - (0.5 * math.pi - w)) / (2.0 * w)
        rdn = 1.0 - smoothstep(arg)
        rdn_t = -_smoothstep_du(arg) / (2.0 * w) * sphi
        chi_out = cut * rup * rdn
        chi_in = cut * rup * (1.0 - rdn)
        xchi_out = cut * (rup_t * rdn + rup * rdn_t)
        xchi_in = cut * (rup_t * (1.0 - rdn) - rup * rdn_t)
        return chi_out, xchi_out, chi_in, xchi_in

    def profiles(self, x, y, alpha):
        """(chi, xchi) stacked rows: boxes first, then the rising and
        falling hats."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        alpha = np.asarray(alpha, dtype=float)
        k = len(self.boxes)
        chi = np.zeros((k + 2,) + np.broadcast(x, y, alpha).shape)
        xchi = np.zeros_like(chi)
        for i, box in enumerate(self.boxes):
            chi[i], xchi[i] = box.profiles(x, y, alpha)
        chi[k], xchi[k], chi[k + 1], xchi[k + 1] = \
            self._hat_profiles(y, alpha)
        return chi, xchi

    def theta(self, x, y, alpha):
        """Normalized rows and their flow derivatives; raises if the
        cover misses any requested state."""
        chi, xchi = self.profiles(x, y, alpha)
        total = np.sum(chi, axis=0)
        low = float(np.min(total))
        if low <= 1e-9:
            raise ValueError("partition does not cover the requested "
                             f"states: min coverage {low:.3e}")
        xtotal = np.sum(xchi, axis=0)
        theta = chi / total
        xtheta = (xchi * total - chi * xtotal) / total ** 2
        return theta, xtheta


def _interior_mesh(surface: CuspedSurface, spacing: float, y_top: float):
    """Greedy net of base points over the part of the quotient the cusp
    hats do not reach."""
    cloud = []
    for xv in np.linspace(-0.5, 0.49, 29):
        for yv in np.geomspace(0.07, y_top, 17):
            r, _ = surface.reduce(complex(xv, yv))
            lx, ly, _ = _lift_arrays(surface, [r.real], [r.imag], [0.0])
            if ly[0] < y_top:
                cloud.append(complex(lx[0], ly[0]))
    cloud.sort(key=lambda z: (round(z.imag, 9), round(z.real, 9)))
    kept: list[complex] = []
    for z in cloud:
        if all(surface.quotient_distance(z, w) >= spacing for w in kept):
            kept.append(z)
    return kept


def build_partition(surface: CuspedSurface, box_radius: float,
                    angle_windows: int = 4, apex_lo: float = 1.35,
                    apex_hi: float = 2.2, y_lo: float = 0.8
                    ) -> FlowPartition:
    """Cover the bundle: product boxes below the cusp takeover apex,
    hats above it.  Mesh spacing is slaved to the radius so the
    plateaus keep the coverage away from zero."""
    a = surface.chart.a
    mesh = _interior_mesh(surface, 0.75 * box_radius, 1.42 * a)
    rows = _move_rows(surface)
    width = (2.0 * math.pi / angle_windows) / (2.0 * _HAT_LO) * 0.8
    boxes = []
    for z in mesh:
        cxs, cas = [], []
        for row in rows:
            wx, wy, wa = _apply_move(row, np.array([z.real]),
                                     np.array([z.imag]), np.array([0.0]))
            reach = wy[0] * math.sinh(min(box_radius, 1.8))
            if wy[0] < 0.012 or wy[0] > 7.0 \
                    or abs(wx[0]) > 0.55 + reach:
                continue
            if any(abs(complex(wx[0], wy[0]) - c) < 1e-9 for c in cxs):
                continue
            cxs.append(complex(wx[0], wy[0]))
            cas.append(float(wa[0]))
        for j in range(angle_windows):
            center = -math.pi + (j + 0.5) * 2.0 * math.pi / angle_windows
            boxes.append(_FlowBox(
                np.asarray(cxs),
                np.asarray(angle_wrap(np.asarray(cas) + center)),
                box_radius, width))
    return FlowPartition(surface, boxes, apex_lo * a, apex_hi * a,
                         y_lo * a)


# -- decomposition ------------------------------------------------------------


def _golden_closest(x, y, alpha, center: complex, t_lo: float,
                    t_hi: float, iters: int = 42):
    """Per-state time of closest base approach to a point.  Distance to
    a point is convex along geodesics and the approach takes at most
    the current distance, so the bracket is safe and the minimum is
    unique."""
    ratio = (math.sqrt(5.0) - 1.0) / 2.0
    lo = np.full(np.shape(x), t_lo, dtype=float)
    hi = np.full(np.shape(x), t_hi, dtype=float)
    c = hi - ratio * (hi - lo)
    d = lo + ratio * (hi - lo)

    def dist_at(t):
        fx, fy, _ = flow_arrays(x, y, alpha, t)
        dd, _, _ = _dist_and_grad(fx, fy, center)
        return dd

    fc = dist_at(c)
    fd = dist_at(d)
    for _ in range(iters):
        take_left = fc < fd
        hi = np.where(take_left, d, hi)
        lo = np.where(take_left, lo, c)
        c = hi - ratio * (hi - lo)
        d = lo + ratio * (hi - lo)
        fc = dist_at(c)
        fd = dist_at(d)
    return 0.5 * (lo + hi)


@dataclass
class _SectionData:
    """Extension data for one member of the cover."""

    extension: HolderExtension
    hit_times: np.ndarray
    bound: float
    fallback: bool


def _collect_box_hits(context, primitive: OrbitPrimitive,
                      f: PhaseFunction):
    """Closest-approach hits of the orbit on every box section, with
    the primitive carried to the refined times by short exact arcs."""
    o = context.orbit
    hits = []
    for box in context.partition.boxes:
        chi, _ = box.profiles(o.x, o.y, o.alpha)
        idx = np.flatnonzero(chi > 0.0)
        if idx.size == 0:
            hits.append((np.empty(0),) * 5)
            continue
        runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
        hx, hy, ha, hu, ht = [], [], [], [], []
        for run in runs:
            dists = np.min(np.stack(
                [_dist_and_grad(o.x[run], o.y[run], c)[0]
                 for c in box.centers]), axis=0)
            j = int(run[int(np.argmin(dists))])
            per_copy = [float(_dist_and_grad(o.x[j:j + 1], o.y[j:j + 1],
                                             c)[0][0])
                        for c in box.centers]
            cbest = box.centers[int(np.argmin(per_copy))]
            t = _golden_closest(o.x[j:j + 1], o.y[j:j + 1],
                                o.alpha[j:j + 1], cbest, -o.dt, o.dt)
            fx, fy, fa = flow_arrays(o.x[j:j + 1], o.y[j:j + 1],
                                     o.alpha[j:j + 1], t)
            du = _flow_integral(f, o.x[j:j + 1], o.y[j:j + 1],
                                o.alpha[j:j + 1], t, panels=1, order=8)
            hx.append(float(fx[0]))
            hy.append(float(fy[0]))
            ha.append(float(fa[0]))
            hu.append(float(primitive.values[j] + du[0]))
            ht.append(float(o.times[j] + t[0]))
        hits.append((np.asarray(hx), np.asarray(hy), np.asarray(ha),
                     np.asarray(hu), np.asarray(ht)))
    return hits


def _collect_floor_hits(context, primitive: OrbitPrimitive,
                        f: PhaseFunction, rising: bool):
    """Crossings of the chart floor, located in closed form from the
    sample on the near side."""
    o = context.orbit
    a = context.surface.chart.a
    sa = np.sin(o.alpha)
    if rising:
        cross = (o.y[:-1] < a) & (o.y[1:] >= a) & (sa[:-1] > 0)
    else:
        cross = (o.y[:-1] >= a) & (o.y[1:] < a) & (sa[:-1] < 0)
    out = []
    for j in np.flatnonzero(cross):
        saj = float(np.clip(sa[j], -1 + 1e-14, 1 - 1e-14))
        sphi = max(abs(math.cos(o.alpha[j])), _POLE)
        apex = o.y[j] / sphi
        if apex < a:
            continue
        u = 1.0 if math.cos(o.alpha[j]) >= 0 else -1.0
        s_now = -math.atanh(saj)
        s_c = -math.acosh(apex / a) if rising else math.acosh(apex / a)
        tau = s_c - s_now
        if not 0.0 <= tau <= o.dt * (1.0 + 1e-9):
            continue
        drift = apex * (math.tanh(s_c) - math.tanh(s_now))
        ex = float(_wrap_x(o.x[j] + u * drift))
        ea = math.atan2(-math.tanh(s_c), u * a / apex)
        du = _flow_integral(f, [o.x[j]], [o.y[j]], [o.alpha[j]], [tau],
                            panels=1, order=8)
        out.append((ex, a, ea, float(primitive.values[j] + du[0]),
                    float(o.times[j] + tau)))
    if not out:
        return (np.empty(0),) * 5
    arr = np.asarray(out)
    return arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4]


@dataclass
class LivsicContext:
    """Orbit, partition, and grids shared by every decomposition at a
    fixed scale."""

    surface: CuspedSurface
    eps: float
    nu: float
    delta: float
    orbit: GoodOrbit
    partition: FlowPartition
    box_radius: float
    grids: dict
    norm_grid: tuple


def _quotient_grids(surface: CuspedSurface, eps: float, nu: float,
                    nx: int = 16, ny: int = 9, nalpha: int = 10,
                    seam: float = 0.6, cusp_ny: int = 12,
                    cusp_ntheta: int = 4, cusp_nphi: int = 11):
    """Integration grids over the unit tangent bundle.

    Below the seam height the quotient is sampled through an ambient
    rectangle restricted to the fundamental set; above it the cusp
    chart is an exact product (the horoball embeds well below the
    floor) and is gridded directly.  Cell weights carry the Liouville
    measure dx dy dalpha / y^2.
    """
    a = surface.chart.a
    apex_cap = a / math.sin(min(eps ** (2.0 * nu), 1.2))
    y_max = 3.5 * apex_cap
    xs = np.linspace(-0.5 + 0.5 / nx, 0.5 - 0.5 / nx, nx)
    ys = np.geomspace(0.035, seam * a, ny + 1)
    ym = np.sqrt(ys[:-1] * ys[1:])
    keep_x, keep_y, cell = [], [], []
    for xv in xs:
        for yv, ylo, yhi in zip(ym, ys[:-1], ys[1:]):
            z = complex(xv, yv)
            r, _ = surface.reduce(z)
            if abs(r - z) > 1e-9:
                continue
            lx, ly, _ = _lift_arrays(surface, [z.real], [z.imag], [0.0])
            if ly[0] > seam * a * (1.0 + 1e-9):
                continue
            keep_x.append(xv)
            keep_y.append(yv)
            cell.append((1.0 / nx) * (yhi - ylo) / yv ** 2)
    angles = np.linspace(-math.pi, math.pi, nalpha, endpoint=False) + 0.23
    tx = np.repeat(keep_x, nalpha)
    ty = np.repeat(keep_y, nalpha)
    ta = np.tile(angles, len(keep_x))
    tw = np.repeat(cell, nalpha) * (2.0 * math.pi / nalpha)
    tx, ty, ta = _lift_arrays(surface, tx, ty, ta)
    yc = np.geomspace(seam * a, y_max, cusp_ny + 1)
    ycm = np.sqrt(yc[:-1] * yc[1:])
    thetas = np.linspace(-0.5, 0.5, cusp_ntheta, endpoint=False) + 0.13
    phis = np.linspace(0.0, math.pi, cusp_nphi + 1)
    phim = 0.5 * (phis[:-1] + phis[1:])
    cx, cy, ca, cw = [], [], [], []
    for yv, ylo, yhi in zip(ycm, yc[:-1], yc[1:]):
        for th in thetas:
            for ph, plo, phi_hi in zip(phim, phis[:-1], phis[1:]):
                for u in (1.0, -1.0):
                    cx.append(th)
                    cy.append(yv)
                    ca.append(math.atan2(math.cos(ph),
                                         u * math.sin(ph)))
                    cw.append((yhi - ylo) / yv ** 2 / cusp_ntheta
                              * (phi_hi - plo))
    cx = np.asarray(cx)
    cy = np.asarray(cy)
    ca = np.asarray(ca)
    cw = np.asarray(cw)
    apex = cy / np.maximum(np.abs(np.cos(ca)), 1e-300)
    x = np.concatenate([tx, cx])
    y = np.concatenate([ty, cy])
    alpha = np.concatenate([ta, ca])
    weight = np.concatenate([tw, cw])
    apex_all = np.concatenate([np.zeros(tx.size), apex])
    in_meps = (y < a) | (apex_all <= apex_cap)
    return {
        "x": x, "y": y, "alpha": alpha, "weight": weight,
        "height": y.copy(), "apex": apex_all, "in_meps": in_meps,
        "apex_cap": apex_cap, "thick_size": int(tx.size),
    }


def prepare_context(surface: CuspedSurface | None = None, *,
                    eps: float = 0.01, nu: float = 0.25,
                    delta: float = 0.25, word_cap: int = 6,
                    dt: float = 0.02, box_scale: float | None = None,
                    angle_windows: int = 4,
                    orbit: GoodOrbit | None = None) -> LivsicContext:
    """Search the orbit, build the partition, and lay the grids once;
    decompositions of different integrands then share them.

    With no explicit box_scale the box radius follows the measured
    thick-part density of the orbit (never below the 0.1 floor), so the
    cover is exactly as fine as the orbit can feed with section data.
    """
    if surface is None:
        from .surfaces import punctured_torus
        surface = punctured_torus()
    if orbit is None:
        orbit = find_good_orbit(surface, eps, word_cap=word_cap, dt=dt,
                                nu=nu)
    box_radius = box_scale if box_scale is not None \
        else max(0.1, 1.25 * orbit.thick_density)
    partition = build_partition(surface, box_radius,
                                angle_windows=angle_windows)
    grids = _quotient_grids(surface, eps, nu)
    return LivsicContext(surface, eps, nu, delta, orbit, partition,
                         box_radius, grids, norm_states(surface))


@dataclass
class CoboundaryDecomposition:
    """f = Xu + h with u = sum_i theta_i u_i and h = -sum_i u_i X theta_i.

    Norms are reported in the units of the input; the construction runs
    on f divided by its C1 norm.  The weighted L2 norm of h uses the
    weight max(height, floor)^(1/2 - delta) and splits into the part
    inside the eps-thick set and the deep remainder.
    """

    eps: float
    beta: float
    nu: float
    delta: float
    f_c1: float
    i_sup: float
    trivial: bool
    message: str
    orbit: GoodOrbit | None
    holder_bound: float = 0.0
    orbit_seminorm: float = 0.0
    h_c0_meps: float = 0.0
    h_weighted_l2: float = 0.0
    weighted_interior: float = 0.0
    weighted_deep: float = 0.0
    orbit_sup: float = 0.0
    orbit_checked: int = 0
    residual_fd: float = 0.0
    partition_residual: float = 0.0
    coverage_floor: float = 0.0
    fallback_boxes: int = 0
    box_count: int = 0
    u_holder_est: float = 0.0
    theta_average: dict = field(default_factory=dict)
    deep_measure_ratio: float = 0.0
    _assembler: object = field(default=None, repr=False)
    _trivial_f: object = field(default=None, repr=False)
    _scale: float = 1.0

    def evaluate(self, x, y, alpha):
        """(u, h) at the given states, in the units of the input f."""
        if self._assembler is None:
            zeros = np.zeros(np.broadcast(
                np.asarray(x, dtype=float), np.asarray(y, dtype=float),
                np.asarray(alpha, dtype=float)).shape)
            if self._trivial_f is None:
                return zeros, zeros
            return zeros, np.asarray(
                self._trivial_f.value(x, y, alpha), dtype=float)
        u, h = self._assembler.evaluate(x, y, alpha)
        return u * self._scale, h * self._scale


class _Assembler:
    """Pointwise evaluation of the blended primitive and its defect."""

    def __init__(self, context: LivsicContext, f: PhaseFunction,
                 sections: list[_SectionData], floor_out: _SectionData,
                 floor_in: _SectionData):
        self.ctx = context
        self.f = f
        self.sections = sections
        self.floor_out = floor_out
        self.floor_in = floor_in

    def _box_row(self, box: _FlowBox, data: _SectionData, x, y, alpha):
        """u_i on active states of one box: cone extension at the
        closest-approach section, plus the exact arc back.  The section
        value is constant along each transit, so Xu_i = f inside the
        box by construction."""
        r = self.ctx.box_radius
        best_t = np.zeros(x.shape)
        best_d = np.full(x.shape, np.inf)
        for c in box.centers:
            t = _golden_closest(x, y, alpha, c, -1.1 * r, 1.1 * r)
            fx, fy, _ = flow_arrays(x, y, alpha, t)
            d, _, _ = _dist_and_grad(fx, fy, c)
            upd = d < best_d
            best_d[upd] = d[upd]
            best_t[upd] = t[upd]
        sx, sy, sa = flow_arrays(x, y, alpha, best_t)
        ext = data.extension(sx, sy, sa)
        panels = max(2, int(math.ceil(float(np.max(np.abs(best_t)))
                                      / 0.3)))
        back = _flow_integral(self.f, sx, sy, sa, -best_t, panels=panels,
                              order=8)
        return ext + back

    def _hat_rows(self, x, y, alpha):
        """u_out and u_in by the closed-form excursion push: data on
        the floor crossing of the current excursion, exact arc to the
        state.  Near-vertical states take the vertical-ray limit, where
        the generic drift formula loses all its digits."""
        a = self.ctx.surface.chart.a
        sa_raw = np.sin(alpha)
        ca_raw = np.cos(alpha)
        vert = np.abs(ca_raw) < _POLE
        sa = np.clip(sa_raw, -1.0 + 1e-16, 1.0 - 1e-16)
        sphi = np.maximum(np.abs(ca_raw), _POLE)
        apex = y / sphi
        u = np.sign(ca_raw + 1e-300)
        s_now = -np.arctanh(sa)
        ratio = np.maximum(apex / a, 1.0 + 1e-14)
        s_mag = np.arccosh(ratio)
        tau_vert = np.sign(sa_raw) * np.log(np.maximum(y, 1e-300) / a)
        rows = []
        for s_sign, data in ((-1.0, self.floor_out),
                             (1.0, self.floor_in)):
            s_c = s_sign * s_mag
            drift = apex * (np.tanh(s_c) - np.tanh(s_now))
            ex = _wrap_x(x + u * drift)
            ea = np.arctan2(-np.tanh(s_c), u / ratio)
            tau = s_now - s_c
            ex = np.where(vert, _wrap_x(x), ex)
            ea = np.where(vert, alpha, ea)
            tau = np.where(vert, tau_vert, tau)
            ey = np.full(x.shape, a)
            ext = data.extension(ex, ey, ea)
            panels = min(max(2, int(math.ceil(
                float(np.max(np.abs(tau))) / 0.35))), 30)
            arc = _flow_integral(self.f, ex, ey, ea, tau, panels=panels,
                                 order=8)
            rows.append(ext + arc)
        return rows[0], rows[1]

    def evaluate(self, x, y, alpha):
        x, y, alpha = _lift_arrays(self.ctx.surface, x, y, alpha)
        part = self.ctx.partition
        theta, xtheta = part.theta(x, y, alpha)
        k = len(part.boxes)
        u = np.zeros(x.shape)
        h = np.zeros(x.shape)
        for i, (box, data) in enumerate(zip(part.boxes, self.sections)):
            active = theta[i] > 0.0
            if not active.any():
                continue
            row = self._box_row(box, data, x[active], y[active],
                                alpha[active])
            u[active] += theta[i][active] * row
            h[active] -= xtheta[i][active] * row
        hat_active = (theta[k] > 0.0) | (theta[k + 1] > 0.0)
        if hat_active.any():
            u_out, u_in = self._hat_rows(x[hat_active], y[hat_active],
                                         alpha[hat_active])
            u[hat_active] += theta[k][hat_active] * u_out \
                + theta[k + 1][hat_active] * u_in
            h[hat_active] -= xtheta[k][hat_active] * u_out \
                + xtheta[k + 1][hat_active] * u_in
        return u, h


def decompose(f: PhaseFunction, eps: float | None = None,
              surface: CuspedSurface | None = None, *,
              context: LivsicContext | None = None, beta: float = 0.3,
              nu: float = 0.25, delta: float = 0.25,
              trivial_threshold: float = 0.1, word_cap: int = 6,
              fd_step: float = 4e-4, fd_count: int = 50
              ) -> CoboundaryDecomposition:
    """Approximate coboundary decomposition f = Xu + h.

    The input is normalized by its C1 norm internally.  If the averages
    of f over short closed geodesics are not small against the
    threshold, the decomposition is trivial (u = 0, h = f) and flagged.
    Otherwise u blends flow-pushed Holder extensions of the primitive
    along a good orbit; each section carries the smallest cone bound
    its own data admits, so h vanishes identically wherever the orbit
    data is locally constant and concentrates where f actually varies.
    """
    if context is None:
        context = prepare_context(surface,
                                  eps=eps if eps is not None else 0.01,
                                  nu=nu, delta=delta, word_cap=word_cap)
    eps = context.eps
    nu = context.nu
    delta = context.delta
    surface = context.surface
    a = surface.chart.a
    g = context.grids

    if f.focus():
        gx, gy, ga = norm_states(surface, f)
    else:
        gx, gy, ga = context.norm_grid
    f_c1 = phase_c1_norm(f, gx, gy, ga)
    if f_c1 <= 0.0:
        return CoboundaryDecomposition(
            eps, beta, nu, delta, 0.0, 0.0, True,
            "zero input: nothing to decompose", context.orbit)

    fhat = _Scaled(f, 1.0 / f_c1)
    probe_classes = surface.group.hyperbolic_classes(3, 12)
    i_sup = max(abs(flow_average(fhat, surface, cls))
                for cls in probe_classes)

    def weighted_split(values):
        w2 = np.maximum(g["height"], a) ** (1.0 - 2.0 * delta)
        mass = w2 * values ** 2 * g["weight"]
        return (float(np.sum(mass[g["in_meps"]])),
                float(np.sum(mass[~g["in_meps"]])))

    if i_sup > trivial_threshold:
        hv = np.asarray(fhat.value(g["x"], g["y"], g["alpha"]),
                        dtype=float)
        interior, deep = weighted_split(hv)
        return CoboundaryDecomposition(
            eps, beta, nu, delta, f_c1, i_sup, True,
            "transform not small at this scale; returning u = 0, h = f",
            context.orbit,
            h_c0_meps=float(np.max(np.abs(hv[g["in_meps"]]))) * f_c1,
            h_weighted_l2=math.sqrt(interior + deep) * f_c1,
            weighted_interior=interior * f_c1 ** 2,
            weighted_deep=deep * f_c1 ** 2,
            _trivial_f=f)

    orbit = context.orbit
    primitive = primitive_along_orbit(fhat, orbit)
    box_hits = _collect_box_hits(context, primitive, fhat)
    out_hits = _collect_floor_hits(context, primitive, fhat, rising=True)
    in_hits = _collect_floor_hits(context, primitive, fhat, rising=False)
    orbit_seminorm = primitive.holder_seminorm(beta)

    def section_bound(hits):
        return max(_pairwise_ratio(surface, hits[0], hits[1], hits[2],
                                   hits[3], beta) * (1.0 + 1e-9), 1e-9)

    all_hits = [h for h in box_hits + [out_hits, in_hits] if h[0].size]
    if not all_hits:
        raise ValueError("empty hit set: the orbit misses every section "
                         "of the cover")
    union = tuple(np.concatenate([h[i] for h in all_hits])
                  for i in range(4))
    global_bound = max(_pairwise_ratio(surface, *union, beta)
                       * (1.0 + 1e-9), 1e-9)
    global_ext = holder_extend(union[3], union[0], union[1], union[2],
                               surface, beta, global_bound)
    global_data = _SectionData(global_ext, np.empty(0), global_bound,
                               True)

    sections = []
    fallback = 0
    for hits in box_hits:
        if hits[0].size:
            b = section_bound(hits)
            ext = holder_extend(hits[3], hits[0], hits[1], hits[2],
                                surface, beta, b)
            sections.append(_SectionData(ext, hits[4], b, False))
        else:
            fallback += 1
            sections.append(global_data)

    def floor_data(hits):
        nonlocal fallback
        if hits[0].size:
            b = section_bound(hits)
            return _SectionData(holder_extend(hits[3], hits[0], hits[1],
                                              hits[2], surface, beta, b),
                                hits[4], b, False)
        fallback += 1
        return global_data

    asm = _Assembler(context, fhat, sections, floor_data(out_hits),
                     floor_data(in_hits))

    u_grid, h_grid = asm.evaluate(g["x"], g["y"], g["alpha"])
    interior, deep = weighted_split(h_grid)

    theta, _ = context.partition.theta(g["x"], g["y"], g["alpha"])
    part_res = float(np.max(np.abs(np.sum(theta, axis=0) - 1.0)))
    chi, _ = context.partition.profiles(g["x"], g["y"], g["alpha"])
    coverage = float(np.min(np.sum(chi, axis=0)))

    # h on the orbit, away from the cut where a push-back can leave the
    # sampled window and land on the missing strand
    o = orbit
    above = o.y > a
    max_apex = float(np.max(
        o.y[above] / np.maximum(np.abs(np.cos(o.alpha[above])), 1e-3))) \
        if above.any() else a
    margin = max(2.4 * context.box_radius,
                 2.0 * math.acosh(max(max_apex, a) / (0.8 * a)) + 0.3)
    margin = min(margin, 0.42 * o.span)
    sel = np.flatnonzero((o.times > margin) & (o.times < o.span - margin))
    sel = sel[::max(int(0.1 / o.dt), 1)]
    _, h_orb = asm.evaluate(o.x[sel], o.y[sel], o.alpha[sel])
    orbit_sup = float(np.max(np.abs(h_orb))) if sel.size else 0.0

    # along-flow finite-difference check of f = Xu + h
    step = max(g["x"].size // fd_count, 1)
    cx = g["x"][::step]
    cy = g["y"][::step]
    ca = g["alpha"][::step]
    up, _ = asm.evaluate(*flow_arrays(cx, cy, ca, fd_step))
    um, _ = asm.evaluate(*flow_arrays(cx, cy, ca, -fd_step))
    _, h0 = asm.evaluate(cx, cy, ca)
    xu = (up - um) / (2.0 * fd_step)
    res = float(np.max(np.abs(fhat.value(cx, cy, ca) - xu - h0)))

    # Holder quotient of u between neighbouring grid states
    du = np.abs(u_grid[1:] - u_grid[:-1])
    dq = np.abs(g["x"][1:] - g["x"][:-1]) \
        + np.abs(np.log(g["y"][1:] / g["y"][:-1])) \
        + np.abs(angle_wrap(g["alpha"][1:] - g["alpha"][:-1]))
    near = (dq > 1e-6) & (dq < 1.0)
    u_holder = float(np.max(du[near] / dq[near] ** beta)) \
        if near.any() else 0.0

    # circle averages of h up the cusp with a Holder quotient in
    # log-height; reported, not asserted
    tavg = {}
    cusp_sel = g["y"] >= a
    if cusp_sel.any():
        levels = np.unique(np.round(g["y"][cusp_sel], 12))[:8]
        avgs = np.asarray([
            float(np.mean(h_grid[cusp_sel
                                 & (np.abs(g["y"] - yv) < 1e-9)]))
            for yv in levels])
        quot = 0.0
        if levels.size >= 2:
            dl = np.abs(np.log(levels[1:] / levels[:-1]))
            quot = float(np.max(np.abs(np.diff(avgs)) / dl ** beta))
        tavg = {"heights": [float(v) for v in levels],
                "averages": [float(v) for v in avgs],
                "holder_quotient": quot}

    numeric, _ = deep_set_measure(1, delta, nu, eps, a=a)
    used_bound = max([s.bound for s in sections]
                     + [asm.floor_out.bound, asm.floor_in.bound])

    return CoboundaryDecomposition(
        eps, beta, nu, delta, f_c1, i_sup, False,
        "decomposed along orbit " + orbit.word, orbit,
        holder_bound=used_bound,
        orbit_seminorm=orbit_seminorm,
        h_c0_meps=float(np.max(np.abs(h_grid[g["in_meps"]]))) * f_c1,
        h_weighted_l2=math.sqrt(interior + deep) * f_c1,
        weighted_interior=interior * f_c1 ** 2,
        weighted_deep=deep * f_c1 ** 2,
        orbit_sup=orbit_sup * f_c1,
        orbit_checked=int(sel.size),
        residual_fd=res * f_c1,
        partition_residual=part_res,
        coverage_floor=coverage,
        fallback_boxes=fallback,
        box_count=len(context.partition.boxes),
        u_holder_est=u_holder * f_c1,
        theta_average=tavg,
        deep_measure_ratio=deep / numeric if numeric > 0 else math.inf,
        _assembler=asm,
        _scale=f_c1,
    )


@dataclass
class InterpolationReport:
    """Log-log regression of the weighted defect norm against the
    transform sup over a family of decompositions."""

    transform_norms: np.ndarray
    defect_norms: np.ndarray
    slope: float
    rank_correlation: float
    degenerate: bool
    message: str


def interpolation_report(members: list[CoboundaryDecomposition],
                         floor: float = 1e-8) -> InterpolationReport:
    """Regress log defect on log transform over a family sharing a
    scale.  A family of exact coboundaries has nothing to regress and
    is flagged degenerate instead."""
    if len(members) < 5:
        raise ValueError("need at least 5 family members for the "
                         "regression")
    i_vals = np.asarray([m.i_sup * m.f_c1 for m in members])
    h_vals = np.asarray([m.h_weighted_l2 for m in members])
    ref = max(max(m.f_c1 for m in members), 1e-300)
    if float(np.max(h_vals)) < floor * ref:
        return InterpolationReport(i_vals, h_vals, math.nan, math.nan,
                                   True,
                                   "family degenerate, all h below floor")
    if np.unique(np.round(np.log(np.maximum(i_vals, 1e-300)), 9)).size < 5:
        raise ValueError("need at least 5 members with distinct "
                         "transform norms")
    mask = (i_vals > 0) & (h_vals > 0)
    slope = float(np.polyfit(np.log(i_vals[mask]),
                             np.log(h_vals[mask]), 1)[0])
    rho = spearman(i_vals[mask], h_vals[mask])
    return InterpolationReport(i_vals, h_vals, slope, rho, False,
                               f"slope {slope:.3f} over "
                               f"{int(mask.sum())} members")
