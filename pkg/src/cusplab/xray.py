"""Averaged tensor transforms along closed geodesics.

The transform of a rank-m field is its m-fold contraction with the unit
tangent, averaged over a closed geodesic with respect to arc length.
Orbits come from the geodesic solver as polygonal data (vertices, exact
segment velocities); on the background metric every segment is a true
geodesic arc, so quadrature states along it are generated by the exact
frame flow rather than by re-integration.

Also here: the length-variation ladder that compares perturbed lengths
against the transform of the perturbation (the slope is measured, not
assumed), potential tensors Dp built from one-forms via the frame
connection, and a norm-comparison probe for families of fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .geodesics import ClosedGeodesic, closed_geodesic
from .halfplane import flow_arrays
from .metrics import (_OMEGA, PerturbationField, PerturbedMetric, _bump,
                      _bump_ds, _dist_and_grad, frame_c1_norm,
                      hyperbolic_metric)
from .mobius import MobiusMap
from .quadrature import gauss_legendre, spearman


@dataclass(frozen=True)
class XrayValue:
    """Length-normalized orbit average with a refinement error estimate."""

    word: str
    value: float
    error: float


def _orbit_samples(geod: ClosedGeodesic, order: int):
    """Quadrature states (x, y, angle) and arc-length weights, flattened
    over a composite Gauss-Legendre rule with `order` nodes per segment."""
    nodes, wts = gauss_legendre(order)
    d = geod.segment_lengths[:, None]
    t = 0.5 * d * (nodes[None, :] + 1.0)
    alpha0 = np.arctan2(geod.v_starts[:, 1], geod.v_starts[:, 0])
    x, y, alpha = flow_arrays(geod.vertices[:, 0, None],
                              geod.vertices[:, 1, None],
                              alpha0[:, None], t)
    w = 0.5 * d * wts[None, :]
    return x.ravel(), y.ravel(), alpha.ravel(), w.ravel()


def _orbit_average(field, geod: ClosedGeodesic, order: int) -> float:
    x, y, alpha, w = _orbit_samples(geod, order)
    comp = np.asarray(field.components(x, y))
    tang = np.stack([np.cos(alpha), np.sin(alpha)], axis=-1)
    while comp.ndim > 1:
        idx = (slice(None),) + (None,) * (comp.ndim - 2) + (slice(None),)
        comp = np.sum(comp * tang[idx], axis=-1)
    return float(np.sum(comp * w) / np.sum(w))


def xray_transform(field, geod: ClosedGeodesic, order: int = 8) -> XrayValue:
    """Average the field's tangential contraction over a closed geodesic.

    The field reports orthonormal-frame components; the rank is read off
    the trailing shape.  Each polygon segment carries a Gauss-Legendre
    rule with `order` nodes, and the value is recomputed at double order
    so the error field is an actual refinement difference, not a guess.
    """
    coarse = _orbit_average(field, geod, order)
    fine = _orbit_average(field, geod, 2 * order)
    return XrayValue(word=geod.word, value=fine, error=abs(fine - coarse))


# ---------------------------------------------------------------------------
# one-forms and their potential tensors


@dataclass(frozen=True)
class BumpOneForm:
    """Constant frame coefficients times a compactly supported radial
    bump about `center`; partials are analytic, like the metric bumps."""

    center: complex
    radius: float
    coeffs: tuple[float, float] = (1.0, 0.0)

    def components(self, x, y):
        d, _, _ = _dist_and_grad(x, y, self.center)
        prof = _bump(d / self.radius)
        return prof[..., None] * np.asarray(self.coeffs)

    def partials(self, x, y):
        """(d/dx, d/dy) of components, stacked on axis -2."""
        d, ddx, ddy = _dist_and_grad(x, y, self.center)
        dprof = _bump_ds(d / self.radius) / self.radius
        grad = np.stack([dprof * ddx, dprof * ddy], axis=-1)
        return grad[..., :, None] * np.asarray(self.coeffs)


@dataclass(frozen=True)
class PotentialTensor(PerturbationField):
    """Symmetrized covariant derivative of a one-form.

    Components are (Dp)_{ab} = ((nabla_a p)_b + (nabla_b p)_a) / 2 in the
    orthonormal frame, with the same connection coefficients the norm
    helpers use.  Tangential averages of Dp over closed geodesics
    telescope to boundary terms of p, so they vanish whenever the orbit
    stays outside the support of p near its basepoint.
    """

    one_form: object

    def components(self, x, y):
        y = np.asarray(y, dtype=float)
        pc = np.asarray(self.one_form.components(x, y))
        pd = np.asarray(self.one_form.partials(x, y))
        nab = y[..., None, None] * pd
        nab -= np.einsum("aeb,...e->...ab", _OMEGA, pc)
        return 0.5 * (nab + np.swapaxes(nab, -1, -2))


def one_form_c1_norm(p, xs, ys) -> float:
    """sup |p| + sup |nabla p| over the samples, frame norms."""
    pc = np.asarray(p.components(xs, ys))
    pd = np.asarray(p.partials(xs, ys))
    y = np.asarray(ys, dtype=float)
    nab = y[..., None, None] * pd
    nab -= np.einsum("aeb,...e->...ab", _OMEGA, pc)
    sup0 = float(np.max(np.sqrt(np.sum(pc ** 2, axis=-1)), initial=0.0))
    sup1 = float(np.max(np.sqrt(np.sum(nab ** 2, axis=(-2, -1))),
                        initial=0.0))
    return sup0 + sup1


def solenoidal_defect(field, xs, ys) -> float:
    """max |D* f| over the samples, where (D* f)_c = -(nabla_a f)_{ac}."""
    comp = np.asarray(field.components(xs, ys))
    part = np.asarray(field.partials(xs, ys))
    y = np.asarray(ys, dtype=float)
    cov = y[..., None, None, None] * part
    cov -= np.einsum("aeb,...ec->...abc", _OMEGA, comp)
    cov -= np.einsum("aec,...be->...abc", _OMEGA, comp)
    div = -np.einsum("...aac->...c", cov)
    return float(np.max(np.sqrt(np.sum(div ** 2, axis=-1)), initial=0.0))


# ---------------------------------------------------------------------------
# length variation against the transform


@dataclass(frozen=True)
class VariationReport:
    """Perturbed-length ladder fitted against the orbit average.

    ratios holds L_eps / L_0 - 1; first_order and second_order are the
    coefficients of the [eps, eps^2] least-squares fit; kappa is the
    measured ratio first_order / I_2 f (nan when the transform vanishes
    and the ratio is meaningless); remainders subtract only the linear
    term, so their log-log slope should sit near 2 for a smooth family.
    """

    epsilons: np.ndarray
    ratios: np.ndarray
    i2_value: float
    first_order: float
    second_order: float
    kappa: float
    remainders: np.ndarray
    remainder_slope: float


def variation_check(field, gamma: MobiusMap, epsilons, n: int | None = None,
                    n_steps: int = 8, **opts) -> VariationReport:
    """Solve the class at each epsilon and fit the length response.

    The background solve fixes the orbit and I_2 of the field along it;
    each ladder point re-solves with metric (I + eps F) / y^2.  No slope
    is assumed anywhere: the linear coefficient comes from the fit and
    kappa is reported as a measurement.
    """
    eps = np.asarray(list(epsilons), dtype=float)
    if eps.size < 3:
        raise ValueError("ladder needs >= 3 points to separate the slope "
                         "from the curvature")
    base = closed_geodesic(hyperbolic_metric(), gamma, n=n, n_steps=n_steps,
                           **opts)
    i2 = xray_transform(field, base).value
    ratios = np.empty_like(eps)
    for k, e in enumerate(eps):
        pert = closed_geodesic(PerturbedMetric(field, float(e)), gamma,
                               n=n, n_steps=n_steps, **opts)
        ratios[k] = pert.length / base.length - 1.0
    design = np.column_stack([eps, eps * eps])
    (b1, b2), *_ = np.linalg.lstsq(design, ratios, rcond=None)
    kappa = b1 / i2 if abs(i2) > 1e-9 else math.nan
    remainders = ratios - b1 * eps
    mask = np.abs(remainders) > 1e-15
    if np.count_nonzero(mask) >= 2:
        slope = float(np.polyfit(np.log(eps[mask]),
                                 np.log(np.abs(remainders[mask])), 1)[0])
    else:
        slope = math.nan
    return VariationReport(epsilons=eps, ratios=ratios, i2_value=i2,
                           first_order=float(b1), second_order=float(b2),
                           kappa=kappa, remainders=remainders,
                           remainder_slope=slope)


# ---------------------------------------------------------------------------
# norm comparison across a family


def chart_window_grid(window=(-1.0, 3.0, 0.05, 3.0), shape=(96, 96)):
    """Sampling grid on a chart rectangle, returned as broadcast arrays."""
    x0, x1, y0, y1 = window
    xs = np.linspace(x0, x1, shape[0])
    ys = np.linspace(y0, y1, shape[1])
    return np.meshgrid(xs, ys, indexing="ij")


def mollified_l2_norm(window=(-1.0, 3.0, 0.05, 3.0), shape=(96, 96),
                      width: float = 4.0):
    """Weak-norm proxy: mollify the frame components on a fixed chart
    grid and take L^2 against the hyperbolic area element.

    Smoothing happens in grid units (`width` cells), so the proxy damps
    oscillation without chasing an exact function-space dual norm; all
    that the probe needs is a scale that drops under averaging.
    """
    X, Y = chart_window_grid(window, shape)
    dx = X[1, 0] - X[0, 0]
    dy = Y[0, 1] - Y[0, 0]

    def norm(field) -> float:
        comp = np.asarray(field.components(X, Y))
        sigma = (width, width) + (0.0,) * (comp.ndim - 2)
        smooth = gaussian_filter(comp, sigma=sigma, mode="nearest")
        dens = np.sum(smooth ** 2, axis=tuple(range(2, comp.ndim)))
        return float(math.sqrt(np.sum(dens / Y ** 2) * dx * dy))

    return norm


def frame_c1_on_grid(window=(-1.0, 3.0, 0.05, 3.0), shape=(96, 96)):
    X, Y = chart_window_grid(window, shape)
    return lambda field: frame_c1_norm(field, X, Y)


@dataclass(frozen=True)
class StabilityReport:
    """Norm columns and their comparison for a family of fields.

    theta_hat is the log-log regression slope of the weak norm against
    the largest transform magnitude; rank_corr is the Spearman
    correlation between the weak norm and the interpolation-shaped
    combination i2_sup^theta * c1^(1-theta).
    """

    weak: np.ndarray
    i2_sup: np.ndarray
    c1: np.ndarray
    theta_hat: float
    rank_corr: float


def stability_probe(family, geods, weak_norm, c1_norm=None) -> StabilityReport:
    """Compare a weak norm against transform data over a family.

    For each field the probe records the weak norm, the sup of |I_2 f|
    over the supplied closed geodesics, and a C^1-type strong norm.  A
    rigidity-type bound would dominate the weak norm by a power of the
    transform sup times a power of the strong norm; theta_hat measures
    that power and rank_corr checks the monotone association without
    fixing constants.
    """
    fields = list(family)
    if len(fields) < 5:
        raise ValueError("family too small: need >= 5 members for a "
                         "meaningful regression")
    if c1_norm is None:
        c1_norm = frame_c1_on_grid()
    weak = np.array([weak_norm(f) for f in fields])
    i2_sup = np.array([max(abs(xray_transform(f, g).value) for g in geods)
                       for f in fields])
    c1 = np.array([c1_norm(f) for f in fields])
    mask = (weak > 0.0) & (i2_sup > 0.0)
    if np.count_nonzero(mask) >= 2:
        theta = float(np.polyfit(np.log(i2_sup[mask]),
                                 np.log(weak[mask]), 1)[0])
    else:
        theta = math.nan
    if math.isfinite(theta):
        combo = i2_sup ** theta * c1 ** (1.0 - theta)
        rho = spearman(weak, combo)
    else:
        rho = math.nan
    return StabilityReport(weak=weak, i2_sup=i2_sup, c1=c1,
                           theta_hat=theta, rank_corr=rho)
