"""Indicial quadratic forms of the averaged pullback operator on the
model cusp.

Everything here concerns theta-independent (mode-0) power-law tensors
a y^rho dy^2/y^2 + c_ij y^rho dtheta_i dtheta_j/y^2 on the
(d+1)-dimensional cusp.  Averaging the degree-2 pullback along the flow
and pairing against the pullback itself collapses, after the
substitution sin(phi_t) = sech(t), to products of

    H(rho) = integral over R of sin(phi_t)^rho dt
           = sqrt(pi) Gamma(rho/2) / Gamma((rho+1)/2),

and the pairing itself has the closed form (per unit volume of the
horizontal sphere)

    H(rho) H(d-rho) / ((rho+1)(d+1-rho)) * bracket(d, rho, a, c)

valid whenever the probe satisfies the solenoidal trace constraint
tr c = (d - rho) a.  `pi2_indicial_direct` reassembles the same pairing
by honest quadrature (flow integral via H-quadratures, sphere integral
via product rules) and is the cross-check of record for the closed
form.

Conventions: the L2 pairing conjugates the coefficients (a, c) of the
second slot only, so values are sesquilinear in the probe and
real-positive on the critical line Re rho = d/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cusp import PhasePoint
from .gammafn import gamma
from .quadrature import gauss_legendre, integrate_sech_decay
from .tensors import Mode0CuspTensor, solenoidal_probe

_SQRT_PI = math.sqrt(math.pi)
_LOG2 = math.log(2.0)


def _log_cosh(t):
    """log cosh t without overflow for |t| beyond the exp range."""
    at = np.abs(t)
    return at + np.log1p(np.exp(-2.0 * at)) - _LOG2


def sphere_volume(k: int) -> float:
    """Volume of the unit sphere S^k in R^(k+1)."""
    return float(2.0 * math.pi ** ((k + 1) / 2.0)
                 / gamma((k + 1) / 2.0).real)


# ---------------------------------------------------------------------------
# the H function


def h_closed(rho) -> complex:
    """H(rho) = sqrt(pi) Gamma(rho/2)/Gamma((rho+1)/2), Re rho > 0."""
    rho = complex(rho)
    if rho.real <= 0.0:
        raise ValueError("H(rho) requires Re rho > 0")
    return _SQRT_PI * gamma(0.5 * rho) / gamma(0.5 * (rho + 1.0))


def h_quadrature(rho, phi0: float = 0.5 * math.pi) -> complex:
    """H(rho) by quadrature of sin(phi_t)^rho along the model flow.

    The flow started at angle phi0 has sin(phi_t) = sech(t + s0) with
    s0 = log tan(phi0/2); the integral does not depend on phi0.
    """
    rho = complex(rho)
    if rho.real <= 0.0:
        raise ValueError("H(rho) requires Re rho > 0")
    s0 = math.log(math.tan(0.5 * phi0))

    def integrand(t):
        # sin(phi_t)^rho with a positive real base: no branch issues
        return np.exp(-rho * _log_cosh(t + s0))

    return complex(integrate_sech_decay(integrand, decay=rho.real,
                                        osc=abs(rho.imag)))


def h_identity_residual(rho) -> complex:
    """Residual of the contiguous identity H(rho) - H(rho+2) =
    H(rho)/(rho+1), evaluated with the closed form."""
    rho = complex(rho)
    return h_closed(rho) - h_closed(rho + 2.0) - h_closed(rho) / (rho + 1.0)


# ---------------------------------------------------------------------------
# sphere quadrature for the direct route


def _sphere_rule(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes (N, d) and weights summing to vol(S^{d-1}).

    Product rules exact for the degree-4 polynomials appearing in the
    pairing: the two points for d = 1, equispaced angles for d = 2, and
    Gauss-Legendre in the polar cosine times equispaced azimuth for
    d = 3.
    """
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d == 2:
        n = 16
        ang = 2.0 * math.pi * np.arange(n) / n
        nodes = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        return nodes, np.full(n, 2.0 * math.pi / n)
    if d == 3:
        npol, naz = 8, 16
        x, w = gauss_legendre(npol)
        ang = 2.0 * math.pi * np.arange(naz) / naz
        sin_pol = np.sqrt(1.0 - x ** 2)
        nodes = np.stack([
            np.repeat(sin_pol, naz) * np.tile(np.cos(ang), npol),
            np.repeat(sin_pol, naz) * np.tile(np.sin(ang), npol),
            np.repeat(x, naz),
        ], axis=1)
        weights = np.repeat(w, naz) * (2.0 * math.pi / naz)
        return nodes, weights
    raise ValueError("sphere rules implemented for d in {1, 2, 3}")


# ---------------------------------------------------------------------------
# the degree-2 indicial pairing


def _require_constraint(t: Mode0CuspTensor, rho: complex):
    defect = t.a_inf * (rho - t.d) + np.trace(t.c_mat)
    scale = max(abs(t.a_inf), float(np.max(np.abs(t.c_mat), initial=0.0)), 1.0)
    if abs(defect) > 1e-9 * scale:
        raise ValueError("probe violates the solenoidal trace constraint "
                         f"tr c = (d - rho) a ({defect=})")
    if np.max(np.abs(t.b_vec), initial=0.0) > 1e-12 * scale:
        raise ValueError("degree-2 indicial pairing expects b = 0")


def pi2_bracket(d: int, rho, a_inf, c_mat) -> complex:
    """The coefficient bracket of the degree-2 pairing."""
    rho = complex(rho)
    a2 = abs(a_inf) ** 2
    dr = d - rho
    tr_c2 = float(np.sum(np.abs(np.asarray(c_mat)) ** 2))
    return (a2 * (1.0 + abs(dr) ** 2 / d + rho * dr / d
                  + abs(dr) ** 2 * rho * dr / (d * (d + 2)))
            + 2.0 * tr_c2 * rho * dr / (d * (d + 2)))


def pi2_indicial_form(t: Mode0CuspTensor) -> complex:
    """Closed-form value of the degree-2 indicial pairing at probe t.

    (1/vol S^{d-1}) < y^-rho Pi pi_2^* t, y^-rho pi_2^* t >_{L^2(S^d)}
      = H(rho) H(d-rho) / ((rho+1)(d+1-rho)) * bracket.
    """
    rho = complex(t.rho)
    d = t.d
    _require_constraint(t, rho)
    if not (0.0 < rho.real < d):
        raise ValueError("rho must lie in the strip 0 < Re rho < d")
    pref = (math.pi / ((rho + 1.0) * (d + 1.0 - rho))
            * gamma(0.5 * rho) * gamma(0.5 * (d - rho))
            / (gamma(0.5 * (rho + 1.0)) * gamma(0.5 * (d + 1.0 - rho))))
    return pref * pi2_bracket(d, rho, t.a_inf, t.c_mat)


def pi2_indicial_direct(t: Mode0CuspTensor) -> complex:
    """The same pairing assembled by quadrature, independent of the
    Gamma closed form.

    The flow average is built from H-quadratures; the sphere integral
    uses the substitution sin(phi) = sech(tau) (exact on the measure)
    and a product rule in the horizontal direction u.  Coefficients of
    the second slot are conjugated, the leading sin^-rho is not.
    """
    rho = complex(t.rho)
    d = t.d
    _require_constraint(t, rho)
    if not (0.0 < rho.real < d):
        raise ValueError("rho must lie in the strip 0 < Re rho < d")
    h_rho = h_quadrature(rho)
    h_rho2 = h_quadrature(rho + 2.0)
    hc = h_rho - h_rho2          # weight of the cos^2 part of the average
    hs = h_rho2                  # weight of the sin^2 part

    nodes, weights = _sphere_rule(d)
    cu = np.einsum("ij,ni,nj->n", t.c_mat, nodes, nodes)
    cu_bar = np.einsum("ij,ni,nj->n", np.conjugate(t.c_mat), nodes, nodes)
    a = t.a_inf
    a_bar = np.conjugate(a)

    # the flow average at fixed u is (a hc + hs c(u,u)) sin^rho, so each
    # u-node contributes one tau-integral against the conjugated slot
    total = 0.0 + 0.0j
    for k in range(len(nodes)):
        def f_k(tau, k=k):
            lc = _log_cosh(tau)
            sech2 = np.exp(-2.0 * lc)
            tanh2 = np.tanh(tau) ** 2
            base = np.exp(-(d - rho) * lc)
            return base * (a * hc + hs * cu[k]) \
                * (a_bar * tanh2 + sech2 * cu_bar[k])
        total += weights[k] * integrate_sech_decay(
            f_k, decay=d - rho.real, osc=abs(rho.imag))
    return complex(total / sphere_volume(d - 1))


def pi0_indicial(d: int, rho, a_inf=1.0) -> complex:
    """Degree-0 analogue of the pairing: a power-law function a y^rho
    averaged along the flow and paired against itself gives
    |a|^2 H(rho) H(d - rho)."""
    rho = complex(rho)
    if not (0.0 < rho.real < d):
        raise ValueError("rho must lie in the strip 0 < Re rho < d")
    return abs(a_inf) ** 2 * h_closed(rho) * h_closed(d - rho)


# ---------------------------------------------------------------------------
# strip scans


def default_probes(d: int, rho) -> list[Mode0CuspTensor]:
    """Probe family spanning the solenoidal mode-0 tensors at rho: the
    a-dominant probe plus, for d >= 2, trace-free c directions."""
    probes = [solenoidal_probe(d, rho)]
    if d >= 2:
        diag = np.zeros((d, d), dtype=complex)
        diag[0, 0], diag[1, 1] = 1.0, -1.0
        probes.append(Mode0CuspTensor(d, rho, 0.0, (0.0,) * d, diag))
        off = np.zeros((d, d), dtype=complex)
        off[0, 1] = off[1, 0] = 1.0
        probes.append(Mode0CuspTensor(d, rho, 0.0, (0.0,) * d, off))
    return probes


@dataclass(frozen=True)
class StripScan:
    """Minimum modulus of an indicial pairing over a strip grid."""
    d: int
    degree: int
    re_grid: np.ndarray
    im_grid: np.ndarray
    min_abs: float
    argmin: complex
    values: np.ndarray  # (n_re, n_im) min over probes of |value|


def scan_pi2(d: int, re_lo: float, re_hi: float, im_max: float,
             n_re: int = 21, n_im: int = 21) -> StripScan:
    """Scan min over the probe family of |degree-2 pairing| on a grid in
    the substrip [re_lo, re_hi] x [0, im_max] (values are conjugation
    symmetric in Im rho, so the upper half suffices)."""
    re_grid = np.linspace(re_lo, re_hi, n_re)
    im_grid = np.linspace(0.0, im_max, n_im)
    vals = np.empty((n_re, n_im))
    best = (math.inf, 0.0 + 0.0j)
    for i, x in enumerate(re_grid):
        for j, y in enumerate(im_grid):
            rho = complex(x, y)
            m = min(abs(pi2_indicial_form(p)) for p in default_probes(d, rho))
            vals[i, j] = m
            if m < best[0]:
                best = (m, rho)
    return StripScan(d, 2, re_grid, im_grid, best[0], best[1], vals)


def scan_pi0(d: int, re_lo: float, re_hi: float, im_max: float,
             n_re: int = 21, n_im: int = 21) -> StripScan:
    """Same scan for the degree-0 pairing with a = 1."""
    re_grid = np.linspace(re_lo, re_hi, n_re)
    im_grid = np.linspace(0.0, im_max, n_im)
    vals = np.empty((n_re, n_im))
    best = (math.inf, 0.0 + 0.0j)
    for i, x in enumerate(re_grid):
        for j, y in enumerate(im_grid):
            rho = complex(x, y)
            m = abs(pi0_indicial(d, rho))
            vals[i, j] = m
            if m < best[0]:
                best = (m, rho)
    return StripScan(d, 0, re_grid, im_grid, best[0], best[1], vals)


def critical_line_values(d: int, lam_max: float, n: int = 41,
                         degree: int = 2) -> np.ndarray:
    """Pairing values along rho = d/2 + i lambda; self-adjointness makes
    them real, and the conjugate-pair structure of the Gamma arguments
    makes the computed imaginary parts vanish to roundoff."""
    lams = np.linspace(0.0, lam_max, n)
    out = np.empty(n, dtype=complex)
    for j, lam in enumerate(lams):
        rho = complex(0.5 * d, lam)
        if degree == 2:
            out[j] = pi2_indicial_form(solenoidal_probe(d, rho))
        else:
            out[j] = pi0_indicial(d, rho)
    return out


# ---------------------------------------------------------------------------
# the boundary symbol constant


def wallis(n: int) -> float:
    """W(n) = integral of sin^n over [0, pi] by the two-term recursion."""
    if n < 0:
        raise ValueError("wallis() needs n >= 0")
    w0, w1 = math.pi, 2.0
    if n == 0:
        return w0
    if n == 1:
        return w1
    w = w0 if n % 2 == 0 else w1
    for k in range(2 + (n % 2), n + 1, 2):
        w *= (k - 1) / k
    return w


def symbol_constant(d: int) -> tuple[float, float]:
    """(B_d, 2 pi / B_d) with B_d = integral of sin^(d+3) over [0, pi],
    the normalizing constant of the boundary pairing symbol."""
    b = wallis(d + 3)
    return b, 2.0 * math.pi / b


def symbol_constant_quadrature(d: int, order: int = 64) -> float:
    """B_d by Gauss-Legendre, the cross-check for the recursion."""
    x, w = gauss_legendre(order)
    phi = 0.5 * math.pi * (x + 1.0)
    return float(0.5 * math.pi * np.sum(w * np.sin(phi) ** (d + 3)))
