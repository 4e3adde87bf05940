"""Symmetric tensor calculus on the hyperbolic chart.

Components are always stored in the orthonormal coframe (dy/y, dtheta/y)
of the chart metric (dy^2 + dtheta^2)/y^2; the chart covers both the
model cusp (theta periodic) and the upper half-plane (theta = Re z).

Two layers coexist:

* `SymTensorField`: a rank-m field given by a batched evaluator; the
  symmetric derivative D = sym(nabla) and the divergence D* = tr(nabla)
  are realized by exact Christoffel algebra plus 4th-order finite
  differences of the components (relative step 1e-4 * y), or by
  user-supplied analytic derivatives.
* `Mode0CuspTensor`: the theta-independent 2-tensor family

      f = a(y) dy^2/y^2 + sum_i b_i(y) (dy dtheta_i + dtheta_i dy)/(2 y^2)
          + sum_ij c_ij(y) dtheta_i dtheta_j / y^2

  on the (d+1)-dimensional model cusp, for which divergence and the
  potential equation reduce to constant-coefficient ODEs in r = log y.

-D* is the formal adjoint of D; `lambda_pm` returns the exact indicial
roots d/2 +- sqrt(d + d^2/4) of the radial Laplacian on 1-forms.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import permutations, product
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

FD_REL_STEP = 1e-4


# ---------------------------------------------------------------------------
# generic fields


@dataclass(frozen=True)
class SymTensorField:
    """Rank-m symmetric tensor field on the (y, theta) chart.

    component_fn(y, theta) -> array of shape broadcast(y, theta) + (2,)*rank,
    components in the orthonormal coframe.  deriv_fn, if given, returns the
    coordinate partials (d/dy, d/dtheta) of those components with shape
    broadcast + (2,) + (2,)*rank.
    """

    rank: int
    component_fn: Callable
    deriv_fn: Callable | None = None
    label: str = ""

    def components(self, y, theta):
        y = np.asarray(y, dtype=float)
        theta = np.asarray(theta, dtype=float)
        out = np.asarray(self.component_fn(y, theta))
        want = np.broadcast(y, theta).shape + (2,) * self.rank
        if out.shape != want:
            raise ValueError(f"evaluator returned shape {out.shape}, "
                             f"expected {want}")
        if self.rank >= 2:
            sym_err = _symmetry_defect(out, self.rank)
            scale = np.max(np.abs(out)) or 1.0
            if sym_err > 1e-10 * scale:
                raise ValueError(f"components not symmetric: defect {sym_err}")
        return out

    def coordinate_partials(self, y, theta):
        """(d/dy, d/dtheta) of the orthonormal components."""
        if self.deriv_fn is not None:
            return np.asarray(self.deriv_fn(y, theta))
        y = np.asarray(y, dtype=float)
        theta = np.asarray(theta, dtype=float)
        h = FD_REL_STEP * y
        out = []
        for axis in range(2):
            acc = 0.0
            for k, w in ((-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0)):
                dy = k * h if axis == 0 else 0.0
                dth = k * h if axis == 1 else 0.0
                acc = acc + w * np.asarray(
                    self.component_fn(y + dy, theta + dth))
            out.append(acc / (12.0 * h)[(...,) + (None,) * self.rank])
        return np.stack(out, axis=y.ndim)


def _symmetry_defect(comp, rank):
    worst = 0.0
    axes0 = tuple(range(comp.ndim - rank))
    for perm in permutations(range(rank)):
        axes = axes0 + tuple(comp.ndim - rank + p for p in perm)
        worst = max(worst, float(np.max(np.abs(comp
                                               - comp.transpose(axes)))))
    return worst


def _symmetrize(comp, rank):
    if rank < 2:
        return comp
    lead = comp.ndim - rank
    acc = np.zeros_like(comp)
    for perm in permutations(range(rank)):
        axes = tuple(range(lead)) + tuple(lead + p for p in perm)
        acc = acc + comp.transpose(axes)
    return acc / math.factorial(rank)


def pullback(fieldlike, y, theta, phi, u=1.0):
    """pi_m^* T at phase points: contract with the unit vector
    (cos phi, u sin phi) in the orthonormal frame, m times."""
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    comp = fieldlike.components(y, theta)
    rank = fieldlike.rank
    shape = np.broadcast(y, theta, phi).shape
    # base point may be scalar while phi is batched
    comp = np.broadcast_to(comp, shape + (2,) * rank)
    if rank == 0:
        return comp
    v = np.empty(shape + (2,))
    v[..., 0] = np.cos(phi)
    v[..., 1] = np.asarray(u) * np.sin(phi)
    out = comp
    for _ in range(rank):
        # contract the last tensor index with v
        pad = v.reshape(shape + (1,) * (out.ndim - len(shape) - 1) + (2,))
        out = np.sum(out * pad, axis=-1)
    return out


def _nabla_coordinate(fieldlike, y, theta):
    """Coordinate components of nabla T, shape (..., 2, (2,)*m).

    Index order: (derivative index k, tensor indices).  Uses the exact
    hyperbolic Christoffels Gamma^0_00 = -1/y, Gamma^0_11 = 1/y,
    Gamma^1_01 = -1/y in (y, theta) coordinates.
    """
    m = fieldlike.rank
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    That = fieldlike.components(y, theta)           # orthonormal
    dThat = fieldlike.coordinate_partials(y, theta)  # (..., k, indices)
    ym = y[(...,) + (None,) * m]
    ykm = y[(...,) + (None,) * (m + 1)]

    # coordinate components and their partials
    T = That / ym ** m
    dT = dThat / ykm ** m
    # d/dy of y^-m factor
    idx_y = (..., 0) + (slice(None),) * m
    dT = dT.copy()
    dT[idx_y] -= m * That / ym ** (m + 1)

    nabla = dT.copy()
    if m == 0:
        return nabla

    # Gamma^l_{k i} corrections (times 1/y): the nonzero entries are
    # G^0_{00} = -1, G^0_{11} = +1, G^1_{01} = G^1_{10} = -1.
    gam = {(0, 0): (0, -1.0), (1, 1): (0, 1.0),
           (0, 1): (1, -1.0), (1, 0): (1, -1.0)}
    lead = y.ndim
    scale = 1.0 / y[(...,) + (None,) * (m - 1)]
    for (k, i), (l, w) in gam.items():
        for j in range(m):
            sel_dst = [slice(None)] * nabla.ndim
            sel_src = [slice(None)] * T.ndim
            sel_dst[lead] = k
            sel_dst[lead + 1 + j] = i
            sel_src[lead + j] = l
            nabla[tuple(sel_dst)] = nabla[tuple(sel_dst)] \
                - (w * scale) * T[tuple(sel_src)]
    return nabla


def symmetric_derivative(fieldlike: SymTensorField) -> SymTensorField:
    """D = sym(nabla): rank m -> m + 1, orthonormal components."""
    m = fieldlike.rank

    def comp(y, theta):
        y = np.asarray(y, dtype=float)
        theta = np.asarray(theta, dtype=float)
        nabla = _nabla_coordinate(fieldlike, y, theta)
        sym = _symmetrize(nabla, m + 1)
        return sym * y[(...,) + (None,) * (m + 1)] ** (m + 1)

    return SymTensorField(m + 1, comp, label=f"D({fieldlike.label})")


def divergence(fieldlike: SymTensorField) -> SymTensorField:
    """D* = tr(nabla): rank m -> m - 1.  -D* is the adjoint of D."""
    m = fieldlike.rank
    if m == 0:
        raise ValueError("divergence needs rank >= 1")

    def comp(y, theta):
        y = np.asarray(y, dtype=float)
        theta = np.asarray(theta, dtype=float)
        nabla = _nabla_coordinate(fieldlike, y, theta)
        # g^{kl} nabla_k T_{l ...} = y^2 sum_k nabla_k T_{k ...}
        lead = y.ndim
        tr = nabla[(...,) + (0, 0) + (slice(None),) * (m - 1)] \
            + nabla[(...,) + (1, 1) + (slice(None),) * (m - 1)]
        return tr * y[(...,) + (None,) * (m - 1)] ** (m + 1)

    return SymTensorField(m - 1, comp, label=f"D*({fieldlike.label})")


def tensor_inner(t1: SymTensorField, t2: SymTensorField, y, theta):
    """Pointwise <T1, T2>: plain contraction of orthonormal components."""
    if t1.rank != t2.rank:
        raise ValueError("ranks differ")
    c1 = t1.components(y, theta)
    c2 = t2.components(y, theta)
    axes = tuple(range(c1.ndim - t1.rank, c1.ndim))
    return np.sum(c1 * c2, axis=axes) if t1.rank else c1 * c2


# ---------------------------------------------------------------------------
# the mode-0 cusp family


@dataclass(frozen=True)
class Mode0CuspTensor:
    """Power-law, theta-independent 2-tensor on the (d+1)-dim model cusp.

    Profiles are a_inf y^rho etc.; rho may be complex.
    """

    d: int
    rho: complex
    a_inf: complex = 0.0
    b_inf: tuple = ()
    c_inf: tuple = ()

    def __post_init__(self):
        b = np.zeros(self.d, dtype=complex)
        b[: len(np.atleast_1d(np.asarray(self.b_inf)))] = np.atleast_1d(
            np.asarray(self.b_inf, dtype=complex))
        c = np.asarray(self.c_inf, dtype=complex)
        if c.size == 0:
            c = np.zeros((self.d, self.d), dtype=complex)
        elif c.ndim == 0:
            c = np.eye(self.d, dtype=complex) * c
        if c.shape != (self.d, self.d) or np.max(np.abs(c - c.T)) > 1e-12 * (
                np.max(np.abs(c)) or 1.0):
            raise ValueError("c_inf must be a symmetric d x d array")
        object.__setattr__(self, "b_inf", tuple(b))
        object.__setattr__(self, "c_inf", tuple(map(tuple, c)))

    @property
    def b_vec(self) -> np.ndarray:
        return np.asarray(self.b_inf, dtype=complex)

    @property
    def c_mat(self) -> np.ndarray:
        return np.asarray(self.c_inf, dtype=complex)

    def pullback(self, y, phi, u):
        """pi_2^* f at (y, ., phi, u); u is a d-vector (or +-1 for d=1)."""
        y = np.asarray(y, dtype=complex)
        phi = np.asarray(phi, dtype=float)
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if u.shape[-1] != self.d:
            raise ValueError(f"u must have {self.d} components")
        cu = np.einsum("ij,...i,...j->...", self.c_mat, u, u)
        bu = np.einsum("i,...i->...", self.b_vec, u)
        return y ** self.rho * (self.a_inf * np.cos(phi) ** 2
                                + np.sin(phi) * np.cos(phi) * bu
                                + np.sin(phi) ** 2 * cu)

    def is_solenoidal(self, tol: float = 1e-10) -> bool:
        alpha, beta = divergence_mode0(self)
        scale = max(abs(self.a_inf), np.max(np.abs(self.b_vec), initial=0.0),
                    np.max(np.abs(self.c_mat), initial=0.0), 1.0)
        return abs(alpha) <= tol * scale and np.all(np.abs(beta) <= tol * scale)


def divergence_mode0(t: Mode0CuspTensor) -> tuple[complex, np.ndarray]:
    """Closed-form D* f of a power-law mode-0 tensor.

    Returns (alpha, beta): D*f = alpha y^rho dy/y + sum_i beta_i y^rho
    dtheta_i/y.
    """
    alpha = t.a_inf * (t.rho - t.d) + np.trace(t.c_mat)
    beta = 0.5 * (t.rho - (t.d + 1)) * t.b_vec
    return alpha, beta


def solenoidal_probe(d: int, rho: complex, a_inf: complex = 1.0
                     ) -> Mode0CuspTensor:
    """The a-dominant solenoidal probe: c = a (d - rho)/d * Id."""
    c = np.eye(d, dtype=complex) * (a_inf * (d - rho) / d)
    return Mode0CuspTensor(d=d, rho=rho, a_inf=a_inf, c_inf=c)


def lambda_pm(d: int) -> tuple[float, float]:
    """Exact indicial roots d/2 -+ sqrt(d + d^2/4) of rho^2 - d rho - d."""
    s = math.sqrt(d + 0.25 * d * d)
    return (0.5 * d - s, 0.5 * d + s)


# ---------------------------------------------------------------------------
# the radial potential equation (solenoidal splitting)


@dataclass(frozen=True)
class Mode0Profiles:
    """Sampled mode-0 profiles on a log-radial grid r = log y."""

    d: int
    r: np.ndarray
    a: np.ndarray
    b: np.ndarray  # shape (n, d)
    c: np.ndarray  # shape (n, d, d)

    def __post_init__(self):
        n = len(self.r)
        if self.a.shape != (n,) or self.b.shape != (n, self.d) \
                or self.c.shape != (n, self.d, self.d):
            raise ValueError("profile shapes inconsistent with grid")


def _banded_second_order(n: int, h: float, lin0: float, lin1: float):
    """Banded matrix of the operator u'' + lin1 u' + lin0 u with 4th-order
    interior stencils and Dirichlet-zero boundaries (two end rows pinned).
    Returns (ab, l_and_u) for scipy.linalg.solve_banded."""
    # diagonals: offsets -2..2
    main = np.full(n, -30.0 / (12 * h * h) + lin0)
    off1 = np.full(n - 1, 16.0 / (12 * h * h))
    off2 = np.full(n - 2, -1.0 / (12 * h * h))
    d1 = np.full(n - 1, 8.0 / (12 * h))
    d2 = np.full(n - 2, -1.0 / (12 * h))
    ab = np.zeros((5, n))
    ab[0, 2:] = off2 + lin1 * d2
    ab[1, 1:] = off1 + lin1 * d1
    ab[2, :] = main
    ab[3, :-1] = off1 - lin1 * d1
    ab[4, :-2] = off2 - lin1 * d2
    # pin the two rows at each end (Dirichlet: u = 0)
    for i in (0, 1, n - 2, n - 1):
        for off, row in ((2, 0), (1, 1), (0, 2), (-1, 3), (-2, 4)):
            j = i + off
            if 0 <= j < n:
                ab[row, j] = 0.0
        ab[2, i] = 1.0
    return ab


def _fd1(v: np.ndarray, h: float) -> np.ndarray:
    """4th-order first derivative with zero-padding outside the grid."""
    vp = np.concatenate([np.zeros(2, dtype=v.dtype), v,
                         np.zeros(2, dtype=v.dtype)])
    return (-vp[4:] + 8 * vp[3:-1] - 8 * vp[1:-3] + vp[:-4]) / (12 * h)


def solenoidal_split_mode0(profiles: Mode0Profiles
                           ) -> tuple[dict, Mode0Profiles, dict]:
    """Split mode-0 profiles as f = Dp + h with h solenoidal.

    Solves the constant-coefficient (in r = log y) potential equations

        P'' - d P' - d P         = (d/dr - d) a + tr c
        Q'' - d Q' - (d+1) Q     = (d/dr - (d+1)) b_i

    with Dirichlet-zero ends, then h = f - Dp.  Returns (potential
    profiles {P, Q}, h profiles, diagnostics).
    """
    d = profiles.d
    r = np.asarray(profiles.r, dtype=float)
    n = len(r)
    h_grid = r[1] - r[0]
    if not np.allclose(np.diff(r), h_grid, rtol=1e-12):
        raise ValueError("r-grid must be uniform")

    trc = np.trace(profiles.c, axis1=1, axis2=2)
    rhs_p = _fd1(profiles.a, h_grid) - d * profiles.a + trc
    ab_p = _banded_second_order(n, h_grid, lin0=-float(d), lin1=-float(d))
    rhs_p = rhs_p.copy()
    rhs_p[[0, 1, n - 2, n - 1]] = 0.0
    P = _solve_banded_complex(ab_p, rhs_p)

    Q = np.zeros((n, d), dtype=complex)
    ab_q = _banded_second_order(n, h_grid, lin0=-float(d + 1), lin1=-float(d))
    for i in range(d):
        rhs_q = _fd1(profiles.b[:, i], h_grid) - (d + 1) * profiles.b[:, i]
        rhs_q[[0, 1, n - 2, n - 1]] = 0.0
        Q[:, i] = _solve_banded_complex(ab_q, rhs_q)

    # Dp profiles: a = P', b_i = Q_i' + Q_i, c = -P Id
    a_dp = _fd1(P, h_grid)
    b_dp = np.stack([_fd1(Q[:, i], h_grid) + Q[:, i] for i in range(d)],
                    axis=1)
    c_dp = -P[:, None, None] * np.eye(d)[None, :, :]

    h_prof = Mode0Profiles(d=d, r=r, a=profiles.a - a_dp,
                           b=profiles.b - b_dp, c=profiles.c - c_dp)

    # solenoidality diagnostic of h: alpha = (d/dr - d) a_h + tr c_h
    alpha_h = _fd1(h_prof.a, h_grid) - d * h_prof.a \
        + np.trace(h_prof.c, axis1=1, axis2=2)
    beta_h = 0.5 * (np.stack([_fd1(h_prof.b[:, i], h_grid)
                              for i in range(d)], axis=1)
                    - (d + 1) * h_prof.b)
    interior = slice(2, n - 2)
    diag = {
        "alpha_residual": float(np.max(np.abs(alpha_h[interior]))),
        "beta_residual": float(np.max(np.abs(beta_h[interior]))) if d else 0.0,
    }
    return {"P": P, "Q": Q}, h_prof, diag


def _solve_banded_complex(ab, rhs):
    if np.iscomplexobj(rhs):
        re = solve_banded((2, 2), ab, rhs.real)
        im = solve_banded((2, 2), ab, rhs.imag)
        return re + 1j * im
    return solve_banded((2, 2), ab, rhs.astype(float)).astype(complex)


# ---------------------------------------------------------------------------
# profile CSV round trip


def write_profiles(path, profiles: Mode0Profiles) -> None:
    d = profiles.d
    header = ["r", "a_re", "a_im"]
    header += [f"b{i}_re" for i in range(d)] + [f"b{i}_im" for i in range(d)]
    header += [f"c{i}{j}_re" for i in range(d) for j in range(d)]
    header += [f"c{i}{j}_im" for i in range(d) for j in range(d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(len(profiles.r)):
            row = [profiles.r[k], profiles.a[k].real, profiles.a[k].imag]
            row += [profiles.b[k, i].real for i in range(d)]
            row += [profiles.b[k, i].imag for i in range(d)]
            row += [profiles.c[k, i, j].real
                    for i in range(d) for j in range(d)]
            row += [profiles.c[k, i, j].imag
                    for i in range(d) for j in range(d)]
            w.writerow([f"{v:.17g}" for v in row])


def read_profiles(path, d: int) -> Mode0Profiles:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        for row in reader:
            rows.append([float(tok) for tok in row])
    arr = np.asarray(rows)
    n = len(arr)
    r = arr[:, 0]
    a = arr[:, 1] + 1j * arr[:, 2]
    off = 3
    b = arr[:, off:off + d] + 1j * arr[:, off + d:off + 2 * d]
    off += 2 * d
    c_re = arr[:, off:off + d * d].reshape(n, d, d)
    c_im = arr[:, off + d * d:off + 2 * d * d].reshape(n, d, d)
    return Mode0Profiles(d=d, r=r, a=a, b=b, c=c_re + 1j * c_im)
