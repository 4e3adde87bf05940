"""Closed geodesics of perturbed metrics as critical loops.

A homotopy class with hyperbolic holonomy gamma is represented by a
discrete loop x_0 .. x_{n-1} in the plane with closure x_n = gamma x_0,
and the energy E = (n/2) sum_i d(x_i, x_{i+1})^2 uses exact two-point
distances from the shooting solver.  At a critical point the segment
velocities match across every vertex, closure included, so the vertices
lie on the closed geodesic of the quotient cylinder and the length is
the plain sum of segment lengths; the vertex count affects conditioning
of the solve, not the accuracy of the answer.

The loop energy is exactly invariant under sliding all vertices along
the loop, so the Hessian carries one null direction; Newton steps clamp
the spectrum away from zero and the positivity certificate deflates
that mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .groups import GroupPresentation
from .mobius import Axis, MobiusMap, axis as axis_of, classify, trace_length
from .metrics import PerturbedMetric, gauss_curvature
from .shooting import ShootingError, connect, integrate_geodesic
from .words import HomotopyClass

GRAD_TOL = 1e-9
MAX_ITER = 500


def _closure_jacobian(gamma: MobiusMap, z: complex) -> np.ndarray:
    """Real 2x2 Jacobian of gamma at z (conformal: rotation * scale)."""
    d = gamma.derivative(z)
    return np.array([[d.real, -d.imag], [d.imag, d.real]])


def _closure_curvature(gamma: MobiusMap, z: complex,
                       mom: np.ndarray) -> np.ndarray:
    """sum_k mom_k Hess(gamma_k) at z, written out from gamma''.

    Real Hessians of the components of a holomorphic map are the two
    harmonic-conjugate patterns built from the second derivative.
    """
    s = complex(gamma.second_derivative(z))
    hu = np.array([[s.real, -s.imag], [-s.imag, -s.real]])
    hv = np.array([[s.imag, s.real], [s.real, -s.imag]])
    return mom[0] * hu + mom[1] * hv


def default_vertex_count(ell: float) -> int:
    return max(64, int(math.ceil(20.0 * ell)))


def initial_loop(gamma: MobiusMap, n: int) -> np.ndarray:
    """Vertices on the unperturbed axis, equally spaced in arclength."""
    ax = axis_of(gamma)
    ell = ax.length
    pts = np.empty((n, 2))
    for i in range(n):
        z = ax.point(i * ell / n)
        pts[i] = (z.real, z.imag)
    return pts


def _loop_segments(vertices: np.ndarray, gamma: MobiusMap
                   ) -> tuple[np.ndarray, np.ndarray]:
    z0 = vertices
    z1 = np.roll(vertices, -1, axis=0).copy()
    w = gamma(complex(vertices[0, 0], vertices[0, 1]))
    z1[-1] = (w.real, w.imag)
    return z0, z1


def _energy_gradient(metric: PerturbedMetric, vertices: np.ndarray,
                     gamma: MobiusMap, v_warm, n_steps: int,
                     tol: float = 1e-12):
    """E, dE/dvertices, connection (for warm starts)."""
    n = len(vertices)
    z0, z1 = _loop_segments(vertices, gamma)
    con = connect(metric, z0, z1, v_guess=v_warm, n_steps=n_steps, tol=tol)
    energy = 0.5 * n * float(np.sum(con.lengths ** 2))

    g_start = metric.matrix(z0[:, 0], z0[:, 1])
    g_end = metric.matrix(z1[:, 0], z1[:, 1])
    mom_start = np.einsum("kij,kj->ki", g_start, con.v_start)
    mom_end = np.einsum("kij,kj->ki", g_end, con.v_end)

    grad = np.zeros_like(vertices)
    grad += -n * mom_start                      # segment i leaves x_i
    grad[1:] += n * mom_end[:-1]                # segment i-1 arrives at x_i
    jac = _closure_jacobian(gamma, complex(vertices[0, 0], vertices[0, 1]))
    grad[0] += n * jac.T @ mom_end[-1]          # closure through gamma
    return energy, grad, con


def _scaled_grad_norm(vertices: np.ndarray, grad: np.ndarray) -> float:
    # momentum covectors scale like 1/y^2; y^2 |grad| is O(velocity)
    return float(np.max(np.abs(grad) * vertices[:, 1:2] ** 2))


def _clamped_eig(hess: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition with the spectrum clamped away from zero.

    Away from the minimum the sliding mode dips negative and a raw
    Newton step points uphill along it; reflecting and flooring the
    eigenvalues keeps every step a descent direction.
    """
    w, q = np.linalg.eigh(hess)
    floor = 1e-9 * float(np.max(np.abs(w)))
    return np.maximum(np.abs(w), floor), q


def _hessian(metric: PerturbedMetric, vertices: np.ndarray,
             gamma: MobiusMap, v_warm, n_steps: int,
             fd_step: float = 1e-6) -> np.ndarray:
    """Loop Hessian from per-segment 4x4 blocks, differenced on the
    segment gradients; all segments perturbed in one batched solve."""
    n = len(vertices)
    z0, z1 = _loop_segments(vertices, gamma)
    jac0 = _closure_jacobian(gamma, complex(vertices[0, 0], vertices[0, 1]))

    steps = fd_step * np.maximum(vertices[:, 1], 0.1)
    z0_all = np.empty((8, n, 2))
    z1_all = np.empty((8, n, 2))
    for col in range(4):
        for s, sign in enumerate((1.0, -1.0)):
            dz0 = np.zeros_like(z0)
            dz1 = np.zeros_like(z1)
            if col < 2:
                dz0[:, col] = sign * steps
            else:
                dz1[:, col - 2] = sign * steps
            z0_all[2 * col + s] = z0 + dz0
            z1_all[2 * col + s] = z1 + dz1

    # one batched solve for all eight one-sided perturbations; the
    # differenced gradients tolerate a looser endpoint target than the
    # certificate solves, and demanding 1e-12 here can stall a row at
    # the shooting noise floor
    z0f = z0_all.reshape(-1, 2)
    z1f = z1_all.reshape(-1, 2)
    warm = None if v_warm is None else np.tile(v_warm, (8, 1))
    con = connect(metric, z0f, z1f, v_guess=warm, n_steps=n_steps, tol=1e-10)
    g_s = metric.matrix(z0f[:, 0], z0f[:, 1])
    g_e = metric.matrix(z1f[:, 0], z1f[:, 1])
    grad0 = (-n * np.einsum("kij,kj->ki", g_s, con.v_start)).reshape(8, n, 2)
    grad1 = (n * np.einsum("kij,kj->ki", g_e, con.v_end)).reshape(8, n, 2)

    h = np.zeros((n, 4, 4))
    for col in range(4):
        p, m = 2 * col, 2 * col + 1
        h[:, 0:2, col] = (grad0[p] - grad0[m]) / (2.0 * steps[:, None])
        h[:, 2:4, col] = (grad1[p] - grad1[m]) / (2.0 * steps[:, None])

    # endpoint gradient of the closure segment at the central
    # configuration, recovered from the +- pair of column 0
    mom_last = 0.5 * (grad1[0][-1] + grad1[1][-1])

    h = 0.5 * (h + h.swapaxes(1, 2))
    big = np.zeros((2 * n, 2 * n))
    for k in range(n):
        i = 2 * k
        j = 2 * ((k + 1) % n)
        blk = h[k]
        left, cross, right = blk[0:2, 0:2], blk[0:2, 2:4], blk[2:4, 2:4]
        if k == n - 1:
            # closure segment ends at gamma x_0: first-order pullback
            # through the Jacobian plus the curvature of gamma itself
            z0c = complex(vertices[0, 0], vertices[0, 1])
            cross = cross @ jac0
            right = (jac0.T @ right @ jac0
                     + _closure_curvature(gamma, z0c, mom_last))
        big[i:i + 2, i:i + 2] += left
        big[i:i + 2, j:j + 2] += cross
        big[j:j + 2, i:i + 2] += cross.T
        big[j:j + 2, j:j + 2] += right
    return big


@dataclass
class ClosedGeodesic:
    """Converged loop with its certificate data."""

    length: float
    vertices: np.ndarray
    v_starts: np.ndarray
    segment_lengths: np.ndarray
    energy: float
    grad_norm: float
    iterations: int
    eigen_null: float
    eigen_deflated_min: float
    word: str = ""
    length_history: tuple[float, ...] = ()

    @property
    def n(self) -> int:
        return len(self.vertices)

    def points(self) -> np.ndarray:
        return self.vertices[:, 0] + 1j * self.vertices[:, 1]


def closed_geodesic(metric: PerturbedMetric, gamma: MobiusMap,
                    n: int | None = None, n_steps: int = 8,
                    grad_tol: float = GRAD_TOL, max_iter: int = MAX_ITER,
                    certificate: bool = True,
                    x0: np.ndarray | None = None) -> ClosedGeodesic:
    """Find the closed geodesic in the free homotopy class of gamma."""
    ell0 = trace_length(gamma)
    if n is None:
        n = default_vertex_count(ell0)
    x = initial_loop(gamma, n) if x0 is None else np.array(x0, dtype=float)
    n = len(x)
    v_warm = None

    shot_tol = 1e-12
    energy, grad, con = _energy_gradient(metric, x, gamma, v_warm, n_steps,
                                         tol=shot_tol)
    history = [float(np.sum(con.lengths))]
    model = None
    polished = False
    it = 0
    for it in range(1, max_iter + 1):
        gn = _scaled_grad_norm(x, grad)
        if gn < grad_tol:
            break
        if gn <= 1e-6 and not polished:
            # near the minimum the remaining energy decrease drops below
            # the segment-length noise of the default shooting target;
            # polish with a tighter one and re-evaluate in place
            polished = True
            try:
                energy, grad, con = _energy_gradient(metric, x, gamma,
                                                     con.v_start, n_steps,
                                                     tol=3e-14)
                shot_tol = 3e-14
            except ShootingError:
                shot_tol = 1e-13  # this configuration's shooting floor
        # refreshing the differenced Hessian re-rolls its noise, which
        # bounces the iterates around the minimum; once the gradient is
        # small, keep the model frozen and let exact gradients contract
        fresh = False
        if model is None or gn > 1e-6:
            model = _clamped_eig(_hessian(metric, x, gamma,
                                          con.v_start, n_steps))
            fresh = True
        while True:
            w_clamped, q = model
            ghat = q.T @ grad.reshape(-1)
            step = -(q @ (ghat / w_clamped)).reshape(-1, 2)
            descent = float(np.sum(step * grad))
            lam, accepted = 1.0, False
            for _ in range(25):
                x_try = x + lam * step
                if np.any(x_try[:, 1] <= 0.0):
                    lam *= 0.5
                    continue
                try:
                    e_try, g_try, c_try = _energy_gradient(
                        metric, x_try, gamma, con.v_start, n_steps,
                        tol=shot_tol)
                except ShootingError:
                    if shot_tol < 1e-12:
                        # a polished target can sit below the shooting
                        # noise floor away from the current loop; relax
                        # it rather than burn line-search halvings
                        shot_tol = min(shot_tol * 30.0, 1e-12)
                        continue
                    lam *= 0.5
                    continue
                ok = e_try <= energy + 1e-4 * lam * descent
                if not ok and gn <= 1e-3:
                    # endgame: the incumbent energy can be a lucky-low
                    # evaluation that no honest trial beats, but the
                    # gradient field still contracts; accept on its norm
                    # like a damped root finder
                    ok = (_scaled_grad_norm(x_try, g_try)
                          <= (1.0 - 1e-4 * lam) * gn)
                if ok:
                    x, energy, grad, con = x_try, e_try, g_try, c_try
                    history.append(float(np.sum(con.lengths)))
                    accepted = True
                    break
                lam *= 0.5
            if accepted or fresh:
                break
            model = _clamped_eig(_hessian(metric, x, gamma,
                                          con.v_start, n_steps))
            fresh = True
        if not accepted:
            raise ShootingError(
                f"line search stalled at gradient {gn:.3e} (tol "
                f"{grad_tol:.0e}); the remaining decrease sits below the "
                "energy evaluation noise, so coarsen grad_tol or refine "
                "the loop")
    else:
        raise ShootingError(f"no convergence in {max_iter} Newton steps")

    eig_null, eig_min = math.nan, math.nan
    if certificate:
        hess = _hessian(metric, x, gamma, con.v_start, n_steps)
        eigs = np.linalg.eigvalsh(hess)
        k0 = int(np.argmin(np.abs(eigs)))
        eig_null = float(eigs[k0])
        eig_min = float(np.min(np.delete(eigs, k0)))

    return ClosedGeodesic(
        length=float(np.sum(con.lengths)),
        vertices=x,
        v_starts=con.v_start,
        segment_lengths=con.lengths.copy(),
        energy=energy,
        grad_norm=_scaled_grad_norm(x, grad),
        iterations=it,
        eigen_null=eig_null,
        eigen_deflated_min=eig_min,
        length_history=tuple(history),
    )


# ---------------------------------------------------------------------------
# second variation along the loop


def jacobi_form(metric: PerturbedMetric, geod: ClosedGeodesic,
                steps_per_unit: int = 400) -> float:
    """Index-form value q = w'(L) - w'(0) of the normal Jacobi problem
    w'' = -K(t) w, w(0) = w(L) = 1, along the unit-speed loop.

    In the unperturbed metric this equals 2 tanh(L/2).
    """
    total = geod.length
    n_rk = max(200, int(math.ceil(steps_per_unit * total)))
    h = total / n_rk

    # unit-speed start: scale the first segment velocity by 1/d_0
    v0 = geod.v_starts[0] / geod.segment_lengths[0]
    state = np.array([geod.vertices[0, 0], geod.vertices[0, 1],
                      v0[0], v0[1], 1.0, 0.0, 0.0, 1.0])

    def rhs(s):
        x, y = s[0], s[1]
        k = float(gauss_curvature(metric, x, y))
        out = np.empty(8)
        out[0:4] = _geodesic_rhs4(metric, s[0:4])
        out[4] = s[5]
        out[5] = -k * s[4]
        out[6] = s[7]
        out[7] = -k * s[6]
        return out

    for _ in range(n_rk):
        k1 = rhs(state)
        k2 = rhs(state + 0.5 * h * k1)
        k3 = rhs(state + 0.5 * h * k2)
        k4 = rhs(state + h * k3)
        state = state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    w1, w1d, w2, w2d = state[4:8]
    if abs(w2) < 1e-12:
        raise ArithmeticError("conjugate point at the period; the scalar "
                              "reduction is degenerate here")
    c = (1.0 - w1) / w2
    return float(w1d + c * w2d - c)


def _geodesic_rhs4(metric: PerturbedMetric, s4: np.ndarray) -> np.ndarray:
    gam = metric.christoffels(s4[0], s4[1])
    v = s4[2:4]
    acc = -np.einsum("kij,i,j->k", gam, v, v)
    return np.concatenate([v, acc])


# ---------------------------------------------------------------------------
# displacement function and the word-level interface


def displacement_gradient(metric: PerturbedMetric, x, gamma: MobiusMap,
                          n_steps: int = 16) -> np.ndarray:
    """Gradient of the displacement function L(x) = dist(x, gamma x).

    Both endpoints move with x; the far one reports back through the
    Jacobian of gamma.  Vanishing of this covector characterizes points
    on the invariant geodesic, so it audits the loop solver from
    outside its own discretization.
    """
    x = np.asarray(x, dtype=float).reshape(2)
    z = complex(x[0], x[1])
    w = gamma(z)
    con = connect(metric, x[None, :], [[w.real, w.imag]], n_steps=n_steps)
    d = float(con.lengths[0])
    mom0 = metric.matrix(x[0], x[1]) @ (con.v_start[0] / d)
    mom1 = metric.matrix(w.real, w.imag) @ (con.v_end[0] / d)
    return _closure_jacobian(gamma, z).T @ mom1 - mom0


def jacobi_hessian(metric: PerturbedMetric, geod: ClosedGeodesic,
                   steps_per_unit: int = 400) -> np.ndarray:
    """Transverse Hessian of the displacement function at the geodesic,
    as a matrix on the normal bundle (one direction on a surface).

    Sliding along the loop is flat, so the single entry is the index
    form of the periodic normal Jacobi problem.
    """
    return np.array([[jacobi_form(metric, geod, steps_per_unit)]])


def geodesic_in_class(metric: PerturbedMetric, group: GroupPresentation,
                      cls: HomotopyClass, **opts) -> ClosedGeodesic:
    """Closed geodesic of the free homotopy class given by a word.

    Raises ValueError when the holonomy is not hyperbolic and
    ShootingError when the deflated Hessian certificate fails, the
    practical sign of leaving the perturbative regime.
    """
    gamma = group.holonomy(cls)
    kind = classify(gamma)
    if kind != "hyperbolic":
        raise ValueError(f"class not hyperbolic: {cls.key()} is {kind}")
    geod = closed_geodesic(metric, gamma, **opts)
    if geod.eigen_deflated_min <= 0.0:
        raise ShootingError(
            f"Hessian not positive definite on class {cls.key()}: "
            f"deflated minimum {geod.eigen_deflated_min:.3e}")
    geod.word = cls.key()
    return geod


def marked_length_spectrum(metric: PerturbedMetric,
                           group: GroupPresentation,
                           classes, **opts) -> dict[str, ClosedGeodesic]:
    """Solve every class and key the table by canonical word.

    All failures are collected before raising so one bad class cannot
    mask the others; the partial table rides on the exception.
    """
    table: dict[str, ClosedGeodesic] = {}
    failures = []
    for cls in classes:
        key = cls.key()
        try:
            table[key] = geodesic_in_class(metric, group, cls, **opts)
        except (ValueError, ShootingError) as exc:
            failures.append(f"{key}: {exc}")
    if failures:
        err = ShootingError("classes failed -- " + "; ".join(failures))
        err.partial = table
        raise err
    return table
