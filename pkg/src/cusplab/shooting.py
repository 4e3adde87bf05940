"""Geodesic integration and two-point connection in perturbed metrics.

Segments are parameterized on [0, 1], so the initial velocity carries
the length: d = |v(0)|_g.  Everything is batched over the leading axis;
the connection solver runs Newton on all rows simultaneously with a
differenced 2x2 Jacobian and plain step halving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .halfplane import geodesic_between
from .metrics import PerturbedMetric


class ShootingError(RuntimeError):
    pass


def geodesic_rhs(metric: PerturbedMetric, state: np.ndarray) -> np.ndarray:
    """state (..., 4) = (x, y, vx, vy) -> time derivative."""
    x, y = state[..., 0], state[..., 1]
    v = state[..., 2:4]
    gam = metric.christoffels(x, y)
    acc = -np.einsum("...kij,...i,...j->...k", gam, v, v)
    return np.concatenate([v, acc], axis=-1)


def integrate_geodesic(metric: PerturbedMetric, state0, t_total: float = 1.0,
                       n_steps: int = 8) -> np.ndarray:
    """Classical RK4 with fixed steps; returns the final state."""
    s = np.asarray(state0, dtype=float).copy()
    h = t_total / n_steps
    for _ in range(n_steps):
        k1 = geodesic_rhs(metric, s)
        k2 = geodesic_rhs(metric, s + 0.5 * h * k1)
        k3 = geodesic_rhs(metric, s + 0.5 * h * k2)
        k4 = geodesic_rhs(metric, s + h * k3)
        s = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return s


def trajectory(metric: PerturbedMetric, state0, t_total: float,
               n_steps: int) -> np.ndarray:
    """All RK4 nodes including both ends, shape (n_steps+1, ..., 4)."""
    s = np.asarray(state0, dtype=float).copy()
    out = [s.copy()]
    h = t_total / n_steps
    for _ in range(n_steps):
        k1 = geodesic_rhs(metric, s)
        k2 = geodesic_rhs(metric, s + 0.5 * h * k1)
        k3 = geodesic_rhs(metric, s + 0.5 * h * k2)
        k4 = geodesic_rhs(metric, s + h * k3)
        s = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out.append(s.copy())
    return np.stack(out, axis=0)


def exp_endpoint(metric: PerturbedMetric, z0: np.ndarray, v: np.ndarray,
                 n_steps: int = 8) -> np.ndarray:
    """Position after unit time from z0 (..., 2) with velocity v."""
    state = np.concatenate([z0, v], axis=-1)
    return integrate_geodesic(metric, state, 1.0, n_steps)[..., 0:2]


def initial_velocity_guess(z0: np.ndarray, z1: np.ndarray) -> np.ndarray:
    """Unperturbed connecting velocity, batched."""
    z0 = np.atleast_2d(z0)
    z1 = np.atleast_2d(z1)
    out = np.empty_like(z0)
    for k in range(len(z0)):
        seg = geodesic_between(complex(*z0[k]), complex(*z1[k]))
        out[k, 0] = seg.length * z0[k, 1] * math.cos(seg.start.alpha)
        out[k, 1] = seg.length * z0[k, 1] * math.sin(seg.start.alpha)
    return out


@dataclass
class Connection:
    """Solved two-point problems: segment k runs z0[k] -> z1[k]."""

    v_start: np.ndarray   # (m, 2)
    v_end: np.ndarray     # (m, 2)
    lengths: np.ndarray   # (m,)
    iterations: int
    residual: float


def connect(metric: PerturbedMetric, z0, z1, v_guess=None, n_steps: int = 8,
            tol: float = 1e-12, max_iter: int = 40) -> Connection:
    """Newton shooting to join z0[k] to z1[k] in unit time, all rows at
    once.  tol is on the endpoint error relative to the local height."""
    z0 = np.atleast_2d(np.asarray(z0, dtype=float))
    z1 = np.atleast_2d(np.asarray(z1, dtype=float))
    v = np.array(initial_velocity_guess(z0, z1) if v_guess is None
                 else np.atleast_2d(v_guess), dtype=float)
    scale = z1[:, 1]

    def residual(vel):
        return (exp_endpoint(metric, z0, vel, n_steps) - z1) / scale[:, None]

    r = residual(v)
    err = np.max(np.abs(r), axis=1)
    for it in range(max_iter):
        if np.max(err) < tol:
            break
        hstep = 1e-7 * np.maximum(np.linalg.norm(v, axis=1, keepdims=True),
                                  0.1)
        jac = np.empty(v.shape[:1] + (2, 2))
        for col in range(2):
            dv = np.zeros_like(v)
            dv[:, col] = hstep[:, 0]
            jac[:, :, col] = (residual(v + dv) - residual(v - dv)) \
                / (2.0 * hstep)
        try:
            step = np.linalg.solve(jac, r[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise ShootingError("singular shooting Jacobian") from exc
        lam = np.ones(len(v))
        for _ in range(12):
            v_new = v - lam[:, None] * step
            r_new = residual(v_new)
            err_new = np.max(np.abs(r_new), axis=1)
            bad = err_new > err
            if not np.any(bad & (err > tol)):
                break
            lam = np.where(bad, 0.5 * lam, lam)
        v, r, err = v_new, r_new, err_new
    else:
        raise ShootingError(f"no convergence: max endpoint error "
                            f"{np.max(err):.3e} after {max_iter} iterations")

    end = integrate_geodesic(metric,
                             np.concatenate([z0, v], axis=-1), 1.0, n_steps)
    lengths = np.sqrt(metric.speed_sq(z0[:, 0], z0[:, 1], v[:, 0], v[:, 1]))
    return Connection(v_start=v, v_end=end[:, 2:4], lengths=lengths,
                      iterations=it, residual=float(np.max(err)))
