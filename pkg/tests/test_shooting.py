"""Geodesic integration and the two-point connection solver."""

import math

import numpy as np
import pytest

from cusplab.halfplane import PhaseState, flow
from cusplab.metrics import ConformalBump, PerturbedMetric, hyperbolic_metric
from cusplab.shooting import (
    ShootingError,
    connect,
    exp_endpoint,
    initial_velocity_guess,
    integrate_geodesic,
)

BUMP = ConformalBump(center=0.3 + 1.1j, radius=0.8, amplitude=1.0)


def _exact_endpoint(z0, alpha, d):
    """Unit-time endpoint in the unperturbed metric via the phase flow."""
    s = flow(PhaseState(z0[0], z0[1], alpha), d)
    return np.array([s.x, s.y])


def test_rk4_order_four():
    m0 = hyperbolic_metric()
    z0 = np.array([0.3, 1.2])
    alpha, d = 0.7, 1.1
    v = d * z0[1] * np.array([math.cos(alpha), math.sin(alpha)])
    want = _exact_endpoint(z0, alpha, d)
    errs = []
    for n_steps in (4, 8, 16):
        got = exp_endpoint(m0, z0, v, n_steps=n_steps)
        errs.append(np.max(np.abs(got - want)))
    assert errs[0] / errs[1] > 10.0
    assert errs[1] / errs[2] > 10.0
    assert errs[2] < 5e-6


def test_integrate_state_shape_and_batch():
    m0 = hyperbolic_metric()
    states = np.array([[0.0, 1.0, 0.5, 0.2], [0.4, 0.8, -0.3, 0.6]])
    out = integrate_geodesic(m0, states, 1.0, 8)
    assert out.shape == (2, 4)
    one = integrate_geodesic(m0, states[1], 1.0, 8)
    assert np.max(np.abs(out[1] - one)) == 0.0


def test_initial_velocity_guess_hits_target():
    z0 = np.array([[0.0, 1.0], [0.5, 0.7]])
    z1 = np.array([[0.8, 1.4], [0.2, 1.9]])
    v = initial_velocity_guess(z0, z1)
    m0 = hyperbolic_metric()
    end = exp_endpoint(m0, z0, v, n_steps=64)
    assert np.max(np.abs(end - z1)) < 1e-8


class TestConnect:
    z0 = np.array([[0.0, 1.0], [0.5, 0.7], [-0.3, 1.6]])
    z1 = np.array([[0.8, 1.4], [0.2, 1.9], [0.4, 0.9]])

    def test_background_recovers_distance(self):
        con = connect(hyperbolic_metric(), self.z0, self.z1, n_steps=32)
        v_exact = initial_velocity_guess(self.z0, self.z1)
        assert np.max(np.abs(con.v_start - v_exact)) < 1e-6
        from cusplab.halfplane import distance
        for k in range(3):
            d = distance(complex(*self.z0[k]), complex(*self.z1[k]))
            assert con.lengths[k] == pytest.approx(d, abs=1e-7)

    def test_perturbed_endpoint_reached(self):
        mp = PerturbedMetric(BUMP, 1e-2)
        con = connect(mp, self.z0, self.z1, n_steps=32)
        assert con.residual < 1e-11
        # re-integrate the solved velocity on a finer grid: the landing
        # error left over is the n_steps discretization error alone
        end = exp_endpoint(mp, self.z0, con.v_start, n_steps=128)
        assert np.max(np.abs(end - self.z1)) < 1e-6

    def test_scalar_batch_consistency(self):
        mp = PerturbedMetric(BUMP, 1e-2)
        con = connect(mp, self.z0, self.z1)
        one = connect(mp, self.z0[1:2], self.z1[1:2])
        assert np.max(np.abs(con.v_start[1] - one.v_start[0])) < 1e-10

    def test_distance_gradient_identities(self):
        # grad_{z1} d^2/2 = G(z1) v_end and grad_{z0} d^2/2 = -G(z0) v_start
        mp = PerturbedMetric(BUMP, 1e-2)
        z0 = np.array([[0.1, 1.0]])
        z1 = np.array([[0.7, 1.3]])
        con = connect(mp, z0, z1, n_steps=16)
        mom1 = np.einsum("kij,kj->ki", mp.matrix(z1[:, 0], z1[:, 1]),
                         con.v_end)
        mom0 = -np.einsum("kij,kj->ki", mp.matrix(z0[:, 0], z0[:, 1]),
                          con.v_start)
        h = 1e-6

        def half_d2(a, b):
            return 0.5 * connect(mp, a, b, n_steps=16).lengths[0] ** 2

        for c in range(2):
            dz = np.zeros((1, 2))
            dz[0, c] = h
            fd1 = (half_d2(z0, z1 + dz) - half_d2(z0, z1 - dz)) / (2 * h)
            fd0 = (half_d2(z0 + dz, z1) - half_d2(z0 - dz, z1)) / (2 * h)
            assert mom1[0, c] == pytest.approx(fd1, abs=1e-6)
            assert mom0[0, c] == pytest.approx(fd0, abs=1e-6)

    def test_unreachable_tolerance_raises(self):
        # a single Newton iteration cannot reach a beyond-machine target
        with pytest.raises(ShootingError):
            connect(hyperbolic_metric(), self.z0[2:], self.z1[2:],
                    tol=1e-30, max_iter=1)
