import math

import numpy as np
import pytest
from scipy.integrate import dblquad, solve_ivp

from cusplab.cusp import (CuspChart, PhasePoint, VerticalRayError,
                          conserved_depth, deep_set_measure, exit_time,
                          flow_exact, flow_field)

# exit times frozen from the closed form arccosh(y / (a sin phi)):
#   y = a, phi = pi/4 gives -2 log tan(pi/8) until re-entry depth
EXIT_FORWARD_Y2_PHI90 = 1.3169578969248166   # log(2 + sqrt(3))
EXIT_TOTAL_Y1_PHI45 = 1.762747174039086      # -2 log tan(pi/8)


def _ivp_oracle(p: PhasePoint, t: float) -> PhasePoint:
    def rhs(_, s):
        y, theta, phi = s
        return [y * math.cos(phi), y * math.sin(phi) * p.u, math.sin(phi)]

    sol = solve_ivp(rhs, (0.0, t), [p.y, p.theta, p.phi],
                    rtol=1e-12, atol=1e-13, dense_output=True)
    y, theta, phi = sol.y[:, -1]
    return PhasePoint(y, theta, phi, p.u)


@pytest.mark.parametrize("y,phi,t", [
    (1.0, math.pi / 4, 0.8),
    (2.0, 2.0, -1.3),
    (0.5, 1.0, 2.5),
    (3.0, 3.0, 0.4),
])
def test_flow_exact_matches_ivp(y, phi, t):
    p = PhasePoint(y, 0.3, phi, u=1.0)
    got = flow_exact(p, t)
    ref = _ivp_oracle(p, t)
    assert got.y == pytest.approx(ref.y, rel=1e-9)
    assert got.theta == pytest.approx(ref.theta, abs=1e-9)
    assert got.phi == pytest.approx(ref.phi, abs=1e-9)


def test_flow_group_property():
    p = PhasePoint(1.5, 0.0, 0.9)
    lhs = flow_exact(p, 1.7)
    rhs = flow_exact(flow_exact(p, 0.6), 1.1)
    assert lhs.y == pytest.approx(rhs.y, rel=1e-13)
    assert lhs.phi == pytest.approx(rhs.phi, abs=1e-13)


def test_conserved_depth():
    p = PhasePoint(2.0, 0.1, 0.7)
    d0 = conserved_depth(p)
    for t in (0.5, 1.5, -2.0):
        assert conserved_depth(flow_exact(p, t)) == pytest.approx(
            d0, rel=1e-13)


def test_pole_branch():
    # phi at the pole keeps theta fixed and scales y exponentially
    p = PhasePoint(1.0, 0.2, math.pi)
    q = flow_exact(p, 0.7)
    assert q.theta == p.theta
    assert q.y == pytest.approx(math.exp(-0.7), rel=1e-14)


def test_exit_time_frozen_values():
    chart = CuspChart(a=1.0)
    fwd, bwd = exit_time(PhasePoint(2.0, 0.0, math.pi / 2), chart)
    assert fwd == pytest.approx(EXIT_FORWARD_Y2_PHI90, abs=1e-12)
    assert bwd == pytest.approx(-EXIT_FORWARD_Y2_PHI90, abs=1e-12)

    # launched from the floor going up: past crossing is now, and the
    # forward time is the whole excursion
    fwd, bwd = exit_time(PhasePoint(1.0, 0.0, math.pi / 4), chart)
    assert bwd == pytest.approx(0.0, abs=1e-12)
    assert fwd == pytest.approx(EXIT_TOTAL_Y1_PHI45, abs=1e-12)
    # the exit point really is at the chart floor
    q = flow_exact(PhasePoint(1.0, 0.0, math.pi / 4), fwd)
    assert q.y == pytest.approx(1.0, rel=1e-12)


def test_exit_time_errors():
    chart = CuspChart(a=1.0)
    with pytest.raises(ValueError):
        exit_time(PhasePoint(0.5, 0.0, 1.0), chart)
    fwd, bwd = exit_time(PhasePoint(2.0, 0.0, math.pi), chart)
    assert math.isinf(bwd) and not math.isinf(fwd)


def test_deep_set_measure_against_dblquad():
    d, delta, nu, eps, a = 1, 0.5, 0.25, 0.1, 1.0

    def integrand(y, phi):
        return math.sin(phi) ** (d - 1) * (1 + math.log(y)) * y ** (-1 - 2 * delta)

    def y_lo(phi):
        return max(a, a * math.sin(phi) * eps ** (-2 * nu))

    oracle, _ = dblquad(integrand, 0.0, math.pi / 2, y_lo, math.inf,
                        epsabs=1e-12)
    numeric, bound = deep_set_measure(d, delta, nu, eps, a=a)
    assert numeric == pytest.approx(oracle, rel=1e-8)
    assert numeric <= 10.0 * bound


def test_deep_set_measure_shrinks():
    vals = [deep_set_measure(2, 1.0, 0.25, e)[0] for e in (0.3, 0.1, 0.03)]
    assert vals[0] > vals[1] > vals[2]
