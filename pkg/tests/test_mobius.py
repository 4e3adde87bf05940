import math

import numpy as np
import pytest

from cusplab.mobius import (MobiusMap, NotHyperbolicError, axis, classify,
                            fixed_points, trace_length)

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0

# translation length of [[2,1],[1,1]]: 2 arccosh(3/2)
LENGTH_211 = 1.9248473002384139


def test_normalization_and_identity():
    m = MobiusMap.from_matrix([[2.0, 0.0], [0.0, 0.5]])
    assert abs(m.m11 * m.m22 - m.m12 * m.m21 - 1.0) < 1e-15
    assert (m @ m.inverse()).is_identity()


def test_classification():
    assert classify(MobiusMap.from_matrix([[1, 1], [0, 1]])) == "parabolic"
    assert classify(MobiusMap.from_matrix([[2, 1], [1, 1]])) == "hyperbolic"
    c, s = math.cos(0.3), math.sin(0.3)
    assert classify(MobiusMap.from_matrix([[c, s], [-s, c]])) == "elliptic"


def test_trace_length_frozen():
    m = MobiusMap.from_matrix([[2, 1], [1, 1]])
    assert trace_length(m) == pytest.approx(LENGTH_211, abs=1e-13)
    assert trace_length(m) == pytest.approx(2 * math.acosh(1.5), abs=1e-15)


def test_trace_length_rejects_parabolic():
    with pytest.raises(NotHyperbolicError):
        trace_length(MobiusMap.from_matrix([[1, 1], [0, 1]]))


def test_fixed_points_golden_ratio():
    # fixed points of (2z+1)/(z+1) solve z^2 - z - 1 = 0
    m = MobiusMap.from_matrix([[2, 1], [1, 1]])
    rep, att = fixed_points(m)
    assert att == pytest.approx(GOLDEN, abs=1e-14)
    assert rep == pytest.approx(1.0 - GOLDEN, abs=1e-14)
    # attracting means the derivative contracts there
    assert abs(m.derivative(att + 0j)) < 1.0 < abs(m.derivative(rep + 0j))


def test_axis_is_translated():
    m = MobiusMap.from_matrix([[2, 1], [1, 1]])
    ax = axis(m)
    ell = trace_length(m)
    for t in (-2.0, 0.0, 0.7, 3.1):
        z = ax.point(t)
        assert abs(m(z) - ax.point(t + ell)) < 1e-12
        # the axis sits inside the upper half-plane
        assert z.imag > 0


def test_axis_velocity_is_unit():
    m = MobiusMap.from_matrix([[3, 2], [1, 1]])
    ax = axis(m)
    for t in (-1.0, 0.0, 2.0):
        z, v = ax.point(t), ax.velocity(t)
        assert abs(v) / z.imag == pytest.approx(1.0, abs=1e-12)


def test_vertical_axis():
    m = MobiusMap.from_matrix([[2.0, 0.0], [0.0, 0.5]])
    ax = axis(m)
    ell = trace_length(m)
    assert ell == pytest.approx(2 * math.log(2), abs=1e-14)
    assert abs(m(ax.point(0.3)) - ax.point(0.3 + ell)) < 1e-13


def test_derivative_chain_rule():
    m1 = MobiusMap.from_matrix([[2, 1], [1, 1]])
    m2 = MobiusMap.from_matrix([[1, -1], [1, 2]])
    z = 0.4 + 1.3j
    lhs = (m1 @ m2).derivative(z)
    rhs = m1.derivative(m2(z)) * m2.derivative(z)
    assert abs(lhs - rhs) < 1e-13
