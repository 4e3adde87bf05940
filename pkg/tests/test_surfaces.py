import math

import pytest

from cusplab.cusp import flow_exact
from cusplab.groups import preset
from cusplab.halfplane import PhaseState, distance, flow, transport
from cusplab.mobius import classify, trace_length
from cusplab.surfaces import punctured_torus


@pytest.fixture(scope="module")
def surf():
    return punctured_torus()


def test_normalization_makes_unit_translation(surf):
    t = surf.group.evaluate(surf.group.cusp_word)
    assert classify(t) == "parabolic"
    assert abs(t.m21) < 1e-12
    assert abs(abs(t.m12 / t.m11) - 1.0) < 1e-12


def test_normalization_preserves_marked_lengths(surf):
    raw = preset("one-cusp-genus-1")
    for w in [(1,), (2,), (1, 2), (1, 1, 2)]:
        assert trace_length(surf.group.evaluate(w)) == pytest.approx(
            trace_length(raw.evaluate(w)), rel=1e-13)


def test_reduction_well_defined(surf):
    z = 0.31 + 0.9j
    r0, _ = surf.reduce(z)
    for m in surf._ball[:15]:
        r1, _ = surf.reduce(m(z))
        assert abs(r1 - r0) < 1e-9


def test_reduce_returns_applied_map(surf):
    z = -3.7 + 0.2j
    r, g = surf.reduce(z)
    assert abs(g(z) - r) < 1e-12


def test_quotient_distance(surf):
    z = 0.31 + 0.9j
    # deck images are at distance zero
    assert surf.quotient_distance(z, surf._ball[7](z)) < 1e-12
    # nearby points keep their plane distance
    w = z + 0.02 + 0.01j
    assert surf.quotient_distance(z, w) == pytest.approx(
        distance(z, w), rel=1e-12)
    assert surf.quotient_distance(z, w) <= distance(z, w) + 1e-12


def test_phase_distance_vanishes_on_orbit(surf):
    st = PhaseState(0.31, 0.9, 0.7)
    st2 = transport(surf._ball[5], st)
    assert surf.phase_distance(st, st2) < 1e-12


def test_cusp_chart_flow_conjugacy(surf):
    # the chart map intertwines the plane flow and the model cusp flow
    st = PhaseState(0.2, 1.5, 0.9)
    pp = surf.to_cusp_chart(st)
    st_t = flow(st, 0.3)
    pp_t = flow_exact(pp, 0.3)
    assert st_t.y == pytest.approx(pp_t.y, rel=1e-13)
    assert (st_t.x % 1.0) == pytest.approx(pp_t.theta % 1.0, abs=1e-12)
    assert math.acos(math.sin(st_t.alpha)) == pytest.approx(pp_t.phi,
                                                            abs=1e-12)


def test_chart_floor_enforced(surf):
    with pytest.raises(ValueError):
        surf.to_cusp_chart(PhaseState(0.0, 0.5, 0.3))


def test_excursion_height_conserved(surf):
    st = PhaseState(0.2, 1.5, 0.9)
    h0 = surf.excursion_height(st)
    assert surf.excursion_height(flow(st, 1.0)) == pytest.approx(
        h0, rel=1e-12)
    assert surf.excursion_height(PhaseState(0.0, 2.0, math.pi / 2)) \
        == math.inf


def test_embedding_height_below_floor(surf):
    # floor a = 1 must bound an embedded horoball neighborhood
    assert surf.embedding_height() <= surf.chart.a


def test_non_parabolic_cusp_word_rejected_at_construction():
    g = preset("one-cusp-genus-1")
    with pytest.raises(ValueError):
        type(g)(generators=g.generators, names=g.names, cusp_word=(1,))
