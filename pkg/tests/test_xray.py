"""Orbit averages, potential tensors, the variation ladder, and the
weak-norm probe."""

import math

import numpy as np
import pytest

from cusplab.geodesics import closed_geodesic, geodesic_in_class
from cusplab.groups import preset
from cusplab.halfplane import distance, flow_arrays
from cusplab.metrics import (ConformalBump, Mode0Window, PerturbationField,
                             SummedField, ZeroField, hyperbolic_metric,
                             symmetrize_cyclic)
from cusplab.mobius import MobiusMap, axis, trace_length
from cusplab.quadrature import integrate_panels
from cusplab.xray import (BumpOneForm, PotentialTensor, chart_window_grid,
                          frame_c1_on_grid, mollified_l2_norm,
                          one_form_c1_norm, solenoidal_defect,
                          stability_probe, variation_check, xray_transform)

GAMMA = MobiusMap.from_matrix([[2.0, 1.0], [1.0, 1.0]])
ELL = trace_length(GAMMA)
AX = axis(GAMMA)
BG = hyperbolic_metric()
BUMP = ConformalBump(AX.point(0.4), 0.7, 1.0)
FIELD = symmetrize_cyclic(BUMP, GAMMA, ELL)
LADDER = (1e-2, 3e-3, 1e-3, 3e-4)
GROUP = preset("one-cusp-genus-1")

# average of FIELD over the GAMMA orbit by the independent axis
# parametrization below (80 panels of order 12, self-converged 2e-13)
AXIS_ORACLE = 0.4389076606749348


class IdentityField(PerturbationField):
    def components(self, x, y):
        out = np.zeros(np.shape(np.asarray(x)) + (2, 2))
        out[..., 0, 0] = out[..., 1, 1] = 1.0
        return out


@pytest.fixture(scope="module")
def geod32():
    return closed_geodesic(BG, GAMMA, n=32)


@pytest.fixture(scope="module")
def orbits():
    out = []
    for cls in GROUP.hyperbolic_classes(2, 5):
        geod = closed_geodesic(BG, GROUP.holonomy(cls), n=32)
        geod.word = cls.key()
        out.append(geod)
    return out


def axis_average(field):
    """Average of the field's tangential contraction over one period of
    the GAMMA axis, parametrized independently of the orbit solver."""

    def integrand(si):
        out = np.empty_like(si)
        for k, s in enumerate(si):
            z = AX.point(s)
            h = 1e-6
            zp, zm = AX.point(s + h), AX.point(s - h)
            v = np.array([zp.real - zm.real, zp.imag - zm.imag]) / (2 * h)
            u = v / z.imag
            comp = field.components(np.array([z.real]), np.array([z.imag]))[0]
            out[k] = u @ comp @ u
        return out

    return integrate_panels(integrand, 0.0, ELL, panels=80, order=12) / ELL


class TestTransform:
    def test_metric_averages_to_one(self, geod32):
        val = xray_transform(IdentityField(), geod32)
        assert val.value == pytest.approx(1.0, abs=1e-10)
        assert val.error <= 1e-12

    def test_value_matches_axis_quadrature(self, geod32):
        oracle = axis_average(FIELD)
        assert oracle == pytest.approx(AXIS_ORACLE, abs=1e-11)
        val = xray_transform(FIELD, geod32)
        assert val.value == pytest.approx(oracle, abs=1e-9)
        assert val.error <= 1e-8

    def test_node_doubling_is_stable(self, geod32):
        v8 = xray_transform(FIELD, geod32, order=8).value
        v16 = xray_transform(FIELD, geod32, order=16).value
        assert abs(v16 - v8) <= 1e-9

    def test_linearity(self, geod32):
        other = ConformalBump(AX.point(0.9), 0.5, 0.7)
        va = xray_transform(FIELD, geod32).value
        vb = xray_transform(other, geod32).value

        class Combo(PerturbationField):
            def components(self, x, y):
                return (2.0 * FIELD.components(x, y)
                        - 3.0 * other.components(x, y))

        vc = xray_transform(Combo(), geod32).value
        assert vc == pytest.approx(2.0 * va - 3.0 * vb, abs=1e-10)

    def test_class_inverse_symmetry(self, geod32):
        back = closed_geodesic(BG, GAMMA.inverse(), n=32)
        va = xray_transform(FIELD, geod32).value
        vb = xray_transform(FIELD, back).value
        assert abs(va - vb) <= 1e-9

    def test_word_travels_with_the_orbit(self):
        cls = GROUP.hyperbolic_classes(2, 5)[-1]
        geod = geodesic_in_class(BG, GROUP, cls, n=32)
        val = xray_transform(FIELD, geod)
        assert val.word == cls.key()


class TestPotential:
    P = BumpOneForm(AX.point(0.4), 0.7, (0.8, -0.5))

    def test_flow_derivative_identity(self):
        # (Dp)(u, u) is the derivative of p(u) along the frame flow
        pot = PotentialTensor(self.P)
        rng = np.random.default_rng(3)
        h = 1e-4
        for _ in range(12):
            x0 = rng.uniform(-0.5, 1.5)
            y0 = rng.uniform(0.3, 2.0)
            al = rng.uniform(0.0, 2.0 * math.pi)
            vals = []
            for t in (-h, h):
                x, y, a = flow_arrays(x0, y0, al, t)
                comp = self.P.components(np.array([x]), np.array([y]))[0]
                vals.append(comp @ np.array([math.cos(a), math.sin(a)]))
            fd = (vals[1] - vals[0]) / (2.0 * h)
            c = pot.components(np.array([x0]), np.array([y0]))[0]
            u = np.array([math.cos(al), math.sin(al)])
            assert abs(fd - u @ c @ u) <= 1e-6

    def test_bump_partials_match_fd(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(-0.5, 1.5, size=40)
        y = rng.uniform(0.3, 2.0, size=40)
        h = 1e-6
        fd = np.stack([
            (self.P.components(x + h, y) - self.P.components(x - h, y)),
            (self.P.components(x, y + h) - self.P.components(x, y - h)),
        ], axis=-2) / (2.0 * h)
        assert np.max(np.abs(fd - self.P.partials(x, y))) <= 1e-6

    def test_mid_loop_potential_vanishes_on_classes(self, orbits):
        center = complex(*orbits[0].vertices[16])
        radius = 0.42
        p = BumpOneForm(center, radius, (0.8, -0.5))
        # the support must cut the interior of some orbits while staying
        # clear of every closure basepoint, else the check is empty
        gaps = [min(distance(complex(*v), center) for v in g.vertices)
                for g in orbits]
        assert sum(gap < radius for gap in gaps) >= 2
        for geod in orbits:
            assert distance(complex(*geod.vertices[0]), center) > radius + 0.02
        X, Y = chart_window_grid()
        bound = 1e-7 * one_form_c1_norm(p, X, Y)
        pot = PotentialTensor(p)
        for geod in orbits:
            assert abs(xray_transform(pot, geod).value) <= bound

    def test_one_form_norm_homogeneous(self):
        X, Y = chart_window_grid()
        double = BumpOneForm(self.P.center, self.P.radius, (1.6, -1.0))
        assert one_form_c1_norm(double, X, Y) == pytest.approx(
            2.0 * one_form_c1_norm(self.P, X, Y), rel=1e-12)


class TestSolenoidalDefect:
    # profiles with c' = c - a and b = 0 have divergence zero in the
    # frame; exponentials solve that with a = (1 - lam) c
    SOL = Mode0Window(lambda r: 2.0 * np.exp(-r), lambda r: 0.0 * r,
                      lambda r: np.exp(-r), -0.8, 1.0, 0.3)

    def test_window_interior(self):
        X, Y = np.meshgrid(np.linspace(-1.0, 3.0, 40),
                           np.exp(np.linspace(-0.45, 0.65, 40)),
                           indexing="ij")
        assert solenoidal_defect(self.SOL, X, Y) <= 1e-8

    def test_window_ramps_break_it(self):
        X, Y = np.meshgrid(np.linspace(-1.0, 3.0, 40),
                           np.exp(np.linspace(-0.8, 1.0, 60)),
                           indexing="ij")
        assert solenoidal_defect(self.SOL, X, Y) > 1.0

    def test_potential_is_not_solenoidal(self):
        pot = PotentialTensor(BumpOneForm(AX.point(0.4), 0.7, (0.8, -0.5)))
        X, Y = chart_window_grid()
        assert solenoidal_defect(pot, X, Y) > 1.0


class TestVariation:
    def test_conformal_ladder(self):
        rep = variation_check(FIELD, GAMMA, LADDER, n=32)
        assert rep.i2_value == pytest.approx(AXIS_ORACLE, abs=1e-9)
        assert rep.kappa == pytest.approx(0.5, abs=0.01)
        assert rep.remainder_slope == pytest.approx(2.0, abs=0.1)
        assert np.all(rep.ratios > 0.0)

    def test_potential_ladder_is_second_order(self):
        p = BumpOneForm(AX.point(0.5 * ELL), 0.42, (0.8, -0.5))
        rep = variation_check(PotentialTensor(p), GAMMA, LADDER, n=32)
        assert abs(rep.first_order) <= 1e-6
        assert math.isnan(rep.kappa)
        assert rep.remainder_slope == pytest.approx(2.0, abs=0.1)

    def test_zero_field_is_exact(self):
        rep = variation_check(ZeroField(), GAMMA, LADDER, n=32)
        assert np.max(np.abs(rep.ratios)) <= 1e-12
        assert abs(rep.first_order) <= 1e-12
        assert math.isnan(rep.kappa)
        assert math.isnan(rep.remainder_slope)

    def test_short_ladder_rejected(self):
        with pytest.raises(ValueError, match="3 points"):
            variation_check(FIELD, GAMMA, (1e-2, 1e-3))


class TestStabilityProbe:
    @staticmethod
    def scaled(k):
        return symmetrize_cyclic(ConformalBump(AX.point(0.4), 0.7, 2.0 ** -k),
                                 GAMMA, ELL)

    def test_scaled_family_has_unit_exponent(self, geod32):
        rep = stability_probe([self.scaled(k) for k in range(6)], [geod32],
                              mollified_l2_norm())
        assert rep.theta_hat == pytest.approx(1.0, abs=1e-10)
        assert rep.rank_corr == pytest.approx(1.0, abs=1e-12)

    def test_potential_offset_halves_down_the_family(self, geod32):
        pot = PotentialTensor(BumpOneForm(AX.point(0.5 * ELL), 0.42,
                                          (0.8, -0.5)))
        fam = [SummedField((pot, self.scaled(k))) for k in range(6)]
        rep = stability_probe(fam, [geod32], mollified_l2_norm())
        ratios = rep.i2_sup[1:] / rep.i2_sup[:-1]
        assert np.allclose(ratios, 0.5, atol=1e-6)

    def test_mixed_family_recorded(self, orbits):
        mixed = [
            symmetrize_cyclic(ConformalBump(AX.point(0.4), 0.7, 1.0),
                              GAMMA, ELL),
            symmetrize_cyclic(ConformalBump(AX.point(1.2), 0.5, 0.6),
                              GAMMA, ELL),
            symmetrize_cyclic(ConformalBump(AX.point(0.8), 0.9, 0.25),
                              GAMMA, ELL),
            ConformalBump(0.5 + 0.9j, 0.6, 0.45),
            ConformalBump(1.0 + 1.4j, 0.8, 0.15),
            ConformalBump(-0.2 + 0.8j, 0.5, 0.9),
            Mode0Window(lambda r: 2.0 * np.exp(-r), lambda r: 0.0 * r,
                        lambda r: np.exp(-r), -0.8, 1.0, 0.3),
        ]
        rep = stability_probe(mixed, orbits, mollified_l2_norm(),
                              frame_c1_on_grid())
        assert np.all(rep.weak > 0.0)
        assert np.all(rep.i2_sup > 0.0)
        assert np.all(rep.c1 > 0.0)
        # measured association for this family, frozen
        assert rep.theta_hat == pytest.approx(1.0771445128922945, abs=1e-6)
        assert rep.rank_corr == pytest.approx(0.8928571428571429, abs=1e-6)
        assert rep.rank_corr > 0.8

    def test_small_family_rejected(self, geod32):
        with pytest.raises(ValueError, match="5 members"):
            stability_probe([self.scaled(k) for k in range(4)], [geod32],
                            mollified_l2_norm())
