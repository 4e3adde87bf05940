"""Closed geodesics of perturbed metrics and their certificates."""

import math

import numpy as np
import pytest

from cusplab.geodesics import (
    _closure_curvature,
    _closure_jacobian,
    _energy_gradient,
    _hessian,
    closed_geodesic,
    default_vertex_count,
    displacement_gradient,
    geodesic_in_class,
    initial_loop,
    jacobi_form,
    jacobi_hessian,
    marked_length_spectrum,
)
from cusplab.groups import preset
from cusplab.metrics import (
    ConformalBump,
    PerturbedMetric,
    hyperbolic_metric,
    symmetrize_cyclic,
)
from cusplab.mobius import MobiusMap, axis, trace_length
from cusplab.quadrature import integrate_panels
from cusplab.shooting import ShootingError, connect
from cusplab.words import HomotopyClass

GAMMA = MobiusMap.from_matrix([[2, 1], [1, 1]])
ELL = trace_length(GAMMA)                 # 2 arccosh(3/2)
AX = axis(GAMMA)
BUMP = ConformalBump(center=AX.point(0.4), radius=0.7, amplitude=1.0)
FIELD = symmetrize_cyclic(BUMP, GAMMA, ELL)
EPS = 3e-3


@pytest.fixture(scope="module")
def perturbed_geodesic():
    return closed_geodesic(PerturbedMetric(FIELD, EPS), GAMMA, n=32)


def test_default_vertex_count():
    assert default_vertex_count(0.5) == 64
    assert default_vertex_count(10.0) == 200


def test_initial_loop_on_axis():
    pts = initial_loop(GAMMA, 16)
    for k in range(16):
        z = AX.point(k * ELL / 16)
        assert pts[k, 0] == pytest.approx(z.real, abs=1e-13)
        assert pts[k, 1] == pytest.approx(z.imag, abs=1e-13)


def test_closure_jacobian_matches_fd():
    z = 0.4 + 1.2j
    jac = _closure_jacobian(GAMMA, z)
    h = 1e-6

    def gmap(x, y):
        w = GAMMA(complex(x, y))
        return np.array([w.real, w.imag])

    fd = np.column_stack([
        (gmap(z.real + h, z.imag) - gmap(z.real - h, z.imag)) / (2 * h),
        (gmap(z.real, z.imag + h) - gmap(z.real, z.imag - h)) / (2 * h),
    ])
    assert np.max(np.abs(jac - fd)) < 1e-8


def test_closure_curvature_matches_fd():
    z = 0.4 + 1.2j
    mom = np.array([0.7, -1.3])
    got = _closure_curvature(GAMMA, z, mom)

    def phi(x, y):
        w = GAMMA(complex(x, y))
        return mom[0] * w.real + mom[1] * w.imag

    h = 1e-5
    x, y = z.real, z.imag
    fxx = (phi(x + h, y) - 2 * phi(x, y) + phi(x - h, y)) / h ** 2
    fyy = (phi(x, y + h) - 2 * phi(x, y) + phi(x, y - h)) / h ** 2
    fxy = (phi(x + h, y + h) - phi(x + h, y - h)
           - phi(x - h, y + h) + phi(x - h, y - h)) / (4 * h ** 2)
    fd = np.array([[fxx, fxy], [fxy, fyy]])
    assert np.max(np.abs(got - fd)) < 1e-5


def test_background_length_exact():
    geo = closed_geodesic(hyperbolic_metric(), GAMMA)
    assert geo.n == 64
    assert geo.length == pytest.approx(ELL, abs=1e-12)
    assert geo.iterations <= 2
    assert abs(geo.eigen_null) < 1e-6
    assert geo.eigen_deflated_min > 0.05


def test_hessian_matches_brute_force():
    mp = PerturbedMetric(FIELD, 1e-2)
    n = 6
    rng = np.random.default_rng(3)
    x0 = initial_loop(GAMMA, n) + 0.01 * rng.standard_normal((n, 2))

    def grad_of(x):
        return _energy_gradient(mp, x, GAMMA, None, 8)[1]

    _, _, con = _energy_gradient(mp, x0, GAMMA, None, 8)
    got = _hessian(mp, x0, GAMMA, con.v_start, 8)
    h = 1e-6
    fd = np.zeros((2 * n, 2 * n))
    for j in range(n):
        for c in range(2):
            xp = x0.copy()
            xp[j, c] += h
            xm = x0.copy()
            xm[j, c] -= h
            fd[:, 2 * j + c] = ((grad_of(xp) - grad_of(xm)) / (2 * h)
                                ).reshape(-1)
    fd = 0.5 * (fd + fd.T)
    assert np.max(np.abs(got - fd)) < 1e-4


def test_first_variation(perturbed_geodesic):
    # conformal perturbations move the length by eps/2 times the
    # integral of the bump over the axis, one term per deck translate
    def along_axis(t):
        t = np.atleast_1d(t)
        zs = np.array([AX.point(tt) for tt in t])
        return BUMP.components(zs.real, zs.imag)[..., 0, 0]

    i2 = integrate_panels(along_axis, -4.0, 4.0, panels=160, order=12)
    rate = (perturbed_geodesic.length - ELL) / EPS
    assert rate == pytest.approx(0.5 * i2, abs=1e-3)


def test_perturbed_certificate(perturbed_geodesic):
    geo = perturbed_geodesic
    assert geo.grad_norm < 1e-9
    assert abs(geo.eigen_null) < 1e-6
    assert geo.eigen_deflated_min > 0.02
    assert np.all(geo.segment_lengths > 0)
    assert geo.length == pytest.approx(float(np.sum(geo.segment_lengths)),
                                       abs=1e-14)


def test_isometry_equivariance(perturbed_geodesic):
    # conjugating the class and pulling the field back is an isometry of
    # the whole problem, so the length must not move
    h = MobiusMap.from_matrix([[1.0, 0.7], [0.3, 1.21]])
    gamma2 = h.inverse() @ GAMMA @ h
    geo2 = closed_geodesic(PerturbedMetric(FIELD.pulled_back(h), EPS),
                           gamma2, n=32)
    assert abs(geo2.length - perturbed_geodesic.length) < 1e-9


def test_vertex_refinement_consistency(perturbed_geodesic):
    # segments are exact geodesics, so the converged length should not
    # depend on the vertex count beyond integrator tolerances
    geo48 = closed_geodesic(PerturbedMetric(FIELD, EPS), GAMMA, n=48)
    assert abs(geo48.length - perturbed_geodesic.length) < 1e-8


def test_jacobi_form_background():
    geo = closed_geodesic(hyperbolic_metric(), GAMMA, n=32)
    q = jacobi_form(hyperbolic_metric(), geo)
    assert q == pytest.approx(2.0 * math.tanh(geo.length / 2.0), abs=1e-6)


def test_jacobi_form_perturbed(perturbed_geodesic):
    q = jacobi_form(PerturbedMetric(FIELD, EPS), perturbed_geodesic)
    q0 = 2.0 * math.tanh(ELL / 2.0)
    assert q > 0.0
    assert abs(q - q0) < 0.05


def test_no_convergence_raises():
    with pytest.raises(ShootingError):
        closed_geodesic(PerturbedMetric(FIELD, EPS), GAMMA, n=32, max_iter=1)


# ---------------------------------------------------------------------------
# displacement function oracles


class TestDisplacementGradient:
    def test_vanishes_on_axis(self):
        z = AX.point(0.3)
        g = displacement_gradient(hyperbolic_metric(), [z.real, z.imag],
                                  GAMMA, n_steps=256)
        assert np.linalg.norm(g) < 1e-9

    def test_matches_fd_off_axis(self):
        bg = hyperbolic_metric()
        z = AX.point(0.3)
        x = np.array([z.real + 0.15, z.imag * 1.2])
        got = displacement_gradient(bg, x, GAMMA, n_steps=64)

        def disp(p):
            w = GAMMA(complex(p[0], p[1]))
            c = connect(bg, p[None, :], [[w.real, w.imag]], n_steps=64)
            return float(c.lengths[0])

        h = 1e-5
        fd = np.empty(2)
        for k in range(2):
            xp, xm = x.copy(), x.copy()
            xp[k] += h
            xm[k] -= h
            fd[k] = (disp(xp) - disp(xm)) / (2.0 * h)
        assert np.max(np.abs(got - fd)) < 1e-6

    def test_tiny_eps_continuity(self):
        z = AX.point(0.3)
        x = np.array([z.real + 0.15, z.imag * 1.2])
        g0 = displacement_gradient(hyperbolic_metric(), x, GAMMA)
        g1 = displacement_gradient(PerturbedMetric(FIELD, 1e-8), x, GAMMA)
        assert np.max(np.abs(g1 - g0)) < 1e-6


def test_jacobi_hessian_matches_displacement_fd(perturbed_geodesic):
    met = PerturbedMetric(FIELD, EPS)
    geod = perturbed_geodesic
    h = jacobi_hessian(met, geod)
    assert h.shape == (1, 1)
    assert np.max(np.abs(h - h.T)) < 1e-10
    assert h[0, 0] > 0.0

    # second difference of the displacement function along the metric
    # unit normal; the same shot discretization on all three stencil
    # points cancels its bias
    x0 = geod.vertices[0]
    g0 = met.matrix(x0[0], x0[1])
    tangent = geod.v_starts[0] / geod.segment_lengths[0]
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    normal = np.linalg.solve(g0, rot @ tangent)
    normal /= math.sqrt(float(normal @ g0 @ normal))

    s = 3e-3
    base = np.array([x0 - s * normal, x0, x0 + s * normal])
    imgs = np.array([(GAMMA(complex(p[0], p[1])).real,
                      GAMMA(complex(p[0], p[1])).imag) for p in base])
    con = connect(met, base, imgs, n_steps=64)
    fd = (con.lengths[0] - 2.0 * con.lengths[1] + con.lengths[2]) / s ** 2
    assert fd == pytest.approx(h[0, 0], rel=1e-3)


# ---------------------------------------------------------------------------
# homotopy classes by word

GROUP = preset("one-cusp-genus-1")


class TestWordInterface:
    def test_generator_pair_word(self):
        geod = geodesic_in_class(hyperbolic_metric(), GROUP,
                                 HomotopyClass((1, 2)))
        assert geod.word == "1,2"
        assert geod.length == pytest.approx(1.9248473002384139, abs=1e-6)

    def test_doubled_word(self):
        # trace of the square from tr(M^2) = tr(M)^2 - 2 = 7
        geod = geodesic_in_class(hyperbolic_metric(), GROUP,
                                 HomotopyClass((1, 2, 1, 2)))
        assert geod.length == pytest.approx(2.0 * math.acosh(3.5), abs=1e-6)

    def test_parabolic_class_rejected(self):
        with pytest.raises(ValueError, match="not hyperbolic"):
            geodesic_in_class(hyperbolic_metric(), GROUP,
                              HomotopyClass((1, 2, -1, -2)))

    def test_bump_off_the_geodesic_leaves_length(self):
        m = GROUP.holonomy(HomotopyClass((1, 2)))
        ell = trace_length(m)
        far = ConformalBump(center=1.5 + 4.0j, radius=0.3, amplitude=1.0)
        fld = symmetrize_cyclic(far, m, ell)
        geod = geodesic_in_class(PerturbedMetric(fld, 1e-2), GROUP,
                                 HomotopyClass((1, 2)), n=32)
        # the metric is untouched in a tube around the axis, so the
        # length does not move at all, not just to second order
        assert abs(geod.length - ell) < 1e-9


class TestSpectrum:
    def test_five_shortest_against_trace_oracle(self):
        classes = GROUP.hyperbolic_classes(2, 5)
        assert len(classes) == 5
        table = marked_length_spectrum(hyperbolic_metric(), GROUP, classes)
        assert list(table) == [c.key() for c in classes]
        for cls in classes:
            want = trace_length(GROUP.holonomy(cls))
            assert table[cls.key()].length == pytest.approx(want, abs=1e-6)

    def test_inverse_class_same_length(self):
        m = GROUP.holonomy(HomotopyClass((1, 2)))
        ell = trace_length(m)
        bump = ConformalBump(center=axis(m).point(0.3), radius=0.6,
                             amplitude=1.0)
        met = PerturbedMetric(symmetrize_cyclic(bump, m, ell), 3e-3)
        cls = HomotopyClass((1, 2))
        table = marked_length_spectrum(met, GROUP, [cls, cls.inverse()],
                                       n=32)
        la = table[cls.key()].length
        lb = table[cls.inverse().key()].length
        assert abs(la - lb) < 1e-9
        assert abs(la - ell) > 1e-4   # the bump does move the length

    def test_conjugate_word_is_same_class(self):
        # conjugating a word lands in the same free homotopy class, so
        # the spectrum has a single entry for both spellings
        assert HomotopyClass((2, 1, 2, -2)).key() == HomotopyClass((1, 2)).key()

    def test_failures_aggregate_with_labels(self):
        bad = HomotopyClass((1, 2, -1, -2))
        with pytest.raises(ShootingError) as info:
            marked_length_spectrum(hyperbolic_metric(), GROUP,
                                   [HomotopyClass((1, 2)), bad])
        assert bad.key() in str(info.value)
        assert "not hyperbolic" in str(info.value)
        assert list(info.value.partial) == ["1,2"]


# ---------------------------------------------------------------------------
# solver properties


def test_deck_translated_initial_loop():
    h = GROUP.generators[1]
    conj = h @ GAMMA @ h.inverse()
    pts = initial_loop(GAMMA, 32)
    moved = h(pts[:, 0] + 1j * pts[:, 1])
    geod = closed_geodesic(hyperbolic_metric(), conj,
                           x0=np.column_stack([moved.real, moved.imag]))
    assert abs(geod.length - ELL) < 1e-9


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_uniqueness_from_random_initializations(perturbed_geodesic):
    rng = np.random.default_rng(7)
    base = initial_loop(GAMMA, 16)
    lens = []
    for _ in range(20):
        noise = rng.normal(scale=0.02, size=base.shape) * base[:, 1:2]
        geod = closed_geodesic(hyperbolic_metric(), GAMMA, x0=base + noise,
                               grad_tol=1e-6, certificate=False)
        lens.append(geod.length)
    assert np.ptp(lens) < 1e-8

    met = PerturbedMetric(FIELD, EPS)
    for _ in range(2):
        noise = rng.normal(scale=0.02, size=base.shape) * base[:, 1:2]
        geod = closed_geodesic(met, GAMMA, x0=base + noise,
                               grad_tol=1e-6, certificate=False)
        assert abs(geod.length - perturbed_geodesic.length) < 1e-8


def test_length_history_monotone(perturbed_geodesic):
    hist = np.array(perturbed_geodesic.length_history)
    assert len(hist) >= 2
    assert np.all(np.diff(hist) <= 1e-9)


def test_constant_speed(perturbed_geodesic):
    d = perturbed_geodesic.segment_lengths
    assert np.ptp(d) < 1e-8 * float(np.mean(d))
