import math

import numpy as np
import pytest

from nullkit import fibre, grw
from nullkit.errors import ChartDomainError, QuadratureRangeError


def minkowski(n=4):
    return grw.GrwSpace(grw.WarpingProfile("1"), fibre.euclidean(n - 1))


def de_sitter(n=4):
    return grw.GrwSpace(grw.WarpingProfile("cosh(t)"), fibre.sphere(n - 1))


def expanding_hyperbolic(n=4):
    return grw.GrwSpace(grw.WarpingProfile("exp(t)"), fibre.hyperbolic(n - 1))


# ---------------------------------------------------------------------------
# warping profile quadratures
# ---------------------------------------------------------------------------

def test_quadrature_constant_profile():
    w = grw.WarpingProfile("1")
    assert w.A(2.5, 1.0) == pytest.approx(1.5, abs=1e-14)
    assert w.C(2.5, 1.0) == pytest.approx(1.5, abs=1e-14)
    assert w.invert_A(1.5, 1.0) == pytest.approx(2.5, abs=1e-12)


def test_quadrature_cosh_closed_forms():
    w = grw.WarpingProfile("cosh(t)")
    assert w.exact
    # oracle: sinh is the antiderivative of cosh
    sigma = 2.0
    assert w.invert_A(sigma, 0.0) == pytest.approx(math.asinh(sigma), abs=1e-12)
    # C from 0 is the Gudermannian
    assert w.C(1.3, 0.0) == pytest.approx(2 * math.atan(math.tanh(0.65)), abs=1e-14)


def test_quadrature_cosh_invert_C_quarter_pi():
    # solve 2 atan(tanh(t/2)) = pi/4 -> t_c = 2 atanh(tan(pi/8))
    w = grw.WarpingProfile("cosh(t)")
    t_c = w.invert_C(math.pi / 4, 0.0)
    assert t_c == pytest.approx(2 * math.atanh(math.tan(math.pi / 8)), abs=1e-12)
    assert t_c == pytest.approx(0.881374, abs=1e-6)


def test_quadrature_exp_profile():
    w = grw.WarpingProfile("exp(t)")
    assert w.A(1.0, 0.0) == pytest.approx(math.e - 1, abs=1e-12)
    assert w.C(1.0, 0.0) == pytest.approx(1 - math.exp(-1), abs=1e-12)


def test_quadrature_roundtrip_and_range_error():
    w = grw.WarpingProfile("cosh(t)")
    for v in np.linspace(-1.4, 1.4, 11):
        t = w.invert_C(v, 0.0)
        assert abs(w.C(t, 0.0) - v) <= 1e-10 * (1 + abs(v))
    with pytest.raises(QuadratureRangeError):
        w.invert_C(2.0, 0.0)  # total range of C is (-pi/2, pi/2)


def test_quadrature_numeric_fallback_matches_exact():
    # 1 - cos(t) has no catalog entry; compare against the closed forms
    w = grw.WarpingProfile("1 - cos(t)", interval=(0.0, 2 * math.pi))
    assert not w.exact
    a, b = 2.0, 4.0
    want_A = (a - math.sin(a)) * 0 + ((b - math.sin(b)) - (a - math.sin(a)))
    assert w.A(b, a) == pytest.approx(want_A, abs=1e-10)
    want_C = (-1 / math.tan(b / 2)) - (-1 / math.tan(a / 2))
    assert w.C(b, a) == pytest.approx(want_C, abs=1e-10)
    t = w.invert_C(0.7, 2.0)
    assert w.C(t, 2.0) == pytest.approx(0.7, abs=1e-10)


def test_c_range_de_sitter_is_pi():
    w = grw.WarpingProfile("cosh(t)")
    lo, hi = w.C_range(0.0)
    assert hi - lo == pytest.approx(math.pi, abs=1e-12)


# ---------------------------------------------------------------------------
# metric evaluation
# ---------------------------------------------------------------------------

def test_metric_eval_time_direction():
    M = de_sitter()
    p = M.point(0.4, [1.0, 0.7, 0.2])
    dt_vec = M.tangent(p, 1.0, [0, 0, 0])
    assert M.metric_eval(p, dt_vec, dt_vec) == pytest.approx(-1.0)
    zeta = M.conformal_field(p)
    assert M.metric_eval(p, zeta, zeta) == pytest.approx(-math.cosh(0.4) ** 2)
    fib = M.tangent(p, 0.0, [1, 0, 0])
    assert M.metric_eval(p, dt_vec, fib) == 0.0


def test_metric_eval_outside_interval():
    M = grw.GrwSpace(grw.WarpingProfile("cosh(t)", interval=(-1, 1)),
                     fibre.euclidean(2))
    with pytest.raises(ChartDomainError):
        M.point(2.0, [0, 0])


# ---------------------------------------------------------------------------
# null geodesics: quadrature construction
# ---------------------------------------------------------------------------

def test_null_geodesic_minkowski_straight():
    M = minkowski()
    rec = grw.null_geodesic_quadrature(M, 0.0, [0.0, 0.0, 0.0], [1, 0, 0],
                                       s_max=3.0)
    p = rec.point(3.0)
    assert p.t == pytest.approx(3.0, abs=1e-12)
    assert np.allclose(p.x.coords, [3.0, 0, 0], atol=1e-12)


def test_null_geodesic_nullity_and_zeta_product():
    for M, x0 in [(de_sitter(), [1.2, 0.8, 0.3]),
                  (expanding_hyperbolic(), [1.0, 0.9, 0.4]),
                  (minkowski(), [0.5, 0.5, 0.5])]:
        gf = M.fibre.metric_matrix(np.asarray(x0))
        u = np.array([1.0, 0.4, -0.2])
        u = u / math.sqrt(u @ gf @ u)
        for orientation in ("future", "past"):
            rec = grw.null_geodesic_quadrature(M, 0.1, x0, u, s_max=0.8,
                                               orientation=orientation)
            expected = -1.0 if orientation == "future" else 1.0
            for s in (0.0, 0.3, 0.8):
                p = rec.point(s)
                v = rec.velocity(s)
                assert abs(M.metric_eval(p, v, v)) <= 1e-8
                zeta = M.conformal_field(p)
                assert M.metric_eval(p, v, zeta) == pytest.approx(expected, abs=1e-8)


def test_null_geodesic_alpha_de_sitter_closed_form():
    # f = cosh from t=0: alpha(s) = asinh(s), fibre distance = C(alpha(s))
    M = de_sitter()
    rec = grw.null_geodesic_quadrature(M, 0.0, [1.0, 0.8, 0.2], [1, 0, 0],
                                       s_max=2.0)
    for s in (0.4, 1.1, 2.0):
        assert rec.alpha(s) == pytest.approx(math.asinh(s), abs=1e-11)
        want_b = 2 * math.atan(math.tanh(math.asinh(s) / 2))
        assert rec.b(s) == pytest.approx(want_b, abs=1e-11)


def test_null_geodesic_quadrature_vs_numeric_oracle():
    # full geodesic-equation integration agrees with the quadrature form
    cases = [
        (minkowski(), [0.5, 0.2, 0.1], [0.6, 0.8, 0.0]),
        (de_sitter(), [1.1, 0.9, 0.4], [1.0, 0.3, -0.1]),
        (expanding_hyperbolic(), [1.2, 1.0, 0.2], [0.8, 0.1, 0.3]),
    ]
    for M, x0, u_raw in cases:
        gf = M.fibre.metric_matrix(np.asarray(x0))
        u = np.asarray(u_raw) / math.sqrt(np.asarray(u_raw) @ gf @ np.asarray(u_raw))
        rec = grw.null_geodesic_quadrature(M, 0.2, x0, u, s_max=1.0)
        v0 = rec.velocity(0.0)
        numeric = grw.null_geodesic_numeric(M, rec.point(0.0), v0, 1.0)
        for s in (0.25, 0.6, 1.0):
            assert np.allclose(rec.chart_point(s), numeric.point(s), atol=1e-6)


def test_null_geodesic_reversal():
    M = de_sitter()
    rec = grw.null_geodesic_quadrature(M, 0.3, [1.0, 1.1, 0.2], [0, 1, 0],
                                       s_max=0.6)
    p0, v0 = rec.point(0.0), rec.velocity(0.0)
    reverse = M.tangent(p0, -v0.dt, -v0.dx.components)
    back = grw.null_geodesic_numeric(M, p0, reverse, 0.6)
    fwd = grw.null_geodesic_numeric(M, p0, v0, 0.6)
    # reversing the initial vector traces the same set with flipped parameter
    mid_f = fwd.point(0.4)
    mid_b = back.point(0.4)
    assert mid_f[0] > p0.t > mid_b[0]


def test_null_geodesic_exits_interval():
    M = grw.GrwSpace(grw.WarpingProfile("1", interval=(-1.0, 1.0)),
                     fibre.euclidean(2))
    rec = grw.null_geodesic_quadrature(M, 0.0, [0.0, 0.0], [1, 0], s_max=0.9)
    with pytest.raises((ChartDomainError, QuadratureRangeError)):
        grw.null_geodesic_quadrature(M, 0.0, [0.0, 0.0], [1, 0], s_max=1.5).point(1.4)


# ---------------------------------------------------------------------------
# null sectional curvature
# ---------------------------------------------------------------------------

def test_null_sectional_minkowski_zero():
    M = minkowski()
    p = M.point(0.0, [1.0, 0.0, 0.0])
    assert grw.null_sectional_curvature(M, p, [1, 0, 0], [0, 1, 0]) == pytest.approx(0.0)


def test_null_sectional_einstein_static():
    M = grw.GrwSpace(grw.WarpingProfile("1"), fibre.sphere(3))
    p = M.point(0.0, [1.2, 1.0, 0.3])
    gf = M.fibre.metric_matrix(p.x.coords)
    v = np.array([1.0, 0, 0])
    w = np.array([0, 1.0, 0]) / math.sqrt(gf[1, 1])
    assert grw.null_sectional_curvature(M, p, v, w) == pytest.approx(1.0)


def test_null_sectional_de_sitter_zero():
    M = de_sitter()
    p = M.point(0.7, [1.2, 1.0, 0.3])
    gf = M.fibre.metric_matrix(p.x.coords)
    v = np.array([1.0, 0, 0])
    w = np.array([0, 1.0, 0]) / math.sqrt(gf[1, 1])
    # cosh^2 - sinh^2 = 1 cancels the fibre curvature
    assert grw.null_sectional_curvature(M, p, v, w) == pytest.approx(0.0, abs=1e-12)


def test_null_sectional_formula_vs_tensor():
    cases = [
        (minkowski(), [0.6, 0.1, 0.4]),
        (de_sitter(), [1.2, 1.0, 0.3]),
        (grw.GrwSpace(grw.WarpingProfile("1"), fibre.sphere(3)), [1.0, 0.9, 0.2]),
        (expanding_hyperbolic(), [1.3, 0.9, 0.1]),
    ]
    for M, x0 in cases:
        p = M.point(0.45, x0)
        gf = M.fibre.metric_matrix(p.x.coords)
        v = np.array([1.0, 0.0, 0.0]) / math.sqrt(gf[0, 0])
        w = np.array([0.0, 1.0, 0.0]) / math.sqrt(gf[1, 1])
        a = grw.null_sectional_curvature(M, p, v, w)
        b = grw.null_sectional_tensor(M, p, v, w)
        assert abs(a - b) <= 1e-5 * (1 + abs(a))


def test_null_sectional_rejects_non_orthonormal():
    M = minkowski()
    p = M.point(0.0, [0, 0, 0])
    with pytest.raises(ValueError):
        grw.null_sectional_curvature(M, p, [2, 0, 0], [0, 1, 0])


# ---------------------------------------------------------------------------
# conformal field
# ---------------------------------------------------------------------------

def test_conformal_killing_for_static_profile():
    M = grw.GrwSpace(grw.WarpingProfile("1"), fibre.sphere(2))
    grid = [[0.2, 1.0, 0.4], [0.5, 0.8, 1.0]]
    assert grw.conformal_check(M, grid) <= 1e-9


@pytest.mark.parametrize("profile", ["cosh(t)", "exp(t)"])
def test_conformal_residual_small(profile):
    M = grw.GrwSpace(grw.WarpingProfile(profile), fibre.sphere(2))
    grid = [[0.2, 1.0, 0.4], [0.8, 0.9, 1.1], [-0.5, 1.2, 0.2]]
    assert grw.conformal_check(M, grid) <= 1e-6
