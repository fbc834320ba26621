import math

import numpy as np
import pytest

from nullkit import cone, fibre, grw, nullhyp, twist
from nullkit.errors import HypothesisError, UmbilicityError
from nullkit.fields import ScalarField


def minkowski_cone_graph(n=4):
    M = grw.GrwSpace(grw.WarpingProfile("1"), fibre.euclidean(n - 1))
    c = cone.NullCone(M, 0.0, M.fibre.point([0.0] * (n - 1)), "future",
                      d_max=3.0)
    return cone.cone_as_graph(c), c


def einstein_cone_graph():
    # d_max below π/2 keeps the working annulus clear of the chart poles
    M = grw.GrwSpace(grw.WarpingProfile("1"), fibre.sphere(3))
    x_star = M.fibre.point([math.pi / 2, math.pi / 2, 0.0])
    c = cone.NullCone(M, 0.0, x_star, "future", d_max=1.4)
    return cone.cone_as_graph(c), c


# ---------------------------------------------------------------------------
# reconstruction
# ---------------------------------------------------------------------------

def test_reconstruct_minkowski_cone_mu():
    L, _ = minkowski_cone_graph()
    x0 = np.array([0.6, 0.6, 0.6])
    delta = float(np.linalg.norm(x0))
    recon = twist.reconstruct_decomposition(L, (delta, x0), s_halfwidth=0.3,
                                            z_samples=3)
    err = recon.mu_max_rel_error(lambda s, z: (s + delta) / delta)
    assert err <= 1e-4
    assert recon.decomposition.normalization_residual() <= 1e-8
    assert recon.graph_residual <= 1e-6
    assert recon.leaf_metric_residual <= 1e-4


def test_reconstruct_einstein_cone_mu():
    L, c = einstein_cone_graph()
    delta = 0.8
    # anchor along the azimuthal great circle from the vertex
    x0 = np.array([math.pi / 2, math.pi / 2, delta])
    recon = twist.reconstruct_decomposition(L, (delta, x0), s_halfwidth=0.3,
                                            z_samples=3)
    err = recon.mu_max_rel_error(
        lambda s, z: math.sin(s + delta) / math.sin(delta))
    assert err <= 1e-4
    assert recon.decomposition.normalization_residual() <= 1e-8
    assert recon.diagnostics["z_spread"] <= 1e-5  # round fibre: warped, not twisted


def test_reconstruct_flat_hyperplane_mu_is_one():
    M = grw.GrwSpace(grw.WarpingProfile("1"), fibre.euclidean(3))
    h = ScalarField.from_expression("x0", ["x0", "x1", "x2"])
    L = nullhyp.GraphHypersurface(M, [(-1.0, 1.0)] * 3, h)
    recon = twist.reconstruct_decomposition(L, (0.0, np.zeros(3)),
                                            s_halfwidth=0.4)
    assert recon.mu_max_rel_error(lambda s, z: 1.0) <= 1e-8


def test_reconstruct_refuses_non_umbilic():
    M = grw.GrwSpace(grw.WarpingProfile("1"), fibre.euclidean(3))

    def value(c):
        return float(np.linalg.norm(c)) + 1e-2 * math.exp(
            -float((c - 1.0) @ (c - 1.0)) / 0.1)

    h = ScalarField.from_callable(value, 3)
    L = nullhyp.GraphHypersurface(M, [(0.6, 1.4)] * 3, h)
    # off the bump center, where the perturbation is anisotropic
    with pytest.raises(UmbilicityError):
        twist.reconstruct_decomposition(L, (None, np.array([0.9, 1.15, 1.0])))


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def make_twisted_space(profile, interval, leaf, mu):
    F = fibre.twisted(interval, leaf, mu)
    return grw.GrwSpace(grw.WarpingProfile(profile), F)


def test_construct_flat_product_is_geodesic():
    M = make_twisted_space("1", (-2.0, 2.0), fibre.sphere(2, radius=1.0), "1 + 0*s")
    L = twist.construct_hypersurface(M, t0=0.0)
    grid = L.grid(3)
    assert nullhyp.validate_null_graph(L, grid).max_residual <= 1e-8
    for c in grid:
        assert abs(nullhyp.mean_curvature(L, c)) <= 1e-6


def test_construct_minkowski_cone_decomposition():
    delta = 1.0
    M = make_twisted_space("1", (-delta, 6.0), fibre.sphere(2, radius=delta),
                           f"(s + {delta})/{delta}")
    L = twist.construct_hypersurface(M, t0=0.0, s_window=(-0.6, 2.0))
    grid = L.grid(3)
    assert nullhyp.validate_null_graph(L, grid).max_residual <= 1e-8
    report = nullhyp.umbilicity_test(L, grid, tol=1e-6)
    assert report.passed
    for c in grid:
        want = twist.construct_mean_curvature_formula(M, 0.0, c)
        got = nullhyp.mean_curvature(L, c)
        assert abs(got - want) <= 1e-5 * (1 + abs(want))
        assert want == pytest.approx(2.0 / (c[0] + delta), rel=1e-9)


def test_construct_round_fibre_cone_decomposition():
    delta = 0.8
    M = make_twisted_space(
        "1", (-delta, math.pi - delta),
        fibre.sphere(2, radius=math.sin(delta)),
        f"sin(s + {delta})/sin({delta})")
    L = twist.construct_hypersurface(M, t0=0.0, s_window=(-0.5, 1.2))
    grid = L.grid(3)
    assert nullhyp.validate_null_graph(L, grid).max_residual <= 1e-8
    assert nullhyp.umbilicity_test(L, grid, tol=1e-6).passed
    for c in grid:
        got = nullhyp.mean_curvature(L, c)
        assert got == pytest.approx(2.0 / math.tan(c[0] + delta), rel=1e-5)


def test_construct_cosh_profile_symmetric_mu_is_geodesic():
    # f = cosh with mu = cos(s): H vanishes after s = C(t)
    M = make_twisted_space("cosh(t)", (-math.pi / 2, math.pi / 2),
                           fibre.sphere(2, radius=1.0), "cos(s)")
    L = twist.construct_hypersurface(M, t0=0.0, s_window=(-1.1, 1.1))
    grid = L.grid(3)
    assert nullhyp.validate_null_graph(L, grid).max_residual <= 1e-8
    for c in grid:
        assert abs(nullhyp.mean_curvature(L, c)) <= 1e-6


def test_roundtrip_construct_then_reconstruct():
    delta = 1.0
    mu_text = f"(s + {delta})/{delta}"
    M = make_twisted_space("1", (-delta, 6.0), fibre.sphere(2, radius=delta),
                           mu_text)
    L = twist.construct_hypersurface(M, t0=0.25, s_window=(-0.6, 2.0))
    anchor = np.array([0.0, math.pi / 2, 0.0])
    recon = twist.reconstruct_decomposition(L, (0.25, anchor), s_halfwidth=0.3)
    err = recon.mu_max_rel_error(lambda s, z: (s + delta) / delta)
    assert err <= 1e-4
    assert recon.graph_residual <= 1e-6


def test_roundtrip_reconstruct_then_construct_einstein_cone():
    # the reconstructed coordinates must present the cone as {s = C(t; t0)}
    L, _ = einstein_cone_graph()
    delta = 0.9
    x0 = np.array([math.pi / 2, math.pi / 2, delta])
    recon = twist.reconstruct_decomposition(L, (delta, x0), s_halfwidth=0.35)
    assert recon.graph_residual <= 1e-6


# ---------------------------------------------------------------------------
# duality
# ---------------------------------------------------------------------------

def test_dual_minkowski_cone_is_reflected_cone():
    L, _ = minkowski_cone_graph()
    t0 = 1.1
    x0 = np.array([t0, 0.0, 0.0])  # on the cone: |x0| = t0
    dual = twist.dual_hypersurface(L, (t0, x0))
    for c in L.grid(3):
        if not dual.contains(c):
            continue
        want = 2 * t0 - float(np.linalg.norm(c))
        assert dual.h(c) == pytest.approx(want, abs=1e-7)


def test_dual_is_null_and_umbilic():
    L, _ = einstein_cone_graph()
    delta = 0.8
    x0 = np.array([math.pi / 2, math.pi / 2, delta])
    dual = twist.dual_hypersurface(L, (delta, x0))
    grid = [c for c in L.grid(3) if dual.contains(c)]
    assert nullhyp.validate_null_graph(dual, grid).max_residual <= 1e-8
    assert nullhyp.umbilicity_test(dual, grid, tol=1e-6).passed


def test_dual_mean_curvature_formula():
    L, _ = einstein_cone_graph()
    delta = 0.8
    x0 = np.array([math.pi / 2, math.pi / 2, delta])
    dual = twist.dual_hypersurface(L, (delta, x0))
    for c in [np.array([math.pi / 2, math.pi / 2, 0.5]),
              np.array([math.pi / 2, 1.2, 0.8])]:
        if not dual.contains(c):
            continue
        want = twist.dual_mean_curvature_formula(L, dual, c)
        got = nullhyp.mean_curvature(dual, c)
        assert abs(got - want) <= 1e-5 * (1 + abs(want))


def test_dual_involution():
    L, _ = einstein_cone_graph()
    delta = 0.8
    x0 = np.array([math.pi / 2, math.pi / 2, delta])
    dual = twist.dual_hypersurface(L, (delta, x0))
    ddual = twist.dual_hypersurface(dual, (delta, x0))
    for c in L.grid(3):
        if ddual.contains(c):
            assert ddual.h(c) == pytest.approx(L.h(c), abs=1e-6)


# ---------------------------------------------------------------------------
# the cosh-warped sphere trichotomy
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def cosh_sphere_space():
    return grw.GrwSpace(grw.WarpingProfile("cosh(t)"), fibre.sphere(3))


def test_classification_critical_time(cosh_sphere_space):
    w = cosh_sphere_space.warping
    t_c = w.invert_C(math.pi / 4, 0.0)
    assert t_c == pytest.approx(0.881374, abs=1e-6)


def test_classification_past_cone(cosh_sphere_space):
    x_star = [math.pi / 2, math.pi / 2, 0.0]
    result = twist.classify_cosh_sphere_dual(cosh_sphere_space, 0.0, x_star, 0.4)
    assert result.kind == "past_cone"
    assert result.residual <= 1e-6
    w = cosh_sphere_space.warping
    want_ts = w.invert_C(2 * w.C(0.4, 0.0), 0.0)
    assert result.vertex_time == pytest.approx(want_ts, abs=1e-10)


def test_classification_future_cone_antipode(cosh_sphere_space):
    x_star = [math.pi / 2, math.pi / 2, 0.0]
    result = twist.classify_cosh_sphere_dual(cosh_sphere_space, 0.0, x_star, 1.5)
    assert result.kind == "future_cone_antipode"
    assert result.residual <= 1e-6


def test_classification_totally_geodesic(cosh_sphere_space):
    x_star = [math.pi / 2, math.pi / 2, 0.0]
    t_c = cosh_sphere_space.warping.invert_C(math.pi / 4, 0.0)
    result = twist.classify_cosh_sphere_dual(cosh_sphere_space, 0.0, x_star, t_c)
    assert result.kind == "totally_geodesic"
    assert result.residual <= 1e-6


def test_classification_boundary_report(cosh_sphere_space):
    x_star = [math.pi / 2, math.pi / 2, 0.0]
    t_c = cosh_sphere_space.warping.invert_C(math.pi / 4, 0.0)
    result = twist.classify_cosh_sphere_dual(cosh_sphere_space, 0.0, x_star,
                                             t_c + 1e-8)
    assert result.kind == "boundary"


# ---------------------------------------------------------------------------
# obstruction scan
# ---------------------------------------------------------------------------

def test_obstruction_product_of_spheres():
    F = fibre.product([fibre.sphere(2), fibre.sphere(2)])
    x = F.point([0.9, 0.3, 1.2, -0.4])
    report = twist.obstruction_scan(F, x.coords, directions=200, seed=5)
    assert report.min_spread >= 0.5


def test_obstruction_round_sphere_no_obstruction():
    F = fibre.sphere(3)
    x = F.point([1.0, 1.1, 0.4])
    report = twist.obstruction_scan(F, x.coords, directions=50, seed=6)
    assert report.min_spread <= 1e-9


def test_obstruction_twisted_base_direction_passes():
    leaf = fibre.euclidean(2)
    F = fibre.twisted((-2.0, 2.0), leaf, "exp(s) + z1^2 + z2^2")
    for coords in ([0.2, 0.4, -0.6], [0.0, 0.1, 0.3]):
        spread = twist.direction_spread(F, np.asarray(coords),
                                        np.array([1.0, 0.0, 0.0]))
        assert abs(spread) <= 1e-6


def test_obstruction_rejects_low_dimension():
    with pytest.raises(HypothesisError):
        twist.obstruction_scan(fibre.euclidean(2), np.zeros(2))


# ---------------------------------------------------------------------------
# constant-curvature probe
# ---------------------------------------------------------------------------

def test_probe_sine_is_constant_curvature():
    flag, residual = twist.sphere_warped_uniqueness_probe(
        "sin(s + 0.3)", (-0.2, 1.2))
    assert flag and residual <= 1e-10


def test_probe_cosh_is_not():
    flag, residual = twist.sphere_warped_uniqueness_probe("cosh(s)", (-1.0, 1.0))
    assert not flag
    assert residual == pytest.approx(2.0, abs=1e-10)


def test_probe_linear_is_flat():
    flag, _ = twist.sphere_warped_uniqueness_probe("s + 1", (-0.5, 3.0))
    assert flag


# ---------------------------------------------------------------------------
# sphere-fibre classification
# ---------------------------------------------------------------------------

def test_classify_recovers_einstein_cone_vertex():
    L, c = einstein_cone_graph()
    anchor = np.array([math.pi / 2, math.pi / 2, 0.8])
    verdict = cone.classify_umbilic_sphere_fibre(L, anchor=anchor)
    assert verdict.contained
    assert verdict.vertex_estimate.t == pytest.approx(0.0, abs=1e-5)
    d = L.space.fibre.distance(verdict.vertex_estimate.x, c.x_star)
    assert d <= 1e-5


def test_classify_refuses_when_reach_is_pi():
    M = grw.GrwSpace(grw.WarpingProfile("cosh(t)"), fibre.sphere(3))
    x_star = M.fibre.point([math.pi / 2, math.pi / 2, 0.0])
    c = cone.NullCone(M, 0.0, x_star, "future")
    L = cone.cone_as_graph(c)
    with pytest.raises(HypothesisError):
        cone.classify_umbilic_sphere_fibre(L)
